//! A synthetic two-intervention factorial trial at the scale of a 10-unit,
//! 10-period ICU study: unequal cluster-period sizes around 35 and no
//! treatment effect.

use crate::curves::{CurveSpec, EffectCurve};
use crate::design::DesignLayout;
use crate::error::Result;
use crate::rng;
use crate::simulate::{linear_time_effects, CellSizes, SimulationConfig};
use crate::variance::VarianceComponents;

pub const PERIODS: usize = 10;
pub const CLUSTERS: usize = 10;
pub const MIN_SIZE: usize = 25;
pub const MAX_SIZE: usize = 45;

/// Start periods of the two interventions, one row per cluster.
pub fn layout() -> Result<DesignLayout> {
    let starts = [
        [Some(2), Some(4)],
        [Some(4), Some(2)],
        [Some(3), Some(6)],
        [Some(6), Some(3)],
        [Some(4), Some(7)],
        [Some(7), Some(5)],
        [Some(6), Some(9)],
        [Some(9), Some(7)],
        [Some(8), None],
        [None, Some(9)],
    ];
    DesignLayout::custom(PERIODS, 2, starts.iter().map(|r| r.to_vec()).collect())
}

/// Cluster-period sizes drawn uniformly from `MIN_SIZE..=MAX_SIZE`.
pub fn sizes(seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng::stream(seed, &[rng::FIXTURE]);
    (0..CLUSTERS)
        .map(|_| {
            (0..PERIODS)
                .map(|_| MIN_SIZE + rng::index(&mut r, MAX_SIZE - MIN_SIZE + 1))
                .collect()
        })
        .collect()
}

/// Outcomes on a length-of-stay scale (days): flat period effects near 10,
/// `σ²_α = 1`, `σ²_ε = 25`, and zero effect for both interventions.
pub fn config(seed: u64) -> Result<SimulationConfig> {
    let curve = EffectCurve::from_specs(PERIODS, &[CurveSpec::Constant { average: 0.0 }; 2])?;
    let cfg = SimulationConfig {
        layout: layout()?,
        curve,
        beta: linear_time_effects(PERIODS, 10.0, 10.5),
        vc: VarianceComponents::new(1.0, 25.0)?,
        sizes: CellSizes::PerCell(sizes(seed)),
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}
