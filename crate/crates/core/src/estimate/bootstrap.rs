//! Percentile bootstrap over individuals resampled within each cluster-period.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::simulate::{CellSummary, CellTable, TrialDataset};

use super::{FitOptions, FitResult, ModelFitter};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Two-sided coverage level, e.g. `0.95`.
    pub level: f64,
    pub seed: u64,
    /// Stream path prefix; resample `b` uses `path ++ [b]`.
    pub path: Vec<u64>,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, level: f64, seed: u64) -> Self {
        Self {
            replicates,
            level,
            seed,
            path: vec![rng::BOOTSTRAP],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig("bootstrap needs at least 2 resamples".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// `Δ̂` of every successful resample, in resample order.
    pub estimates: Vec<Vec<f64>>,
    pub failures: usize,
    pub intervals: Vec<(f64, f64)>,
    pub sd: Vec<f64>,
}

impl BootstrapSummary {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / (self.failures + self.estimates.len()) as f64
    }

    /// Copies the intervals and bootstrap SDs into `fit`.
    pub fn apply(&self, fit: &mut FitResult) {
        for (k, est) in fit.estimands.iter_mut().enumerate() {
            est.ci_low = Some(self.intervals[k].0);
            est.ci_high = Some(self.intervals[k].1);
            est.bootstrap_sd = Some(self.sd[k]);
        }
    }
}

/// Type-1 empirical quantile: the order statistic with index `⌈qB⌉`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let b = sorted.len();
    let idx = ((q * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[idx - 1]
}

/// Draws resampled cell tables from a fixed dataset.
pub struct Resampler {
    periods: usize,
    clusters: usize,
    /// Per cell: original mean and outcomes centered on it.
    cells: Vec<(f64, Vec<f64>)>,
}

impl Resampler {
    pub fn new(dataset: &TrialDataset) -> Self {
        let cells = dataset
            .cells()
            .map(|values| {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                (mean, values.iter().map(|y| y - mean).collect())
            })
            .collect();
        Self {
            periods: dataset.periods(),
            clusters: dataset.clusters(),
            cells,
        }
    }

    pub fn draw<R: rand::Rng>(&self, rng: &mut R) -> CellTable {
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(c, (mean, centered))| {
                let n = centered.len();
                let (mut s, mut ss) = (0.0, 0.0);
                for _ in 0..n {
                    let z = centered[rng::index(rng, n)];
                    s += z;
                    ss += z * z;
                }
                let nf = n as f64;
                CellSummary {
                    cluster: c / self.periods + 1,
                    period: c % self.periods + 1,
                    n,
                    mean: mean + s / nf,
                    ssw: (ss - s * s / nf).max(0.0),
                }
            })
            .collect();
        CellTable {
            periods: self.periods,
            clusters: self.clusters,
            cells,
        }
    }
}

/// Refits `fitter` to `opts.replicates` resamples of `dataset`, warm-started
/// at `fit`, and forms percentile intervals for every `Δ_k`.
pub fn bootstrap(
    dataset: &TrialDataset,
    fitter: &ModelFitter,
    fit: &FitResult,
    opts: &BootstrapOptions,
) -> Result<BootstrapSummary> {
    opts.validate()?;
    let resampler = Resampler::new(dataset);
    let fit_opts = FitOptions {
        start: Some(fit.log_ratios.clone()),
        restarts: 1,
        ..FitOptions::default()
    };
    let draws: Vec<Option<Vec<f64>>> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let mut path = opts.path.clone();
            path.push(b as u64);
            let mut r = rng::stream(opts.seed, &path);
            let table = resampler.draw(&mut r);
            fitter.fit(&table, &fit_opts).ok().map(|f| f.estimates())
        })
        .collect();
    summarize_draws(draws, opts.level, fit.estimands.len())
}

pub(crate) fn summarize_draws(draws: Vec<Option<Vec<f64>>>, level: f64, m: usize) -> Result<BootstrapSummary> {
    let failures = draws.iter().filter(|d| d.is_none()).count();
    let estimates: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    if estimates.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} bootstrap refits succeeded",
            estimates.len()
        )));
    }
    let alpha = 1.0 - level;
    let mut intervals = Vec::with_capacity(m);
    let mut sd = Vec::with_capacity(m);
    for k in 0..m {
        let mut col: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        sd.push(var.sqrt());
        col.sort_by(f64::total_cmp);
        intervals.push((percentile(&col, alpha / 2.0), percentile(&col, 1.0 - alpha / 2.0)));
    }
    Ok(BootstrapSummary {
        estimates,
        failures,
        intervals,
        sd,
    })
}
