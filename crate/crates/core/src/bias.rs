//! Expectation of the constant-effect GLS estimator when the true effects vary
//! with exposure time: `E(θ̂) = Hδ`.

use std::io::Write;

use serde::Serialize;

use crate::curves::{CurveSpec, EffectCurve};
use crate::design::{DesignLayout, LayoutKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::variance::VarianceComponents;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSource {
    General,
    ConcurrentClosedForm,
    FactorialBlock,
}

/// `m × m(T−1)` matrix mapping stacked exposure-time effects to the expected
/// constant-effect estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<S = f64> {
    pub h: Matrix<S>,
    pub source: WeightSource,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightMatrixJson {
    pub source: WeightSource,
    pub rows: Vec<Vec<f64>>,
}

impl<S: Scalar> WeightMatrix<S> {
    pub fn interventions(&self) -> usize {
        self.h.nrows()
    }

    pub fn exposures(&self) -> usize {
        self.h.ncols() / self.h.nrows()
    }

    /// `block_sums[k][k']`: sum of row `k` over the columns of intervention `k'`.
    /// Constant effects are recovered exactly iff this is the identity.
    pub fn block_sums(&self) -> Vec<Vec<S>> {
        let q = self.exposures();
        (0..self.interventions())
            .map(|k| {
                (0..self.interventions())
                    .map(|kk| {
                        (0..q).fold(S::zero(), |acc, e| acc + self.h[(k, kk * q + e)].clone())
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest deviation of the block sums from the identity.
    pub fn block_sum_defect(&self) -> f64 {
        self.block_sums()
            .iter()
            .enumerate()
            .flat_map(|(k, row)| {
                row.iter().enumerate().map(move |(kk, s)| {
                    let target = if k == kk { 1.0 } else { 0.0 };
                    (s.to_f64() - target).abs()
                })
            })
            .fold(0.0, f64::max)
    }

    /// For two interventions: whether `H = (h₁′ h₂′; h₂′ h₁′)` up to `tol`.
    pub fn is_block_symmetric(&self, tol: f64) -> bool {
        if self.interventions() != 2 {
            return false;
        }
        let q = self.exposures();
        (0..q).all(|e| {
            (self.h[(0, e)].to_f64() - self.h[(1, q + e)].to_f64()).abs() <= tol
                && (self.h[(0, q + e)].to_f64() - self.h[(1, e)].to_f64()).abs() <= tol
        })
    }

    pub fn to_json(&self) -> WeightMatrixJson {
        WeightMatrixJson {
            source: self.source,
            rows: self.h.to_f64().to_rows(),
        }
    }
}

/// `b = σ²_α/(Tσ²_α + σ²_ε/n)`.
pub fn design_scalar<S: Scalar>(vc: &VarianceComponents<S>, n: usize, periods: usize) -> Result<S> {
    vc.design_scalar(n, periods)
}

/// `H` for equal cluster-period sizes, computed from the layout.
pub fn weight_matrix<S: Scalar>(layout: &DesignLayout, vc: &VarianceComponents<S>, n: usize) -> Result<WeightMatrix<S>> {
    let b = vc.design_scalar(n, layout.periods())?;
    weight_matrix_for_scalar(layout, &b)
}

/// `H` from the design scalar alone. With equal sizes `Σ_i⁻¹ ∝ I − bJ`, and the
/// proportionality constant cancels, so `b = 1/T` is admissible as a limit.
pub fn weight_matrix_for_scalar<S: Scalar>(layout: &DesignLayout, b: &S) -> Result<WeightMatrix<S>> {
    let t = layout.periods();
    let m = layout.interventions();
    let clusters = S::from_int(layout.clusters() as i64);
    let p = Matrix::from_fn(t, t, |r, c| {
        let j = if r == c { S::one() } else { S::zero() };
        j - b.clone()
    });
    let mats = layout.matrices::<S>();

    let mut wx = Matrix::zeros(m, m);
    let mut wxz = Matrix::zeros(m, m * (t - 1));
    let mut s = Matrix::zeros(m, t);
    let mut x_bar = Matrix::zeros(t, m);
    let mut z_bar = Matrix::zeros(t, m * (t - 1));
    for tm in &mats {
        let xp = tm.x.t_matmul(&p);
        wx = wx.add(&xp.matmul(&tm.x));
        wxz = wxz.add(&xp.matmul(&tm.z));
        s = s.add(&xp);
        x_bar = x_bar.add(&tm.x);
        z_bar = z_bar.add(&tm.z);
    }
    let inv_i = S::one() / clusters;
    let x_bar = x_bar.scale(&inv_i);
    let z_bar = z_bar.scale(&inv_i);
    let lhs = wx.sub(&s.matmul(&x_bar));
    let rhs = wxz.sub(&s.matmul(&z_bar));
    let h = lhs
        .solve(&rhs)
        .map_err(|e| Error::singular(format!("computing H for {} layout (T={t}, m={m})", layout.kind()), e))?;
    Ok(WeightMatrix {
        h,
        source: source_for(layout),
    })
}

/// `H` for arbitrary cluster-period sizes `sizes[i][j]`, through the bordered
/// normal equations of `(β, θ)` with `Σ_i = σ²_α J + diag(σ²_ε/n_ij)`.
pub fn weight_matrix_with_sizes<S: Scalar>(
    layout: &DesignLayout,
    vc: &VarianceComponents<S>,
    sizes: &[Vec<usize>],
) -> Result<WeightMatrix<S>> {
    vc.validate()?;
    let t = layout.periods();
    let m = layout.interventions();
    if sizes.len() != layout.clusters() {
        return Err(Error::DimensionMismatch {
            expected: layout.clusters(),
            got: sizes.len(),
            context: "cluster-period sizes",
        });
    }
    let p = t + m;
    let mut lhs = Matrix::zeros(p, p);
    let mut rhs = Matrix::zeros(p, m * (t - 1));
    for (tm, n_i) in layout.matrices::<S>().iter().zip(sizes) {
        if n_i.len() != t || n_i.contains(&0) {
            return Err(Error::InvalidConfig("every cluster needs T positive cell sizes".into()));
        }
        let diag: Vec<S> = n_i
            .iter()
            .map(|&n| vc.residual.clone() / S::from_int(n as i64))
            .collect();
        let v = intercept_precision(&vc.cluster, &diag);
        let d = Matrix::<S>::identity(t).hstack(&tm.x);
        let dv = d.t_matmul(&v);
        lhs = lhs.add(&dv.matmul(&d));
        rhs = rhs.add(&dv.matmul(&tm.z));
    }
    let full = lhs
        .solve(&rhs)
        .map_err(|e| Error::singular(format!("computing H for {} layout (T={t}, m={m})", layout.kind()), e))?;
    Ok(WeightMatrix {
        h: full.block(t..p, 0..m * (t - 1)),
        source: source_for(layout),
    })
}

/// `(σ²_α J + diag(d))⁻¹` by Sherman–Morrison.
pub fn intercept_precision<S: Scalar>(cluster: &S, diag: &[S]) -> Matrix<S> {
    let t = diag.len();
    let inv: Vec<S> = diag.iter().map(|d| S::one() / d.clone()).collect();
    let total = inv.iter().cloned().fold(S::zero(), |a, b| a + b);
    let s = cluster.clone() / (S::one() + cluster.clone() * total);
    Matrix::from_fn(t, t, |r, c| {
        let base = if r == c { inv[r].clone() } else { S::zero() };
        base - s.clone() * inv[r].clone() * inv[c].clone()
    })
}

fn source_for(layout: &DesignLayout) -> WeightSource {
    match layout.kind() {
        LayoutKind::Factorial | LayoutKind::FactorialAugmented if layout.interventions() == 2 => {
            WeightSource::FactorialBlock
        }
        _ => WeightSource::General,
    }
}

/// Scalars `c`, `d`, `g` and vectors `r`, `v` of the concurrent closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrentTerms<S> {
    pub c: S,
    pub d: S,
    pub g: S,
    pub r: Vec<S>,
    pub v: Vec<S>,
}

pub fn concurrent_terms<S: Scalar>(periods: usize, interventions: usize, b: &S) -> Result<ConcurrentTerms<S>> {
    if periods < 3 {
        return Err(Error::InvalidConfig(format!("closed form needs T >= 3, got {periods}")));
    }
    if interventions == 0 {
        return Err(Error::InvalidConfig("need at least one intervention".into()));
    }
    let int = |v: i64| S::from_int(v);
    let t = int(periods as i64);
    let m = int(interventions as i64);
    let b = b.clone();
    let c_factor = int(3) + b.clone() - int(2) * b.clone() * t.clone();
    let g_factor = int(2) + b.clone() - b.clone() * t.clone();
    for (name, factor) in [("c", &c_factor), ("g", &g_factor)] {
        let magnitude = factor.to_f64().abs();
        if factor.is_negligible(&S::one()) || magnitude < 1e-12 {
            return Err(Error::Degenerate(format!(
                "{name} vanishes at b = {}, T = {periods}",
                b.to_f64()
            )));
        }
    }
    let c = t.clone() * (t.clone() - int(1)) * c_factor / int(6);
    let d = t.clone() * (int(4) * t.clone() - int(2) - int(3) * b.clone() * t.clone() * (t.clone() - int(1)))
        / (int(12) * m.clone());
    let g = t.clone() * (t.clone() - int(2)) * g_factor / int(12);
    let r = (1..periods)
        .map(|j| {
            let j = int(j as i64);
            (t.clone() - j.clone()) * (int(1) + b.clone() * (int(1) - t.clone() - j) / int(2))
        })
        .collect();
    let v = (1..periods)
        .map(|j| {
            let j = int(j as i64);
            (t.clone() - j.clone()) * (int(1) - b.clone() * t.clone() + j / (t.clone() - int(1)))
                / (int(2) * m.clone())
        })
        .collect();
    Ok(ConcurrentTerms { c, d, g, r, v })
}

/// `H = [(1/c)(I_m + (d/g)J_m)] ⊗ r′ − (1/g) J_m ⊗ v′`.
pub fn weight_matrix_concurrent<S: Scalar>(periods: usize, interventions: usize, b: &S) -> Result<WeightMatrix<S>> {
    let ConcurrentTerms { c, d, g, r, v } = concurrent_terms(periods, interventions, b)?;
    let q = periods - 1;
    let off = d / g.clone() / c.clone();
    let diag = S::one() / c + off.clone();
    let h = Matrix::from_fn(interventions, interventions * q, |k, col| {
        let (kk, e) = (col / q, col % q);
        let coef = if k == kk { diag.clone() } else { off.clone() };
        coef * r[e].clone() - v[e].clone() / g.clone()
    });
    Ok(WeightMatrix {
        h,
        source: WeightSource::ConcurrentClosedForm,
    })
}

/// Single-intervention weights: `E(θ̂) = 6 Σ w_j δ_j / denominator`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleWeights<S> {
    pub weights: Vec<S>,
    pub denominator: S,
}

impl<S: Scalar> SingleWeights<S> {
    pub fn expected(&self, delta: &[S]) -> S {
        let total = self
            .weights
            .iter()
            .zip(delta)
            .fold(S::zero(), |acc, (w, d)| acc + w.clone() * d.clone());
        S::from_int(6) * total / self.denominator.clone()
    }
}

pub fn single_intervention_weights<S: Scalar>(periods: usize, b: &S) -> Result<SingleWeights<S>> {
    if periods < 3 {
        return Err(Error::InvalidConfig(format!("single-intervention weights need T >= 3, got {periods}")));
    }
    let int = |v: i64| S::from_int(v);
    let t = int(periods as i64);
    let b = b.clone();
    let weights = (1..periods)
        .map(|j| {
            let j = int(j as i64);
            (t.clone() - j.clone())
                * ((b.clone() - int(1) - b.clone() * t.clone()) * j + (int(1) + b.clone()) * (t.clone() - int(1)))
        })
        .collect();
    let g_factor = int(2) + b.clone() - b * t.clone();
    if g_factor.is_negligible(&S::one()) || g_factor.to_f64().abs() < 1e-12 {
        return Err(Error::Degenerate(format!("weight denominator vanishes at T = {periods}")));
    }
    let denominator = t.clone() * (t.clone() - int(1)) * (t - int(2)) * g_factor;
    Ok(SingleWeights { weights, denominator })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedEstimate<S = f64> {
    pub expected: Vec<S>,
    pub truth: Vec<S>,
    pub bias: Vec<S>,
}

/// `E(θ̂) = Hδ` and its bias against the realized `Δ_k`.
pub fn expected_constant_estimate<S: Scalar>(w: &WeightMatrix<S>, curve: &EffectCurve<S>) -> Result<ExpectedEstimate<S>> {
    let delta = curve.stacked();
    if delta.len() != w.h.ncols() || curve.interventions() != w.h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.h.ncols(),
            got: delta.len(),
            context: "stacked effect vector against H",
        });
    }
    let expected = w.h.mul_vec(&delta);
    let truth = curve.realized_estimand().averages;
    let bias = expected
        .iter()
        .zip(&truth)
        .map(|(e, t)| e.clone() - t.clone())
        .collect();
    Ok(ExpectedEstimate { expected, truth, bias })
}

/// A named set of curve parameters, one per intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveScenario {
    pub name: String,
    pub specs: Vec<CurveSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub design: String,
    pub family: String,
    pub b: f64,
    pub intervention: usize,
    pub delta_true: f64,
    pub expected: f64,
    pub bias: f64,
}

/// Expected constant-effect estimates over designs, design scalars and curves.
pub fn bias_curve_table(
    designs: &[DesignLayout],
    b_grid: &[f64],
    scenarios: &[CurveScenario],
) -> Result<Vec<BiasRow>> {
    let mut rows = Vec::new();
    for layout in designs {
        for &b in b_grid {
            for scenario in scenarios {
                if scenario.specs.len() != layout.interventions() {
                    return Err(Error::DimensionMismatch {
                        expected: layout.interventions(),
                        got: scenario.specs.len(),
                        context: "curve specs per intervention",
                    });
                }
                let curve = EffectCurve::from_specs(layout.periods(), &scenario.specs)?;
                rows.extend(bias_rows(layout, b, &scenario.name, &curve)?);
            }
        }
    }
    Ok(rows)
}

/// One row per intervention for a single design scalar and effect curve.
pub fn bias_rows(layout: &DesignLayout, b: f64, family: &str, curve: &EffectCurve) -> Result<Vec<BiasRow>> {
    let w = weight_matrix_for_scalar(layout, &b)?;
    let est = expected_constant_estimate(&w, curve)?;
    Ok((0..layout.interventions())
        .map(|k| BiasRow {
            design: layout.kind().name().to_string(),
            family: family.to_string(),
            b,
            intervention: k + 1,
            delta_true: est.truth[k],
            expected: est.expected[k],
            bias: est.bias[k],
        })
        .collect())
}

pub fn write_bias_csv<W: Write>(rows: &[BiasRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::LayoutOptions;
    use crate::scalar::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::ratio(n, d)
    }

    #[test]
    fn factorial_t3_worked_example() {
        let layout = DesignLayout::build(LayoutKind::Factorial, 3, 2, LayoutOptions::default()).unwrap();
        let w = weight_matrix_for_scalar(&layout, &q(1, 3)).unwrap();
        let expected = Matrix::from_rows(&[
            vec![q(7, 8), q(1, 8), q(-3, 8), q(3, 8)],
            vec![q(-3, 8), q(3, 8), q(7, 8), q(1, 8)],
        ]);
        assert_eq!(w.h, expected);
        assert_eq!(w.source, WeightSource::FactorialBlock);
        let curve = EffectCurve::custom(3, vec![vec![q(1, 1), q(-1, 1)], vec![q(2, 1), q(3, 1)]]).unwrap();
        let est = expected_constant_estimate(&w, &curve).unwrap();
        assert_eq!(est.expected, vec![q(9, 8), q(11, 8)]);
        assert_eq!(est.bias, vec![q(9, 8), q(-9, 8)]);
    }

    #[test]
    fn closed_form_matches_layout_exactly() {
        for t in 3..=6 {
            for m in 1..=3 {
                let layout = DesignLayout::build(LayoutKind::Concurrent, t, m, LayoutOptions::default()).unwrap();
                for b in [q(0, 1), q(1, 50), q(1, t as i64 + 1)] {
                    let general = weight_matrix_for_scalar(&layout, &b).unwrap();
                    let closed = weight_matrix_concurrent(t, m, &b).unwrap();
                    assert_eq!(general.h, closed.h, "T={t} m={m}");
                }
            }
        }
    }

    #[test]
    fn sized_form_matches_equal_n() {
        let layout = DesignLayout::build(LayoutKind::Factorial, 5, 2, LayoutOptions::default()).unwrap();
        let vc = VarianceComponents::new(q(3, 20), q(57, 20)).unwrap();
        let a = weight_matrix(&layout, &vc, 30).unwrap();
        let sizes = vec![vec![30; 5]; layout.clusters()];
        let b = weight_matrix_with_sizes(&layout, &vc, &sizes).unwrap();
        assert_eq!(a.h, b.h);
        assert!(a.is_block_symmetric(0.0));
    }

    #[test]
    fn sherman_morrison_inverse() {
        let diag = vec![q(1, 2), q(1, 3), q(2, 1)];
        let v = intercept_precision(&q(3, 4), &diag);
        let sigma = Matrix::from_fn(3, 3, |r, c| q(3, 4) + if r == c { diag[r].clone() } else { q(0, 1) });
        assert_eq!(v.matmul(&sigma), Matrix::identity(3));
    }

    #[test]
    fn single_weights_at_zero() {
        let w = single_intervention_weights(6, &q(0, 1)).unwrap();
        for (j, wj) in w.weights.iter().enumerate() {
            let j = j as i64 + 1;
            assert_eq!(*wj, q((6 - j) * (5 - j), 1));
        }
        assert_eq!(w.expected(&vec![q(2, 1); 5]), q(2, 1));
    }

    #[test]
    fn degenerate_g_is_reported() {
        // 2 + b − bT = 0 at b = 2/(T−1).
        let err = weight_matrix_concurrent(5, 2, &q(1, 2)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert!(weight_matrix_concurrent(2, 1, &0.0).is_err());
    }

    #[test]
    fn zero_effects_give_zero() {
        let layout = DesignLayout::build(LayoutKind::Concurrent, 5, 2, LayoutOptions::default()).unwrap();
        let w = weight_matrix_for_scalar(&layout, &0.1).unwrap();
        let curve = EffectCurve::custom(5, vec![vec![0.0; 4]; 2]).unwrap();
        let est = expected_constant_estimate(&w, &curve).unwrap();
        assert!(est.expected.iter().all(|&e| e == 0.0));
        let short = EffectCurve::custom(5, vec![vec![0.0; 4]]).unwrap();
        assert!(expected_constant_estimate(&w, &short).is_err());
    }
}
