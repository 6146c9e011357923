//! Profiled (restricted) likelihood on cluster-period summaries.
//!
//! With `σ²_ε` profiled out, the cell-mean covariance is `σ²_ε Ψ(λ)` where
//! `λ` are variance ratios to `σ²_ε`. Individual-level information enters
//! through the pooled within-cell sum of squares, which adds `N − IT` degrees
//! of freedom for `σ²_ε`. Per cluster, the intercept part of `Ψ` is inverted
//! by Sherman–Morrison; the random treatment effects of model C are shared by
//! all clusters and handled by a Woodbury correction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::design::DesignLayout;
use crate::error::{Error, Result};
use crate::rng;
use crate::simulate::CellTable;
use crate::variance::VarianceComponents;

use super::optim::{minimize, OptimOptions};
use super::{assemble, require_identifiable, Coefficient, Convergence, FitResult, Method, ModelKind};

/// Lower bound on every variance ratio.
pub const LOWER_BOUND: f64 = 1e-10;
/// Ratios below this are reported as boundary estimates.
const BOUNDARY_FLAG: f64 = 1e-8;
const UPPER_LOG: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub method: Method,
    pub optim: OptimOptions,
    /// Starting log variance ratios; a short grid search is used otherwise.
    pub start: Option<Vec<f64>>,
    /// Jittered restarts attempted when the first run does not converge.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: Method::Reml,
            optim: OptimOptions::default(),
            start: None,
            restarts: 3,
        }
    }
}

struct Group {
    size: f64,
    count: usize,
    members: Vec<usize>,
    outer: DMatrix<f64>,
}

/// Everything about a fit that depends only on the layout, the model and the
/// cell sizes. Refitting to new responses with the same sizes (bootstrap
/// resamples, simulation replicates) reuses it.
pub struct ModelFitter {
    model: ModelKind,
    method: Method,
    periods: usize,
    interventions: usize,
    clusters: usize,
    n_fixed: usize,
    n_random: usize,
    /// Per cell, the design row in working order `[fixed | y | random]` with
    /// the `y` slot zero.
    rows: Vec<DVector<f64>>,
    sizes: Vec<usize>,
    total: f64,
    base: DMatrix<f64>,
    cluster_q: Vec<DVector<f64>>,
    groups: Vec<Group>,
    /// Intervention owning each random column.
    random_owner: Vec<usize>,
}

/// Response-dependent parts of the quadratic forms.
pub struct Response {
    m0: DMatrix<f64>,
    outer: Vec<DMatrix<f64>>,
    ssw: f64,
}

struct Evaluation {
    criterion: f64,
    sigma2: f64,
    coef: DVector<f64>,
    xx_inv: Option<DMatrix<f64>>,
    blup: Vec<f64>,
}

impl ModelFitter {
    pub fn new(layout: &DesignLayout, model: ModelKind, sizes: &[Vec<usize>], method: Method) -> Result<Self> {
        if method == Method::Gls {
            return Err(Error::InvalidConfig("use fit_gls for known variance components".into()));
        }
        require_identifiable(layout, model)?;
        let t = layout.periods();
        let m = layout.interventions();
        let q = t - 1;
        if sizes.len() != layout.clusters() || sizes.iter().any(|r| r.len() != t || r.contains(&0)) {
            return Err(Error::InvalidConfig("cell sizes must be a positive I x T table".into()));
        }
        let n_trt = if model == ModelKind::B { m * q } else { m };
        let n_fixed = t + n_trt;
        let n_random = if model == ModelKind::C { m * q } else { 0 };
        let w = n_fixed + 1 + n_random;
        let y = n_fixed;

        let mut rows = Vec::with_capacity(layout.clusters() * t);
        let mut flat_sizes = Vec::with_capacity(layout.clusters() * t);
        let mut base = DMatrix::zeros(w, w);
        let mut cluster_q = Vec::with_capacity(layout.clusters());
        let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..layout.clusters() {
            let mut qi = DVector::zeros(w);
            for j in 0..t {
                let mut row = DVector::zeros(w);
                row[j] = 1.0;
                for k in 0..m {
                    let e = layout.exposure_time(k + 1, i + 1, j + 1);
                    if e == 0 {
                        continue;
                    }
                    match model {
                        ModelKind::A | ModelKind::C => row[t + k] = 1.0,
                        ModelKind::B => row[t + k * q + e - 1] = 1.0,
                    }
                    if model == ModelKind::C {
                        row[y + 1 + k * q + e - 1] = 1.0;
                    }
                }
                let n = sizes[i][j] as f64;
                base.ger(n, &row, &row, 1.0);
                qi.axpy(n, &row, 1.0);
                rows.push(row);
                flat_sizes.push(sizes[i][j]);
            }
            by_size.entry(sizes[i].iter().sum()).or_default().push(i);
            cluster_q.push(qi);
        }
        let groups = by_size
            .into_iter()
            .map(|(size, members)| {
                let mut outer = DMatrix::zeros(w, w);
                for &i in &members {
                    outer.ger(1.0, &cluster_q[i], &cluster_q[i], 1.0);
                }
                Group {
                    size: size as f64,
                    count: members.len(),
                    members,
                    outer,
                }
            })
            .collect();
        let total: f64 = flat_sizes.iter().sum::<usize>() as f64;
        if method == Method::Reml && total <= n_fixed as f64 {
            return Err(Error::InvalidConfig(format!(
                "{total} observations cannot support {n_fixed} fixed effects"
            )));
        }
        Ok(Self {
            model,
            method,
            periods: t,
            interventions: m,
            clusters: layout.clusters(),
            n_fixed,
            n_random,
            rows,
            sizes: flat_sizes,
            total,
            base,
            cluster_q,
            groups,
            random_owner: (0..n_random).map(|c| c / q).collect(),
        })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    /// Number of variance ratios optimized: the cluster ratio plus one per
    /// intervention for model C.
    pub fn dimension(&self) -> usize {
        1 + if self.model == ModelKind::C { self.interventions } else { 0 }
    }

    pub fn response(&self, table: &CellTable) -> Result<Response> {
        if table.clusters != self.clusters || table.periods != self.periods {
            return Err(Error::DimensionMismatch {
                expected: self.clusters * self.periods,
                got: table.cells.len(),
                context: "cells in the table",
            });
        }
        let y = self.n_fixed;
        let w = self.base.nrows();
        let mut m0 = self.base.clone();
        let mut cross = DVector::zeros(w);
        let mut yy = 0.0;
        let mut qy = vec![0.0; self.clusters];
        for (c, cell) in table.cells.iter().enumerate() {
            if cell.n != self.sizes[c] {
                return Err(Error::InvalidConfig(format!(
                    "cell ({}, {}) has {} observations, expected {}",
                    cell.cluster, cell.period, cell.n, self.sizes[c]
                )));
            }
            let ny = cell.n as f64 * cell.mean;
            cross.axpy(ny, &self.rows[c], 1.0);
            yy += ny * cell.mean;
            qy[c / self.periods] += ny;
        }
        cross[y] = yy;
        m0.set_column(y, &cross);
        m0.set_row(y, &cross.transpose());
        let outer = self
            .groups
            .iter()
            .map(|g| {
                let mut o = g.outer.clone();
                let mut col = DVector::zeros(w);
                for &i in &g.members {
                    col.axpy(qy[i], &self.cluster_q[i], 1.0);
                }
                col[y] = g.members.iter().map(|&i| qy[i] * qy[i]).sum();
                o.set_column(y, &col);
                o.set_row(y, &col.transpose());
                o
            })
            .collect();
        Ok(Response {
            m0,
            outer,
            ssw: table.within_ss(),
        })
    }

    /// `[fixed | y]` block of `C′Ψ⁻¹C`, `log|Ψ| + Σ log n_ij`, and what the
    /// random-effect predictions need.
    fn reduced(&self, resp: &Response, ratios: &[f64]) -> Option<(DMatrix<f64>, f64, Option<RandomPart>)> {
        let la = ratios[0];
        let mut m = resp.m0.clone();
        let mut logdet = 0.0;
        for (g, outer) in self.groups.iter().zip(&resp.outer) {
            let s = la / (1.0 + la * g.size);
            m.zip_apply(outer, |a, b| *a -= s * b);
            logdet += g.count as f64 * (la * g.size).ln_1p();
        }
        let f = self.n_fixed + 1;
        if self.n_random == 0 {
            return Some((m, logdet, None));
        }
        let u = self.n_random;
        let gh = DVector::from_iterator(u, self.random_owner.iter().map(|&k| ratios[1 + k].sqrt()));
        let muu = m.view((f, f), (u, u));
        let mut kmat = DMatrix::identity(u, u);
        for a in 0..u {
            for b in 0..u {
                kmat[(a, b)] += gh[a] * muu[(a, b)] * gh[b];
            }
        }
        let chol = kmat.cholesky()?;
        logdet += 2.0 * chol.l_dirty().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();
        let mut bmat = m.view((f, 0), (u, f)).into_owned();
        for a in 0..u {
            bmat.row_mut(a).scale_mut(gh[a]);
        }
        let x = chol.solve(&bmat);
        let mff = m.view((0, 0), (f, f)) - bmat.transpose() * &x;
        let a_vec = m.view((f, 0), (u, f)).into_owned();
        Some((mff, logdet, Some(RandomPart { chol, gh, a_vec })))
    }

    fn evaluate(&self, resp: &Response, ratios: &[f64], full: bool) -> Option<Evaluation> {
        let p = self.n_fixed;
        let (mff, logdet, random) = self.reduced(resp, ratios)?;
        let mxx = mff.view((0, 0), (p, p)).into_owned();
        let mxy = mff.view((0, p), (p, 1)).into_owned();
        let chol = mxx.cholesky()?;
        let coef = chol.solve(&mxy).column(0).into_owned();
        let ryr = mff[(p, p)] - mxy.column(0).dot(&coef);
        let q = resp.ssw + ryr;
        if !(q > 0.0) || !q.is_finite() {
            return None;
        }
        let logdet_xx = 2.0 * chol.l_dirty().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();
        let two_pi = 2.0 * std::f64::consts::PI;
        let (df, extra) = match self.method {
            Method::Ml => (self.total, 0.0),
            _ => (self.total - p as f64, logdet_xx),
        };
        let sigma2 = q / df;
        let criterion = df * (1.0 + (two_pi * sigma2).ln()) + logdet + extra;
        let mut eval = Evaluation {
            criterion,
            sigma2,
            coef,
            xx_inv: None,
            blup: Vec::new(),
        };
        if full {
            eval.xx_inv = Some(chol.inverse());
            if let Some(rp) = random {
                // a = U′A⁻¹r; prediction G^½ K⁻¹ G^½ a.
                let mut a = rp.a_vec.column(p).into_owned();
                a -= rp.a_vec.columns(0, p) * &eval.coef;
                a.component_mul_assign(&rp.gh);
                let mut g = rp.chol.solve(&a);
                g.component_mul_assign(&rp.gh);
                eval.blup = g.iter().copied().collect();
            }
        }
        Some(eval)
    }

    /// Profiled criterion (`−2` times the profiled log-likelihood, up to
    /// constants) at the given variance ratios.
    pub fn criterion(&self, resp: &Response, ratios: &[f64]) -> Option<f64> {
        self.evaluate(resp, ratios, false).map(|e| e.criterion)
    }

    /// Profiled log-likelihood at the given variance ratios.
    pub fn profiled_log_likelihood(&self, table: &CellTable, ratios: &[f64]) -> Result<f64> {
        let resp = self.response(table)?;
        self.criterion(&resp, ratios)
            .map(|c| -0.5 * c)
            .ok_or_else(|| Error::Degenerate("likelihood is not finite at these ratios".into()))
    }

    /// Full Gaussian log-likelihood of the individual outcomes at fixed
    /// coefficients and variance components, from cell summaries alone.
    pub fn log_likelihood_at(&self, table: &CellTable, vc: &VarianceComponents, coef: &[f64]) -> Result<f64> {
        vc.validate()?;
        if coef.len() != self.n_fixed {
            return Err(Error::DimensionMismatch {
                expected: self.n_fixed,
                got: coef.len(),
                context: "fixed coefficients",
            });
        }
        let ratios = self.ratios_of(vc)?;
        let resp = self.response(table)?;
        let (mff, logdet, _) = self
            .reduced(&resp, &ratios)
            .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
        let v = DVector::from_iterator(self.n_fixed + 1, coef.iter().map(|c| -c).chain([1.0]));
        let quad = v.dot(&(&mff * &v));
        let two_pi = 2.0 * std::f64::consts::PI;
        let s2 = vc.residual;
        Ok(-0.5 * (self.total * (two_pi * s2).ln() + logdet + (resp.ssw + quad) / s2))
    }

    fn ratios_of(&self, vc: &VarianceComponents) -> Result<Vec<f64>> {
        let mut ratios = vec![vc.cluster / vc.residual];
        if self.model == ModelKind::C {
            if vc.random_effects.len() != self.interventions {
                return Err(Error::DimensionMismatch {
                    expected: self.interventions,
                    got: vc.random_effects.len(),
                    context: "random-effect variances",
                });
            }
            ratios.extend(vc.random_effects.iter().map(|v| v / vc.residual));
        }
        Ok(ratios)
    }

    fn result(&self, eval: Evaluation, ratios: &[f64], sigma2: f64, method: Method) -> FitResult {
        let inv = eval.xx_inv.expect("full evaluation");
        let cov: Vec<Vec<f64>> = (0..inv.nrows())
            .map(|r| (0..inv.ncols()).map(|c| sigma2 * 0.5 * (inv[(r, c)] + inv[(c, r)])).collect())
            .collect();
        let mut vc = VarianceComponents {
            cluster: ratios[0] * sigma2,
            residual: sigma2,
            random_effects: Vec::new(),
        };
        if self.model == ModelKind::C {
            vc.random_effects = ratios[1..].iter().map(|r| r * sigma2).collect();
        }
        let coef: Vec<f64> = eval.coef.iter().copied().collect();
        let mut fit = assemble(
            self.model,
            method,
            self.periods,
            self.interventions,
            &coef,
            cov,
            vc,
            -0.5 * eval.criterion,
        );
        let q = self.periods - 1;
        fit.random_effects = eval
            .blup
            .iter()
            .enumerate()
            .map(|(c, g)| Coefficient {
                name: format!("gamma[{},{}]", c / q + 1, c % q + 1),
                estimate: *g,
                se: f64::NAN,
            })
            .collect();
        fit
    }

    /// Fixed effects at known variance components. Coincides with
    /// known-variance GLS.
    pub fn fit_frozen(&self, table: &CellTable, vc: &VarianceComponents) -> Result<FitResult> {
        vc.validate()?;
        let ratios = self.ratios_of(vc)?;
        let resp = self.response(table)?;
        let eval = self
            .evaluate(&resp, &ratios, true)
            .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
        let mut fit = self.result(eval, &ratios, vc.residual, Method::Gls);
        fit.vc = vc.clone();
        fit.loglik = self.log_likelihood_at(table, vc, &fit_coefs(&fit))?;
        fit.log_ratios = ratios.iter().map(|r| r.max(LOWER_BOUND).ln()).collect();
        Ok(fit)
    }

    /// Default starting point: best cluster ratio on a coarse grid.
    fn initial(&self, resp: &Response) -> Vec<f64> {
        let d = self.dimension();
        let mut best = (f64::INFINITY, vec![(0.05f64).ln(); d]);
        for la in [1e-3_f64, 1e-2, 5e-2, 0.2, 1.0] {
            let mut x = vec![(0.02f64).ln(); d];
            x[0] = la.ln();
            let ratios: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            if let Some(c) = self.criterion(resp, &ratios) {
                if c < best.0 {
                    best = (c, x);
                }
            }
        }
        best.1
    }

    pub fn fit(&self, table: &CellTable, opts: &FitOptions) -> Result<FitResult> {
        let resp = self.response(table)?;
        self.fit_response(&resp, opts)
    }

    pub fn fit_response(&self, resp: &Response, opts: &FitOptions) -> Result<FitResult> {
        let d = self.dimension();
        let lower = vec![LOWER_BOUND.ln(); d];
        let upper = vec![UPPER_LOG; d];
        let objective = |x: &[f64]| {
            let ratios: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            self.criterion(resp, &ratios)
        };
        let x0 = match &opts.start {
            Some(s) if s.len() == d && s.iter().all(|v| v.is_finite()) => s.clone(),
            Some(s) if s.len() != d => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.len(),
                    context: "starting values",
                })
            }
            _ => self.initial(resp),
        };
        let mut best = minimize(objective, &x0, &lower, &upper, opts.optim);
        let mut restarts = 0;
        let mut evaluations = best.evaluations;
        while !best.converged && restarts < opts.restarts {
            restarts += 1;
            let mut jr = rng::stream(0, &[rng::JITTER, restarts as u64]);
            let start: Vec<f64> = x0
                .iter()
                .map(|v| v + 2.0 * rng::open_unit(&mut jr) - 1.0)
                .collect();
            let attempt = minimize(objective, &start, &lower, &upper, opts.optim);
            evaluations += attempt.evaluations;
            let better = (attempt.converged && !best.converged) || (attempt.converged == best.converged && attempt.f < best.f);
            if better {
                best = attempt;
            }
        }
        if !best.f.is_finite() {
            return Err(Error::Degenerate(format!(
                "model {} likelihood is not finite at any starting point",
                self.model
            )));
        }
        let ratios: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
        let eval = self
            .evaluate(resp, &ratios, true)
            .ok_or_else(|| Error::Degenerate("final covariance is not positive definite".into()))?;
        let sigma2 = eval.sigma2;
        let mut fit = self.result(eval, &ratios, sigma2, self.method);
        fit.converged = best.converged;
        fit.convergence = Convergence {
            iterations: best.iterations,
            evaluations,
            gradient_norm: best.gradient_norm,
            restarts,
        };
        fit.log_ratios = best.x.clone();
        let mut boundary = Vec::new();
        if ratios[0] <= BOUNDARY_FLAG {
            boundary.push("cluster".to_string());
        }
        for (k, r) in ratios.iter().enumerate().skip(1) {
            if *r <= BOUNDARY_FLAG {
                boundary.push(format!("random_effect[{k}]"));
            }
        }
        fit.boundary = boundary;
        Ok(fit)
    }
}

struct RandomPart {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    gh: DVector<f64>,
    a_vec: DMatrix<f64>,
}

fn fit_coefs(fit: &FitResult) -> Vec<f64> {
    fit.beta.iter().copied().chain(fit.effects.iter().map(|c| c.estimate)).collect()
}

/// REML (or ML) fit of one model to a cell table.
pub fn fit_reml(table: &CellTable, layout: &DesignLayout, model: ModelKind, opts: &FitOptions) -> Result<FitResult> {
    let fitter = ModelFitter::new(layout, model, &table.sizes(), opts.method)?;
    fitter.fit(table, opts)
}
