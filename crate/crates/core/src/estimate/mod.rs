//! Fitting the constant (A), exposure-time-specific (B) and random treatment
//! effect (C) models.

mod bootstrap;
mod gls;
pub mod optim;
mod reml;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap, percentile, BootstrapOptions, BootstrapSummary, Resampler};
pub use gls::{fit_gls, gls, GlsEstimate};
pub use reml::{fit_reml, FitOptions, ModelFitter, Response, LOWER_BOUND};

use crate::design::{DesignLayout, FixedStructure};
use crate::error::{Error, Result};
use crate::variance::VarianceComponents;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    A,
    B,
    C,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::A, ModelKind::B, ModelKind::C];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::A => "A",
            ModelKind::B => "B",
            ModelKind::C => "C",
        }
    }

    pub fn fixed_structure(self) -> FixedStructure {
        match self {
            ModelKind::B => FixedStructure::ExposureSpecific,
            ModelKind::A | ModelKind::C => FixedStructure::Constant,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ModelKind::A),
            "B" | "b" => Ok(ModelKind::B),
            "C" | "c" => Ok(ModelKind::C),
            other => Err(Error::InvalidConfig(format!("unknown model {other:?} (expected A, B or C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Generalized least squares with known variance components.
    Gls,
    Reml,
    Ml,
}

/// Rejects models whose fixed effects are not estimable on `layout`.
pub fn require_identifiable(layout: &DesignLayout, model: ModelKind) -> Result<()> {
    let report = layout.check_identifiability(model.fixed_structure());
    if report.identifiable {
        return Ok(());
    }
    Err(Error::NotIdentifiable {
        model: model.name().to_string(),
        detail: format!(
            "{} not estimable; estimable functions: {}",
            report.non_estimable.join(", "),
            report.estimable_functions.join("; ")
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimandEstimate {
    pub k: usize,
    pub delta_hat: f64,
    pub se: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub method: Method,
    pub beta: Vec<f64>,
    /// Treatment coefficients: `theta[k]`, `delta[k,e]` or `mu[k]`.
    pub effects: Vec<Coefficient>,
    /// Predicted `gamma[k,e]` deviations of the random treatment effect model.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub random_effects: Vec<Coefficient>,
    pub vc: VarianceComponents,
    /// Covariance of `(β̂, treatment coefficients)`.
    pub covariance: Vec<Vec<f64>>,
    pub estimands: Vec<EstimandEstimate>,
    pub loglik: f64,
    pub converged: bool,
    pub convergence: Convergence,
    pub boundary: Vec<String>,
    /// Optimizer coordinates (log variance ratios), for warm starts.
    #[serde(skip)]
    pub log_ratios: Vec<f64>,
}

impl FitResult {
    pub fn estimates(&self) -> Vec<f64> {
        self.estimands.iter().map(|e| e.delta_hat).collect()
    }
}

/// Model-based standard errors of `Δ̂_k`.
pub fn estimand_se(fit: &FitResult) -> Vec<f64> {
    fit.estimands.iter().map(|e| e.se).collect()
}

/// Contrast vectors over `(β, treatment coefficients)` that define `Δ̂_k`.
pub(crate) fn estimand_contrasts(model: ModelKind, periods: usize, interventions: usize) -> Vec<Vec<f64>> {
    let q = periods - 1;
    let width = periods
        + match model {
            ModelKind::B => interventions * q,
            _ => interventions,
        };
    (0..interventions)
        .map(|k| {
            let mut c = vec![0.0; width];
            match model {
                ModelKind::B => {
                    for e in 0..q {
                        c[periods + k * q + e] = 1.0 / q as f64;
                    }
                }
                _ => c[periods + k] = 1.0,
            }
            c
        })
        .collect()
}

pub(crate) fn treatment_labels(model: ModelKind, periods: usize, interventions: usize) -> Vec<String> {
    match model {
        ModelKind::A => (1..=interventions).map(|k| format!("theta[{k}]")).collect(),
        ModelKind::B => (1..=interventions)
            .flat_map(|k| (1..periods).map(move |e| format!("delta[{k},{e}]")))
            .collect(),
        ModelKind::C => (1..=interventions).map(|k| format!("mu[{k}]")).collect(),
    }
}

/// Assembles a result from a fixed-effect solution and its covariance.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    model: ModelKind,
    method: Method,
    periods: usize,
    interventions: usize,
    coef: &[f64],
    cov: Vec<Vec<f64>>,
    vc: VarianceComponents,
    loglik: f64,
) -> FitResult {
    let labels = treatment_labels(model, periods, interventions);
    let se = |i: usize| cov[i][i].max(0.0).sqrt();
    let effects = labels
        .iter()
        .enumerate()
        .map(|(c, name)| Coefficient {
            name: name.clone(),
            estimate: coef[periods + c],
            se: se(periods + c),
        })
        .collect();
    let estimands = estimand_contrasts(model, periods, interventions)
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let est: f64 = c.iter().zip(coef).map(|(a, b)| a * b).sum();
            let var: f64 = (0..c.len())
                .filter(|&i| c[i] != 0.0)
                .map(|i| (0..c.len()).filter(|&j| c[j] != 0.0).map(|j| c[i] * cov[i][j] * c[j]).sum::<f64>())
                .sum();
            EstimandEstimate {
                k: k + 1,
                delta_hat: est,
                se: var.max(0.0).sqrt(),
                ci_low: None,
                ci_high: None,
                bootstrap_sd: None,
            }
        })
        .collect();
    FitResult {
        model,
        method,
        beta: coef[..periods].to_vec(),
        effects,
        random_effects: Vec::new(),
        vc,
        covariance: cov,
        estimands,
        loglik,
        converged: true,
        convergence: Convergence {
            iterations: 0,
            evaluations: 0,
            gradient_norm: 0.0,
            restarts: 0,
        },
        boundary: Vec::new(),
        log_ratios: Vec::new(),
    }
}
