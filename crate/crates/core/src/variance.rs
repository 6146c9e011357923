use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Variance components of the cluster random-intercept models.
///
/// `random_effects` holds the per-intervention deviation variances `σ²_k` of
/// the random treatment effect model and is empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceComponents<S = f64> {
    pub cluster: S,
    pub residual: S,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub random_effects: Vec<S>,
}

impl<S: Scalar> VarianceComponents<S> {
    pub fn new(cluster: S, residual: S) -> Result<Self> {
        let vc = Self {
            cluster,
            residual,
            random_effects: Vec::new(),
        };
        vc.validate()?;
        Ok(vc)
    }

    pub fn with_random_effects(mut self, random_effects: Vec<S>) -> Result<Self> {
        self.random_effects = random_effects;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.residual > S::zero()) {
            return Err(Error::InvalidConfig(format!(
                "residual variance must be positive, got {:?}",
                self.residual
            )));
        }
        if self.cluster < S::zero() || !self.cluster.to_f64().is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cluster variance must be non-negative, got {:?}",
                self.cluster
            )));
        }
        if self.random_effects.iter().any(|v| *v < S::zero()) {
            return Err(Error::InvalidConfig("random-effect variances must be non-negative".into()));
        }
        Ok(())
    }

    /// `σ²_α / (σ²_α + σ²_ε)`.
    pub fn icc(&self) -> S {
        self.cluster.clone() / (self.cluster.clone() + self.residual.clone())
    }

    /// `b = σ²_α / (Tσ²_α + σ²_ε/n)`.
    pub fn design_scalar(&self, n: usize, periods: usize) -> Result<S> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidConfig("cluster-period size must be at least 1".into()));
        }
        let t = S::from_int(periods as i64);
        let n = S::from_int(n as i64);
        Ok(self.cluster.clone() / (t * self.cluster.clone() + self.residual.clone() / n))
    }
}
