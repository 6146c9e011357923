//! Exposure-time-specific effect vectors `δ_k = (δ_{k,1}, …, δ_{k,T−1})`.
//!
//! `δ_{k,0} = 0` is implicit and never stored. The estimand for every report
//! in this crate is the realized exposure-time average `Δ_k` of the vector
//! actually generated, not a rounded target value.
//!
//! For the non-linear family the centering term is read as the mean of `f_k`
//! over exposure times `1..=T−1`, which makes the realized average equal the
//! supplied `Δ_k` exactly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFamily {
    Constant,
    Linear,
    LagHalf,
    LagOne,
    Log,
    Exp,
    Custom,
}

impl CurveFamily {
    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::Constant => "constant",
            CurveFamily::Linear => "linear",
            CurveFamily::LagHalf => "lag-half",
            CurveFamily::LagOne => "lag-one",
            CurveFamily::Log => "log",
            CurveFamily::Exp => "exp",
            CurveFamily::Custom => "custom",
        }
    }
}

/// Parameters for one intervention's curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CurveSpec {
    /// `δ_{k,e} = Δ_k`.
    Constant { average: f64 },
    /// Intervention `k` takes points `(k−1)(T−1)+1 ..= k(T−1)` of a grid of
    /// `2(T−1)` equally spaced values from `lower` to `upper`.
    Linear { lower: f64, upper: f64 },
    /// `2Δ_k · 1{e > (T−1)/2}`.
    LagHalf { average: f64 },
    /// `(T−1)/(T−2) · Δ_k · 1{e > 1}`.
    LagOne { average: f64 },
    /// Mean-centered logarithmic growth around `Δ_k`.
    Log { average: f64 },
    /// Mean-centered exponential growth around `Δ_k`.
    Exp { average: f64 },
}

impl CurveSpec {
    pub fn family(&self) -> CurveFamily {
        match self {
            CurveSpec::Constant { .. } => CurveFamily::Constant,
            CurveSpec::Linear { .. } => CurveFamily::Linear,
            CurveSpec::LagHalf { .. } => CurveFamily::LagHalf,
            CurveSpec::LagOne { .. } => CurveFamily::LagOne,
            CurveSpec::Log { .. } => CurveFamily::Log,
            CurveSpec::Exp { .. } => CurveFamily::Exp,
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            CurveSpec::Linear { lower, upper } => vec![lower, upper],
            CurveSpec::Constant { average }
            | CurveSpec::LagHalf { average }
            | CurveSpec::LagOne { average }
            | CurveSpec::Log { average }
            | CurveSpec::Exp { average } => vec![average],
        }
    }
}

/// `δ_k` for intervention `k` (1-based) under `spec`, evaluated at
/// `e = 1..=T−1`.
pub fn make_curve(spec: &CurveSpec, periods: usize, k: usize) -> Result<Vec<f64>> {
    if spec.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidCurve(format!("non-finite parameter in {spec:?}")));
    }
    if periods < 2 {
        return Err(Error::InvalidCurve(format!("need T >= 2, got {periods}")));
    }
    if k == 0 {
        return Err(Error::InvalidCurve("interventions are numbered from 1".into()));
    }
    let needs_three = !matches!(spec, CurveSpec::Constant { .. } | CurveSpec::Linear { .. });
    if needs_three && periods < 3 {
        return Err(Error::InvalidCurve(format!(
            "{} curves need T >= 3, got {periods}",
            spec.family().name()
        )));
    }
    let t = periods as f64;
    let exposures = (1..periods).map(|e| e as f64);
    let delta: Vec<f64> = match *spec {
        CurveSpec::Constant { average } => exposures.map(|_| average).collect(),
        CurveSpec::Linear { lower, upper } => {
            if lower > upper {
                return Err(Error::InvalidCurve(format!(
                    "linear curve needs lower <= upper, got {lower} > {upper}"
                )));
            }
            let step = (upper - lower) / (2.0 * (t - 1.0) - 1.0);
            let shift = (k as f64 - 1.0) * (t - 1.0) - 1.0;
            exposures.map(|e| lower + step * (e + shift)).collect()
        }
        CurveSpec::LagHalf { average } => {
            let threshold = (t - 1.0) / 2.0;
            exposures
                .map(|e| if e > threshold { 2.0 * average } else { 0.0 })
                .collect()
        }
        CurveSpec::LagOne { average } => {
            let level = (t - 1.0) / (t - 2.0) * average;
            exposures.map(|e| if e > 1.0 { level } else { 0.0 }).collect()
        }
        CurveSpec::Log { average } => {
            let f: Vec<f64> = exposures
                .map(|e| average * ((t - 1.0) / 2.0 * (1.0 + 3.0 * (e - 1.0) / (t - 2.0))).ln())
                .collect();
            centered(&f, average)
        }
        CurveSpec::Exp { average } => {
            let rate = (0.1 + (t - 1.0) / 2.0) / (t - 2.0);
            let f: Vec<f64> = exposures
                .map(|e| average * (-(t - 1.0) / 2.0 + rate * (e - 1.0)).exp())
                .collect();
            centered(&f, average)
        }
    };
    Ok(delta)
}

fn centered(f: &[f64], average: f64) -> Vec<f64> {
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    f.iter().map(|v| average + v - mean).collect()
}

/// Effect vectors for all interventions of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectCurve<S = f64> {
    #[serde(rename = "T")]
    periods: usize,
    interventions: Vec<InterventionCurve<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionCurve<S> {
    pub family: CurveFamily,
    pub delta: Vec<S>,
}

/// Realized exposure-time averages `Δ_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimandSet<S = f64> {
    pub averages: Vec<S>,
}

impl EffectCurve<f64> {
    /// One `CurveSpec` per intervention.
    pub fn from_specs(periods: usize, specs: &[CurveSpec]) -> Result<Self> {
        let interventions = specs
            .iter()
            .enumerate()
            .map(|(idx, spec)| {
                Ok(InterventionCurve {
                    family: spec.family(),
                    delta: make_curve(spec, periods, idx + 1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            periods,
            interventions,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["intervention", "exposure", "delta"])?;
        for (k, c) in self.interventions.iter().enumerate() {
            for (e, d) in c.delta.iter().enumerate() {
                w.write_record([(k + 1).to_string(), (e + 1).to_string(), d.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl<S: Scalar> EffectCurve<S> {
    pub fn custom(periods: usize, deltas: Vec<Vec<S>>) -> Result<Self> {
        let curve = Self {
            periods,
            interventions: deltas
                .into_iter()
                .map(|delta| InterventionCurve {
                    family: CurveFamily::Custom,
                    delta,
                })
                .collect(),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods < 2 {
            return Err(Error::InvalidCurve("need T >= 2".into()));
        }
        if self.interventions.is_empty() {
            return Err(Error::InvalidCurve("no interventions".into()));
        }
        for (k, c) in self.interventions.iter().enumerate() {
            if c.delta.len() != self.periods - 1 {
                return Err(Error::InvalidCurve(format!(
                    "intervention {} has {} effects, expected T-1 = {}",
                    k + 1,
                    c.delta.len(),
                    self.periods - 1
                )));
            }
            if c.delta.iter().any(|d| !d.to_f64().is_finite()) {
                return Err(Error::InvalidCurve(format!("intervention {} has a non-finite effect", k + 1)));
            }
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn interventions(&self) -> usize {
        self.interventions.len()
    }

    pub fn family(&self, k: usize) -> CurveFamily {
        self.interventions[k - 1].family
    }

    /// `δ_k` (1-based `k`).
    pub fn delta(&self, k: usize) -> &[S] {
        &self.interventions[k - 1].delta
    }

    /// `δ_{k,e}` with `δ_{k,0} = 0`.
    pub fn effect(&self, k: usize, e: usize) -> S {
        if e == 0 {
            S::zero()
        } else {
            self.interventions[k - 1].delta[e - 1].clone()
        }
    }

    /// `δ = (δ_1′, …, δ_m′)′`.
    pub fn stacked(&self) -> Vec<S> {
        self.interventions
            .iter()
            .flat_map(|c| c.delta.iter().cloned())
            .collect()
    }

    pub fn realized_estimand(&self) -> EstimandSet<S> {
        let len = S::from_int((self.periods - 1) as i64);
        EstimandSet {
            averages: self
                .interventions
                .iter()
                .map(|c| c.delta.iter().cloned().fold(S::zero(), |a, b| a + b) / len.clone())
                .collect(),
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> EffectCurve<T> {
        EffectCurve {
            periods: self.periods,
            interventions: self
                .interventions
                .iter()
                .map(|c| InterventionCurve {
                    family: c.family,
                    delta: c.delta.iter().map(&f).collect(),
                })
                .collect(),
        }
    }
}
