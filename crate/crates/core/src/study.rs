//! Monte Carlo studies: bias, coverage and CI length of the three fitted
//! models, and empirical power of the exposure-specific model.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::CurveScenario;
use crate::curves::{CurveSpec, EffectCurve};
use crate::design::{DesignLayout, LayoutKind, LayoutOptions};
use crate::error::{Error, Result};
use crate::estimate::{bootstrap, BootstrapOptions, FitOptions, Method, ModelFitter, ModelKind};
use crate::rng;
use crate::simulate::{linear_time_effects, simulate_replicate, CellSizes, SimulationConfig};
use crate::variance::VarianceComponents;

/// Largest tolerated share of failed replicates per fitted model.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Shape of the true exposure-time effect curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeModel {
    A,
    B1,
    B2,
    B3,
    B4,
}

impl OutcomeModel {
    pub const ALL: [OutcomeModel; 5] = [
        OutcomeModel::A,
        OutcomeModel::B1,
        OutcomeModel::B2,
        OutcomeModel::B3,
        OutcomeModel::B4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeModel::A => "A",
            OutcomeModel::B1 => "B1",
            OutcomeModel::B2 => "B2",
            OutcomeModel::B3 => "B3",
            OutcomeModel::B4 => "B4",
        }
    }
}

impl fmt::Display for OutcomeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutcomeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutcomeModel::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown outcome model {s:?} (expected A, B1, B2, B3 or B4)")))
    }
}

/// Average effect sizes of the two interventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EffectSize {
    Small,
    Large,
    /// Targets `(Δ₁, Δ₂)`; linear curves share one grid whose step makes the
    /// two averages exactly `delta1` and `delta2`.
    Explicit { delta1: f64, delta2: f64 },
}

impl EffectSize {
    /// Target averages `(Δ₁, Δ₂)`. The named regimes are tabulated for `T = 5`
    /// and `T = 11`.
    pub fn targets(&self, periods: usize) -> Result<(f64, f64)> {
        match (*self, periods) {
            (EffectSize::Small, 5) => Ok((0.10, 0.14)),
            (EffectSize::Small, 11) => Ok((0.10, 0.13)),
            (EffectSize::Large, 5) => Ok((0.28, 0.40)),
            (EffectSize::Large, 11) => Ok((0.29, 0.40)),
            (EffectSize::Explicit { delta1, delta2 }, _) => Ok((delta1, delta2)),
            (regime, t) => Err(Error::InvalidConfig(format!(
                "the {regime:?} regime is defined for T = 5 and T = 11, got T = {t}; give explicit deltas"
            ))),
        }
    }

    /// Endpoints `(l, u)` of the shared linear grid.
    pub fn linear_bounds(&self, periods: usize) -> Result<(f64, f64)> {
        match *self {
            EffectSize::Small => Ok((0.08, 0.15)),
            EffectSize::Large => Ok((0.24, 0.45)),
            EffectSize::Explicit { delta1, delta2 } => {
                if periods < 3 {
                    return Err(Error::InvalidConfig(format!("linear curves need T >= 3 here, got {periods}")));
                }
                let t = periods as f64;
                let step = (delta2 - delta1) / (t - 1.0);
                let lower = delta1 - step * (t - 2.0) / 2.0;
                Ok((lower, lower + step * (2.0 * t - 3.0)))
            }
        }
    }
}

/// Curve parameters of both interventions under `outcome`.
pub fn outcome_specs(outcome: OutcomeModel, effect: &EffectSize, periods: usize) -> Result<Vec<CurveSpec>> {
    if outcome == OutcomeModel::B1 {
        let (lower, upper) = effect.linear_bounds(periods)?;
        return Ok(vec![CurveSpec::Linear { lower, upper }; 2]);
    }
    let (d1, d2) = effect.targets(periods)?;
    Ok(match outcome {
        OutcomeModel::A => vec![CurveSpec::Constant { average: d1 }, CurveSpec::Constant { average: d2 }],
        OutcomeModel::B2 => vec![CurveSpec::LagHalf { average: d1 }, CurveSpec::LagHalf { average: d2 }],
        OutcomeModel::B3 => vec![CurveSpec::LagOne { average: d1 }, CurveSpec::LagOne { average: d2 }],
        OutcomeModel::B4 => vec![CurveSpec::Log { average: d1 }, CurveSpec::Exp { average: d2 }],
        OutcomeModel::B1 => unreachable!(),
    })
}

fn default_offset() -> usize {
    1
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_level() -> f64 {
    0.95
}

fn default_variance() -> VarianceComponents {
    VarianceComponents::new(0.15, 2.85).expect("positive components")
}

fn default_time_effects() -> [f64; 2] {
    [0.1, 0.5]
}

/// One data-generating mechanism and the models fitted to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub design: LayoutKind,
    #[serde(rename = "T")]
    pub periods: usize,
    #[serde(default = "default_offset")]
    pub offset: usize,
    pub n: usize,
    pub outcome: OutcomeModel,
    pub effect: EffectSize,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    pub replicates: usize,
    pub bootstrap: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variance")]
    pub variance: VarianceComponents,
    /// First and last period effects; the rest are equally spaced.
    #[serde(default = "default_time_effects")]
    pub time_effects: [f64; 2],
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!("scenario id {:?} must be a plain file name", self.id)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.bootstrap < 2 {
            return Err(Error::InvalidConfig("bootstrap must be at least 2".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no fitting models given".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        self.variance.validate()?;
        self.simulation_config().map(|_| ())
    }

    pub fn layout(&self) -> Result<DesignLayout> {
        let opts = LayoutOptions {
            offset: self.offset,
            ..LayoutOptions::default()
        };
        DesignLayout::build(self.design, self.periods, 2, opts)
    }

    pub fn curve(&self) -> Result<EffectCurve> {
        EffectCurve::from_specs(self.periods, &outcome_specs(self.outcome, &self.effect, self.periods)?)
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig> {
        let mut vc = self.variance.clone();
        vc.random_effects.clear();
        let cfg = SimulationConfig {
            layout: self.layout()?,
            curve: self.curve()?,
            beta: linear_time_effects(self.periods, self.time_effects[0], self.time_effects[1]),
            vc,
            sizes: CellSizes::Equal(self.n),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of one fitted model on one replicate, for one intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario_id: String,
    pub replicate: u64,
    pub fit_model: ModelKind,
    pub intervention: usize,
    pub truth: f64,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub boot_sd: Option<f64>,
    pub boot_failures: usize,
    pub failed: bool,
}

impl ReplicateRecord {
    pub fn covers(&self, value: f64) -> Option<bool> {
        Some(self.ci_low? <= value && value <= self.ci_high?)
    }

    pub fn excludes_zero(&self) -> Option<bool> {
        self.covers(0.0).map(|c| !c)
    }
}

/// Aggregated performance of one fitted model for one intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario_id: String,
    pub design: String,
    #[serde(rename = "T")]
    pub periods: usize,
    pub n: usize,
    pub outcome_model: OutcomeModel,
    pub fit_model: ModelKind,
    pub intervention: usize,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub coverage_pct: f64,
    pub ci_length: f64,
    pub mean_se: f64,
    pub mc_se_bias: f64,
    pub mc_se_coverage: f64,
    pub n_fail: usize,
    /// Replicates that entered the averages.
    #[serde(skip)]
    pub successes: usize,
}

/// Monte Carlo standard error of a mean.
pub fn mc_se_mean(sd: f64, replicates: usize) -> f64 {
    sd / (replicates as f64).sqrt()
}

/// Monte Carlo standard error of a proportion `p`.
pub fn mc_se_proportion(p: f64, replicates: usize) -> f64 {
    (p * (1.0 - p) / replicates as f64).sqrt()
}

/// Fills the Monte Carlo standard errors of bias and coverage (in percentage
/// points).
pub fn mc_standard_errors(rows: &mut [ReportRow]) {
    for row in rows {
        row.mc_se_bias = mc_se_mean(row.sd, row.successes);
        row.mc_se_coverage = 100.0 * mc_se_proportion(row.coverage_pct / 100.0, row.successes);
    }
}

#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    /// Thread cap; all available cores when `None`.
    pub workers: Option<usize>,
    /// Per-replicate CSVs are read from and written to
    /// `<out_dir>/replicates/<scenario id>.csv`.
    pub out_dir: Option<PathBuf>,
}

impl StudyOptions {
    pub fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            None => Ok(job()),
            Some(0) => Err(Error::InvalidConfig("workers must be at least 1".into())),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("cannot start {w} workers: {e}")))?;
                Ok(pool.install(job))
            }
        }
    }

    fn replicate_path(&self, id: &str) -> Option<PathBuf> {
        self.out_dir.as_deref().map(|d| replicate_file(d, id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub rows: Vec<ReportRow>,
    /// Sorted by replicate, then fitted model, then intervention.
    pub records: Vec<ReplicateRecord>,
}

struct Runner<'a> {
    spec: &'a ScenarioSpec,
    config: SimulationConfig,
    fitters: Vec<ModelFitter>,
    truth: Vec<f64>,
}

impl<'a> Runner<'a> {
    fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let config = spec.simulation_config()?;
        let sizes = vec![vec![spec.n; spec.periods]; config.layout.clusters()];
        let fitters = spec
            .models
            .iter()
            .map(|&m| ModelFitter::new(&config.layout, m, &sizes, Method::Reml))
            .collect::<Result<Vec<_>>>()?;
        let truth = config.curve.realized_estimand().averages;
        Ok(Self {
            spec,
            config,
            fitters,
            truth,
        })
    }

    fn record(&self, r: u64, model: ModelKind, k: usize) -> ReplicateRecord {
        ReplicateRecord {
            scenario_id: self.spec.id.clone(),
            replicate: r,
            fit_model: model,
            intervention: k + 1,
            truth: self.truth[k],
            estimate: None,
            se: None,
            ci_low: None,
            ci_high: None,
            boot_sd: None,
            boot_failures: 0,
            failed: true,
        }
    }

    fn replicate(&self, r: u64) -> Vec<ReplicateRecord> {
        let mut out = Vec::with_capacity(self.fitters.len() * self.truth.len());
        let data = simulate_replicate(&self.config, r);
        for fitter in &self.fitters {
            let model = fitter.model();
            let fitted = data.as_ref().ok().and_then(|data| {
                let fit = fitter.fit(&data.cluster_period_means(), &FitOptions::default()).ok()?;
                if !fit.converged {
                    return None;
                }
                let opts = BootstrapOptions {
                    replicates: self.spec.bootstrap,
                    level: self.spec.level,
                    seed: self.spec.seed,
                    path: vec![rng::BOOTSTRAP, r],
                };
                let boot = bootstrap(data, fitter, &fit, &opts).ok()?;
                Some((fit, boot))
            });
            for k in 0..self.truth.len() {
                let mut rec = self.record(r, model, k);
                if let Some((fit, boot)) = &fitted {
                    rec.estimate = Some(fit.estimands[k].delta_hat);
                    rec.se = Some(fit.estimands[k].se);
                    rec.ci_low = Some(boot.intervals[k].0);
                    rec.ci_high = Some(boot.intervals[k].1);
                    rec.boot_sd = Some(boot.sd[k]);
                    rec.boot_failures = boot.failures;
                    rec.failed = false;
                }
                out.push(rec);
            }
        }
        out
    }
}

/// Simulates, fits and bootstraps every replicate of `spec`, then aggregates
/// against the realized `Δ_k`. Results do not depend on the worker count.
pub fn run_scenario(spec: &ScenarioSpec, opts: &StudyOptions) -> Result<ScenarioOutcome> {
    let runner = Runner::new(spec)?;
    let path = opts.replicate_path(&spec.id);
    let mut done: BTreeMap<u64, Vec<ReplicateRecord>> = BTreeMap::new();
    if let Some(path) = path.as_ref().filter(|p| p.exists()) {
        for rec in read_replicates(File::open(path)?)? {
            if rec.scenario_id == spec.id && rec.replicate < spec.replicates as u64 {
                done.entry(rec.replicate).or_default().push(rec);
            }
        }
        let expected = spec.models.len() * runner.truth.len();
        done.retain(|_, recs| {
            recs.len() == expected
                && spec.models.iter().all(|m| recs.iter().any(|r| r.fit_model == *m))
                && recs.iter().all(|r| (r.truth - runner.truth[r.intervention - 1]).abs() < 1e-12)
        });
    }
    let missing: Vec<u64> = (0..spec.replicates as u64).filter(|r| !done.contains_key(r)).collect();
    let fresh: Vec<(u64, Vec<ReplicateRecord>)> =
        opts.install(|| missing.par_iter().map(|&r| (r, runner.replicate(r))).collect())?;
    done.extend(fresh);

    let mut records: Vec<ReplicateRecord> = done.into_values().flatten().collect();
    let order = |m: ModelKind| spec.models.iter().position(|x| *x == m);
    records.sort_by_key(|r| (r.replicate, order(r.fit_model), r.intervention));
    if let Some(path) = &path {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_replicates(&records, File::create(path)?)?;
    }

    for &model in &spec.models {
        let failures = records
            .iter()
            .filter(|r| r.fit_model == model && r.intervention == 1 && r.failed)
            .count();
        if failures as f64 > MAX_FAILURE_RATE * spec.replicates as f64 {
            return Err(Error::StudyAborted {
                scenario: format!("{} (model {model})", spec.id),
                failures,
                replicates: spec.replicates,
            });
        }
    }
    let rows = aggregate(spec, &records, &runner.truth);
    Ok(ScenarioOutcome { rows, records })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Report rows from per-replicate records, in `spec.models` order.
pub fn aggregate(spec: &ScenarioSpec, records: &[ReplicateRecord], truth: &[f64]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for &model in &spec.models {
        for (k, &delta) in truth.iter().enumerate() {
            let recs: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.fit_model == model && r.intervention == k + 1)
                .collect();
            let ok: Vec<&ReplicateRecord> = recs.iter().copied().filter(|r| !r.failed).collect();
            let est: Vec<f64> = ok.iter().filter_map(|r| r.estimate).collect();
            let m = mean(&est);
            let sd = if est.len() > 1 {
                (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let covered: Vec<f64> = ok
                .iter()
                .map(|r| if r.covers(delta) == Some(true) { 1.0 } else { 0.0 })
                .collect();
            let lengths: Vec<f64> = ok.iter().filter_map(|r| Some(r.ci_high? - r.ci_low?)).collect();
            let ses: Vec<f64> = ok.iter().filter_map(|r| r.se).collect();
            rows.push(ReportRow {
                scenario_id: spec.id.clone(),
                design: spec.design.name().to_string(),
                periods: spec.periods,
                n: spec.n,
                outcome_model: spec.outcome,
                fit_model: model,
                intervention: k + 1,
                truth: delta,
                bias: m - delta,
                sd,
                coverage_pct: 100.0 * mean(&covered),
                ci_length: mean(&lengths),
                mean_se: mean(&ses),
                mc_se_bias: f64::NAN,
                mc_se_coverage: f64::NAN,
                n_fail: recs.len() - ok.len(),
                successes: ok.len(),
            });
        }
    }
    mc_standard_errors(&mut rows);
    rows
}

pub fn write_replicates<W: std::io::Write>(records: &[ReplicateRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replicates<R: std::io::Read>(reader: R) -> Result<Vec<ReplicateRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_report<W: std::io::Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs scenarios in order, stopping at the first aborted one.
pub fn run_study(specs: &[ScenarioSpec], opts: &StudyOptions) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for spec in specs {
        rows.extend(run_scenario(spec, opts)?.rows);
    }
    Ok(rows)
}

/// A design arm of the power comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub design: LayoutKind,
    #[serde(rename = "T")]
    pub periods: usize,
    #[serde(default = "default_offset")]
    pub offset: usize,
}

/// Power of the exposure-specific model over a grid of `Δ₁`, with linearly
/// increasing effects and `Δ₂ = Δ₁ + gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub id: String,
    pub designs: Vec<DesignSpec>,
    pub n: Vec<usize>,
    pub delta1: Vec<f64>,
    pub gap: f64,
    pub replicates: usize,
    pub bootstrap: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    pub variance: VarianceComponents,
    #[serde(default = "default_time_effects")]
    pub time_effects: [f64; 2],
}

impl PowerSpec {
    /// One Model-B scenario per design, `n` and `Δ₁`.
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for d in &self.designs {
            for &n in &self.n {
                for &delta1 in &self.delta1 {
                    out.push(ScenarioSpec {
                        id: format!("{}-{}-T{}-n{n}-d{delta1:.2}", self.id, d.design.name(), d.periods),
                        design: d.design,
                        periods: d.periods,
                        offset: d.offset,
                        n,
                        outcome: OutcomeModel::B1,
                        effect: EffectSize::Explicit {
                            delta1,
                            delta2: delta1 + self.gap,
                        },
                        models: vec![ModelKind::B],
                        replicates: self.replicates,
                        bootstrap: self.bootstrap,
                        level: self.level,
                        seed: self.seed,
                        variance: self.variance.clone(),
                        time_effects: self.time_effects,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub design: String,
    pub n: usize,
    pub delta1: f64,
    pub intervention: usize,
    pub power: f64,
    pub mc_se: f64,
}

/// Share of replicates whose percentile interval for `Δ_k` excludes 0.
pub fn power_rows(spec: &ScenarioSpec, records: &[ReplicateRecord], delta1: f64) -> Vec<PowerRow> {
    let interventions = records.iter().map(|r| r.intervention).max().unwrap_or(0);
    (1..=interventions)
        .map(|k| {
            let hits: Vec<bool> = records
                .iter()
                .filter(|r| r.intervention == k && r.fit_model == ModelKind::B && !r.failed)
                .filter_map(|r| r.excludes_zero())
                .collect();
            let p = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
            PowerRow {
                design: spec.design.name().to_string(),
                n: spec.n,
                delta1,
                intervention: k,
                power: p,
                mc_se: mc_se_proportion(p, hits.len()),
            }
        })
        .collect()
}

pub fn run_power(spec: &PowerSpec, opts: &StudyOptions) -> Result<Vec<PowerRow>> {
    let mut rows = Vec::new();
    for scenario in spec.scenarios() {
        let outcome = run_scenario(&scenario, opts)?;
        let EffectSize::Explicit { delta1, .. } = scenario.effect else {
            unreachable!("power scenarios carry explicit deltas")
        };
        rows.extend(power_rows(&scenario, &outcome.records, delta1));
    }
    Ok(rows)
}

pub fn write_power<W: std::io::Write>(rows: &[PowerRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 7] = ["table1", "table2", "table3", "table4", "fig5", "fig7", "sim2"];

/// Factorial offset used at each `T` of the estimator comparison.
pub fn factorial_offset(periods: usize) -> usize {
    if periods >= 11 {
        3
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Study(Vec<ScenarioSpec>),
    Power(PowerSpec),
    Bias(BiasPreset),
}

/// Expected constant-effect estimates at fixed design scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPreset {
    pub designs: Vec<DesignLayout>,
    pub b_grid: Vec<f64>,
    pub scenarios: Vec<CurveScenario>,
}

/// Replication settings shared by the study presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetSettings {
    pub replicates: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for PresetSettings {
    fn default() -> Self {
        Self {
            replicates: 500,
            bootstrap: 500,
            seed: 20_250_101,
        }
    }
}

fn table_scenarios(name: &str, design: LayoutKind, effect: EffectSize, s: PresetSettings) -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for t in [5, 11] {
        let offset = if design == LayoutKind::Concurrent { 1 } else { factorial_offset(t) };
        for outcome in OutcomeModel::ALL {
            let regime = match effect {
                EffectSize::Small => "small",
                EffectSize::Large => "large",
                EffectSize::Explicit { .. } => "explicit",
            };
            out.push(ScenarioSpec {
                id: format!("{name}-{}-T{t}-{regime}-{outcome}", design.name()),
                design,
                periods: t,
                offset,
                n: 30,
                outcome,
                effect,
                models: default_models(),
                replicates: s.replicates,
                bootstrap: s.bootstrap,
                level: 0.95,
                seed: s.seed,
                variance: default_variance(),
                time_effects: default_time_effects(),
            });
        }
    }
    out
}

/// The two-design power comparison at `T = 5` with eight clusters each.
pub fn sim2_spec(s: PresetSettings) -> PowerSpec {
    PowerSpec {
        id: "sim2".into(),
        designs: vec![
            DesignSpec {
                design: LayoutKind::Concurrent,
                periods: 5,
                offset: 1,
            },
            DesignSpec {
                design: LayoutKind::FactorialAugmented,
                periods: 5,
                offset: 1,
            },
        ],
        n: vec![30, 100, 500],
        delta1: (0..7).map(|i| 0.01 + 0.1 * i as f64).collect(),
        gap: 0.28,
        replicates: s.replicates,
        bootstrap: s.bootstrap,
        level: 0.95,
        seed: s.seed,
        variance: VarianceComponents::new(0.05, 0.95).expect("positive components"),
        time_effects: default_time_effects(),
    }
}

fn figure_preset(design: LayoutKind) -> Result<BiasPreset> {
    let t = 11;
    let opts = LayoutOptions {
        offset: if design == LayoutKind::Concurrent { 1 } else { factorial_offset(t) },
        ..LayoutOptions::default()
    };
    let layout = DesignLayout::build(design, t, 2, opts)?;
    let effect = EffectSize::Large;
    let scenarios = [OutcomeModel::A, OutcomeModel::B1, OutcomeModel::B2, OutcomeModel::B4]
        .into_iter()
        .map(|o| {
            Ok(CurveScenario {
                name: o.name().to_string(),
                specs: outcome_specs(o, &effect, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasPreset {
        designs: vec![layout],
        b_grid: vec![1.0 / t as f64],
        scenarios,
    })
}

pub fn preset(name: &str, settings: PresetSettings) -> Result<Preset> {
    Ok(match name {
        "table1" => Preset::Study(table_scenarios(name, LayoutKind::Concurrent, EffectSize::Small, settings)),
        "table2" => Preset::Study(table_scenarios(name, LayoutKind::Concurrent, EffectSize::Large, settings)),
        "table3" => Preset::Study(table_scenarios(name, LayoutKind::FactorialAugmented, EffectSize::Small, settings)),
        "table4" => Preset::Study(table_scenarios(name, LayoutKind::FactorialAugmented, EffectSize::Large, settings)),
        "fig5" => Preset::Bias(figure_preset(LayoutKind::Concurrent)?),
        "fig7" => Preset::Bias(figure_preset(LayoutKind::FactorialAugmented)?),
        "sim2" => Preset::Power(sim2_spec(settings)),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Reads a scenario list or a single scenario from JSON.
pub fn scenarios_from_json(text: &str) -> Result<Vec<ScenarioSpec>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let specs = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(specs)
}

/// Replicate CSV location for `id` under `dir`.
pub fn replicate_file(dir: &Path, id: &str) -> PathBuf {
    dir.join("replicates").join(format!("{id}.csv"))
}
