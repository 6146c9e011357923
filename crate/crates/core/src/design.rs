//! Stepped-wedge layouts with one or more interventions.
//!
//! A layout records, for every cluster and intervention, the first period in
//! which the intervention is applied. Everything else (treatment indicators,
//! exposure times, the `X_i` and `Z_i` matrices) is derived from that map.
//!
//! Clusters, interventions and periods are 1-based in every public method of
//! this module, matching the usual `(k, i, j)` notation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{Exact, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    Single,
    Concurrent,
    Supplementation,
    Factorial,
    FactorialAugmented,
    Custom,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::Single => "single",
            LayoutKind::Concurrent => "concurrent",
            LayoutKind::Supplementation => "supplementation",
            LayoutKind::Factorial => "factorial",
            LayoutKind::FactorialAugmented => "factorial-augmented",
            LayoutKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "single" => LayoutKind::Single,
            "concurrent" => LayoutKind::Concurrent,
            "supplementation" => LayoutKind::Supplementation,
            "factorial" => LayoutKind::Factorial,
            "factorial-augmented" => LayoutKind::FactorialAugmented,
            "custom" => LayoutKind::Custom,
            other => return Err(Error::InvalidDesign(format!("unknown layout kind `{other}`"))),
        })
    }
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutOptions {
    /// Periods between the first and second intervention start in a cluster
    /// (supplementation and factorial layouts). Introducing the second
    /// intervention at the `p`-th exposure period of the first is `offset = p - 1`.
    pub offset: usize,
    /// Clusters per sequence.
    pub replicates: usize,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            offset: 1,
            replicates: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignLayout {
    kind: LayoutKind,
    periods: usize,
    interventions: usize,
    /// `starts[cluster][intervention]`, 1-based period or `None` for never.
    starts: Vec<Vec<Option<usize>>>,
}

/// Per-cluster treatment matrices: `x` is `T × m`, `z` is `T × m(T−1)` with
/// the `Z_{k,i}` blocks side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentMatrices<S> {
    pub x: Matrix<S>,
    pub z: Matrix<S>,
}

/// Fixed-effect structure used for identifiability checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedStructure {
    /// One coefficient per intervention.
    Constant,
    /// One coefficient per intervention and exposure time.
    ExposureSpecific,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentifiabilityReport {
    pub identifiable: bool,
    pub rank: usize,
    pub columns: usize,
    /// Treatment coordinates that are not estimable on their own.
    pub non_estimable: Vec<String>,
    /// A basis of the estimable treatment functionals, in reduced echelon form.
    pub estimable_functions: Vec<String>,
}

impl DesignLayout {
    pub fn build(kind: LayoutKind, periods: usize, interventions: usize, opts: LayoutOptions) -> Result<Self> {
        if periods < 2 {
            return Err(Error::InvalidDesign(format!("need at least 2 periods, got {periods}")));
        }
        if interventions == 0 {
            return Err(Error::InvalidDesign("need at least one intervention".into()));
        }
        if opts.replicates == 0 {
            return Err(Error::InvalidDesign("replicates must be at least 1".into()));
        }
        let t = periods;
        let m = interventions;
        let sequences: Vec<Vec<Option<usize>>> = match kind {
            LayoutKind::Single => {
                if m != 1 {
                    return Err(Error::InvalidDesign(format!(
                        "single layouts have one intervention, got {m}"
                    )));
                }
                (2..=t).map(|s| vec![Some(s)]).collect()
            }
            LayoutKind::Concurrent => {
                if m > 1 && t < 3 {
                    return Err(Error::InvalidDesign(format!(
                        "concurrent layouts with {m} interventions need T >= 3, got {t}"
                    )));
                }
                let mut seqs = Vec::with_capacity(m * (t - 1));
                for k in 0..m {
                    for s in 2..=t {
                        let mut row = vec![None; m];
                        row[k] = Some(s);
                        seqs.push(row);
                    }
                }
                seqs
            }
            LayoutKind::Supplementation => {
                require_two(kind, m)?;
                let o = opts.offset;
                if o == 0 {
                    return Err(Error::InvalidDesign("offset must be at least 1".into()));
                }
                if t < 2 + o {
                    return Err(Error::InvalidDesign(format!(
                        "offset {o} starts the add-on after period {t}; need T >= {}",
                        2 + o
                    )));
                }
                (2..=t - o).map(|s| vec![Some(s), Some(s + o)]).collect()
            }
            LayoutKind::Factorial | LayoutKind::FactorialAugmented => {
                require_two(kind, m)?;
                let o = opts.offset;
                if o == 0 {
                    return Err(Error::InvalidDesign("offset must be at least 1".into()));
                }
                if t < 3 {
                    return Err(Error::InvalidDesign(format!(
                        "factorial layouts need T >= 3, got {t}"
                    )));
                }
                if 2 + o > t {
                    return Err(Error::InvalidDesign(format!(
                        "offset {o} starts the second intervention of the first sequence after period {t}"
                    )));
                }
                let later = |s: usize| if s + o <= t { Some(s + o) } else { None };
                let mut seqs = Vec::new();
                if t == 3 {
                    // The two-sequence factorial is not identifiable at T = 3;
                    // the single-intervention sequences starting in the last
                    // period complete it, so the augmented variant adds nothing.
                    seqs.push(vec![Some(2), later(2)]);
                    seqs.push(vec![Some(3), None]);
                    seqs.push(vec![None, Some(3)]);
                    seqs.push(vec![later(2), Some(2)]);
                } else {
                    for s in 2..t {
                        seqs.push(vec![Some(s), later(s)]);
                        seqs.push(vec![later(s), Some(s)]);
                    }
                }
                if kind == LayoutKind::FactorialAugmented && t > 3 {
                    seqs.push(vec![Some(t), None]);
                    seqs.push(vec![None, Some(t)]);
                }
                seqs
            }
            LayoutKind::Custom => {
                return Err(Error::InvalidDesign(
                    "custom layouts are built from an explicit start map".into(),
                ))
            }
        };
        let starts = sequences
            .into_iter()
            .flat_map(|row| std::iter::repeat_n(row, opts.replicates))
            .collect();
        let layout = Self {
            kind,
            periods: t,
            interventions: m,
            starts,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// A layout from an explicit `starts[cluster][intervention]` map.
    pub fn custom(periods: usize, interventions: usize, starts: Vec<Vec<Option<usize>>>) -> Result<Self> {
        Self::with_kind(LayoutKind::Custom, periods, interventions, starts)
    }

    pub(crate) fn with_kind(
        kind: LayoutKind,
        periods: usize,
        interventions: usize,
        starts: Vec<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let layout = Self {
            kind,
            periods,
            interventions,
            starts,
        };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        if self.periods < 2 {
            return Err(Error::InvalidDesign("need at least 2 periods".into()));
        }
        if self.interventions == 0 {
            return Err(Error::InvalidDesign("need at least one intervention".into()));
        }
        if self.starts.is_empty() {
            return Err(Error::InvalidDesign("layout has no clusters".into()));
        }
        for (i, row) in self.starts.iter().enumerate() {
            if row.len() != self.interventions {
                return Err(Error::InvalidDesign(format!(
                    "cluster {} lists {} start periods, expected {}",
                    i + 1,
                    row.len(),
                    self.interventions
                )));
            }
            for (k, s) in row.iter().enumerate() {
                if let Some(s) = *s {
                    if s < 2 || s > self.periods {
                        return Err(Error::InvalidDesign(format!(
                            "cluster {} starts intervention {} in period {s}; must lie in 2..={}",
                            i + 1,
                            k + 1,
                            self.periods
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    /// `T`.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// `m`.
    pub fn interventions(&self) -> usize {
        self.interventions
    }

    /// `I`.
    pub fn clusters(&self) -> usize {
        self.starts.len()
    }

    /// Number of exposure-time coefficients per intervention, `T − 1`.
    pub fn max_exposure(&self) -> usize {
        self.periods - 1
    }

    pub fn start(&self, k: usize, i: usize) -> Option<usize> {
        self.starts[i - 1][k - 1]
    }

    pub fn starts(&self) -> &[Vec<Option<usize>>] {
        &self.starts
    }

    /// `x_{kij}`.
    pub fn treated(&self, k: usize, i: usize, j: usize) -> bool {
        self.start(k, i).is_some_and(|s| j >= s)
    }

    /// `e_{kij}`, the number of periods up to and including `j` spent under
    /// intervention `k`.
    pub fn exposure_time(&self, k: usize, i: usize, j: usize) -> usize {
        match self.start(k, i) {
            Some(s) if j >= s => j - s + 1,
            _ => 0,
        }
    }

    pub fn treatment_matrices<S: Scalar>(&self, i: usize) -> TreatmentMatrices<S> {
        let t = self.periods;
        let m = self.interventions;
        let q = t - 1;
        let mut x = Matrix::zeros(t, m);
        let mut z = Matrix::zeros(t, m * q);
        for k in 1..=m {
            for j in 1..=t {
                let e = self.exposure_time(k, i, j);
                if e > 0 {
                    x[(j - 1, k - 1)] = S::one();
                    z[(j - 1, (k - 1) * q + e - 1)] = S::one();
                }
            }
        }
        TreatmentMatrices { x, z }
    }

    pub fn matrices<S: Scalar>(&self) -> Vec<TreatmentMatrices<S>> {
        (1..=self.clusters()).map(|i| self.treatment_matrices(i)).collect()
    }

    /// Highest exposure time reached by each intervention anywhere in the layout.
    pub fn reached_exposure(&self) -> Vec<usize> {
        (1..=self.interventions)
            .map(|k| {
                (1..=self.clusters())
                    .map(|i| self.exposure_time(k, i, self.periods))
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Stacked cell-level fixed-effect design: `T` period indicators followed
    /// by the treatment columns, one row per cluster-period.
    pub fn stacked_design<S: Scalar>(&self, structure: FixedStructure) -> Matrix<S> {
        let t = self.periods;
        let mats = self.matrices::<S>();
        let trt_cols = match structure {
            FixedStructure::Constant => self.interventions,
            FixedStructure::ExposureSpecific => self.interventions * (t - 1),
        };
        let mut d = Matrix::zeros(self.clusters() * t, t + trt_cols);
        for (i, tm) in mats.iter().enumerate() {
            let trt = match structure {
                FixedStructure::Constant => &tm.x,
                FixedStructure::ExposureSpecific => &tm.z,
            };
            for j in 0..t {
                let row = i * t + j;
                d[(row, j)] = S::one();
                for c in 0..trt_cols {
                    d[(row, t + c)] = trt[(j, c)].clone();
                }
            }
        }
        d
    }

    pub fn treatment_labels(&self, structure: FixedStructure) -> Vec<String> {
        match structure {
            FixedStructure::Constant => (1..=self.interventions).map(|k| format!("theta[{k}]")).collect(),
            FixedStructure::ExposureSpecific => (1..=self.interventions)
                .flat_map(|k| (1..self.periods).map(move |e| format!("delta[{k},{e}]")))
                .collect(),
        }
    }

    /// Column-rank check of the stacked fixed-effect design, done in exact
    /// arithmetic.
    pub fn check_identifiability(&self, structure: FixedStructure) -> IdentifiabilityReport {
        let t = self.periods;
        let design = self.stacked_design::<Exact>(structure);
        let columns = design.ncols();
        let null = design.null_space();
        let rank = columns - null.nrows();
        let labels = self.treatment_labels(structure);
        let trt_null = null.block(0..null.nrows(), t..columns);
        let non_estimable = (0..labels.len())
            .filter(|&c| (0..trt_null.nrows()).any(|r| !num_traits::Zero::is_zero(&trt_null[(r, c)])))
            .map(|c| labels[c].clone())
            .collect();
        let estimable_basis = if trt_null.nrows() == 0 {
            Matrix::<Exact>::identity(labels.len())
        } else {
            trt_null.null_space()
        };
        let (reduced, pivots) = estimable_basis.rref();
        let estimable_functions = (0..pivots.len())
            .map(|r| format_combination(reduced.row(r), &labels))
            .collect();
        IdentifiabilityReport {
            identifiable: null.nrows() == 0,
            rank,
            columns,
            non_estimable,
            estimable_functions,
        }
    }

    /// Text grid of the layout: one row per cluster, one column per period,
    /// each cell showing the effect it carries (`0`, `d1,2`, `d1,2+d2,1`, …).
    pub fn render_grid(&self) -> String {
        let labels: Vec<Vec<String>> = (1..=self.clusters())
            .map(|i| (1..=self.periods).map(|j| self.cell_label(i, j)).collect())
            .collect();
        let width = labels
            .iter()
            .flatten()
            .map(String::len)
            .max()
            .unwrap_or(1)
            .max(format!("j={}", self.periods).len());
        let id_width = format!("i={}", self.clusters()).len();
        let mut out = String::new();
        let _ = write!(out, "{:id_width$} ", "");
        for j in 1..=self.periods {
            let _ = write!(out, "| {:^width$} ", format!("j={j}"));
        }
        out.push_str("|\n");
        let rule = format!(
            "{}-{}|\n",
            "-".repeat(id_width),
            format!("+{}", "-".repeat(width + 2)).repeat(self.periods)
        );
        out.push_str(&rule);
        for (i, row) in labels.iter().enumerate() {
            let _ = write!(out, "{:<id_width$} ", format!("i={}", i + 1));
            for cell in row {
                let _ = write!(out, "| {cell:^width$} ");
            }
            out.push_str("|\n");
        }
        out
    }

    fn cell_label(&self, i: usize, j: usize) -> String {
        let parts: Vec<String> = (1..=self.interventions)
            .filter_map(|k| {
                let e = self.exposure_time(k, i, j);
                (e > 0).then(|| {
                    if self.interventions == 1 {
                        format!("d{e}")
                    } else {
                        format!("d{k},{e}")
                    }
                })
            })
            .collect();
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join("+")
        }
    }

    pub fn to_json(&self) -> LayoutJson {
        LayoutJson {
            kind: self.kind,
            periods: self.periods,
            interventions: self.interventions,
            clusters: self
                .starts
                .iter()
                .enumerate()
                .map(|(i, s)| ClusterJson {
                    id: i + 1,
                    starts: s.clone(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &LayoutJson) -> Result<Self> {
        if json.clusters.iter().enumerate().any(|(i, c)| c.id != i + 1) {
            return Err(Error::InvalidDesign("cluster ids must run 1..=I in order".into()));
        }
        Self::with_kind(
            json.kind,
            json.periods,
            json.interventions,
            json.clusters.iter().map(|c| c.starts.clone()).collect(),
        )
    }
}

fn require_two(kind: LayoutKind, m: usize) -> Result<()> {
    if m != 2 {
        return Err(Error::InvalidDesign(format!(
            "{kind} layouts are defined for two interventions, got {m}"
        )));
    }
    Ok(())
}

fn format_combination(coefs: &[Exact], labels: &[String]) -> String {
    use num_traits::{One, Signed, Zero};
    let mut out = String::new();
    for (c, label) in coefs.iter().zip(labels) {
        if c.is_zero() {
            continue;
        }
        let sign = if c.is_negative() { "-" } else { "+" };
        let mag = c.abs();
        if out.is_empty() {
            if c.is_negative() {
                out.push('-');
            }
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag.is_one() {
            out.push_str(label);
        } else {
            let _ = write!(out, "{mag}*{label}");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutJson {
    pub kind: LayoutKind,
    #[serde(rename = "T")]
    pub periods: usize,
    #[serde(rename = "m")]
    pub interventions: usize,
    pub clusters: Vec<ClusterJson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterJson {
    pub id: usize,
    pub starts: Vec<Option<usize>>,
}
