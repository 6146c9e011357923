//! Individual-level outcome generation and cluster-period summaries.
//!
//! `y_ijs = β_j + Σ_k x_kij δ_{k,e_kij} + α_i + ε_ijs`, with Gaussian `α_i` and
//! `ε_ijs`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::curves::EffectCurve;
use crate::design::DesignLayout;
use crate::error::{Error, Result};
use crate::rng::{self, Gaussian};
use crate::variance::VarianceComponents;

/// Cluster-period sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellSizes {
    Equal(usize),
    PerCell(Vec<Vec<usize>>),
}

impl CellSizes {
    pub fn get(&self, i: usize, j: usize) -> usize {
        match self {
            CellSizes::Equal(n) => *n,
            CellSizes::PerCell(v) => v[i][j],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub layout: DesignLayout,
    pub curve: EffectCurve,
    pub beta: Vec<f64>,
    pub vc: VarianceComponents,
    pub sizes: CellSizes,
    pub seed: u64,
}

/// `T` equally spaced period effects from `first` to `last`.
pub fn linear_time_effects(periods: usize, first: f64, last: f64) -> Vec<f64> {
    if periods == 1 {
        return vec![first];
    }
    let step = (last - first) / (periods - 1) as f64;
    (0..periods).map(|j| first + step * j as f64).collect()
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.layout.periods();
        if self.beta.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                got: self.beta.len(),
                context: "period effects",
            });
        }
        if self.curve.periods() != t || self.curve.interventions() != self.layout.interventions() {
            return Err(Error::InvalidConfig(format!(
                "effect curve is for T={}, m={} but the layout has T={t}, m={}",
                self.curve.periods(),
                self.curve.interventions(),
                self.layout.interventions()
            )));
        }
        self.vc.validate()?;
        match &self.sizes {
            CellSizes::Equal(0) => return Err(Error::InvalidConfig("cluster-period size must be at least 1".into())),
            CellSizes::Equal(_) => {}
            CellSizes::PerCell(v) => {
                if v.len() != self.layout.clusters() || v.iter().any(|r| r.len() != t || r.contains(&0)) {
                    return Err(Error::InvalidConfig("per-cell sizes must be a positive I x T table".into()));
                }
            }
        }
        Ok(())
    }

    /// Mean of cell `(i, j)` (0-based) without noise.
    pub fn cell_mean(&self, i: usize, j: usize) -> f64 {
        let mut mu = self.beta[j];
        for k in 1..=self.layout.interventions() {
            let e = self.layout.exposure_time(k, i + 1, j + 1);
            if e > 0 {
                mu += self.curve.effect(k, e);
            }
        }
        mu
    }
}

/// Individual outcomes grouped by cluster-period.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    periods: usize,
    interventions: usize,
    clusters: usize,
    /// Per cell (`i * T + j`): treatment indicators, one per intervention.
    arms: Vec<Vec<bool>>,
    /// Per cell: exposure times, one per intervention.
    exposures: Vec<Vec<usize>>,
    /// Per cell: outcomes in individual order.
    outcomes: Vec<Vec<f64>>,
}

/// Summary of one cluster-period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cluster: usize,
    pub period: usize,
    pub n: usize,
    pub mean: f64,
    /// Within-cell sum of squares `Σ_s (y_ijs − ȳ_ij)²`.
    pub ssw: f64,
}

/// All cluster-period summaries of a dataset, row-major by cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    pub periods: usize,
    pub clusters: usize,
    pub cells: Vec<CellSummary>,
}

impl CellTable {
    pub fn cell(&self, i: usize, j: usize) -> &CellSummary {
        &self.cells[i * self.periods + j]
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.n).sum()
    }

    pub fn within_ss(&self) -> f64 {
        self.cells.iter().map(|c| c.ssw).sum()
    }

    pub fn sizes(&self) -> Vec<Vec<usize>> {
        (0..self.clusters)
            .map(|i| (0..self.periods).map(|j| self.cell(i, j).n).collect())
            .collect()
    }

    /// Cell means multiplied by `factor` and shifted by `shift[j]`, with the
    /// within sums of squares rescaled to match.
    pub fn affine(&self, factor: f64, shift: &[f64]) -> Self {
        let cells = self
            .cells
            .iter()
            .map(|c| CellSummary {
                mean: factor * c.mean + shift[c.period - 1],
                ssw: factor * factor * c.ssw,
                ..*c
            })
            .collect();
        Self {
            cells,
            ..self.clone()
        }
    }
}

/// Mean and within sum of squares of one cell.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ssw = values.iter().map(|y| (y - mean) * (y - mean)).sum();
    (mean, ssw)
}

impl TrialDataset {
    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn interventions(&self) -> usize {
        self.interventions
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.outcomes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Outcomes of cell `(i, j)` (0-based).
    pub fn cell_outcomes(&self, i: usize, j: usize) -> &[f64] {
        &self.outcomes[i * self.periods + j]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[f64]> {
        self.outcomes.iter().map(Vec::as_slice)
    }

    pub fn arms(&self, i: usize, j: usize) -> &[bool] {
        &self.arms[i * self.periods + j]
    }

    pub fn exposures(&self, i: usize, j: usize) -> &[usize] {
        &self.exposures[i * self.periods + j]
    }

    /// Every outcome multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.outcomes
            .iter_mut()
            .flatten()
            .for_each(|y| *y *= factor);
        out
    }

    pub fn cluster_period_means(&self) -> CellTable {
        let cells = (0..self.clusters)
            .flat_map(|i| (0..self.periods).map(move |j| (i, j)))
            .map(|(i, j)| {
                let values = self.cell_outcomes(i, j);
                let (mean, ssw) = summarize(values);
                CellSummary {
                    cluster: i + 1,
                    period: j + 1,
                    n: values.len(),
                    mean,
                    ssw,
                }
            })
            .collect();
        CellTable {
            periods: self.periods,
            clusters: self.clusters,
            cells,
        }
    }

    /// Whether the recorded treatment indicators and exposure times are those
    /// of `layout`.
    pub fn check_layout(&self, layout: &DesignLayout) -> Result<()> {
        if layout.periods() != self.periods
            || layout.clusters() != self.clusters
            || layout.interventions() != self.interventions
        {
            return Err(Error::InvalidConfig(format!(
                "dataset has T={}, I={}, m={} but layout has T={}, I={}, m={}",
                self.periods,
                self.clusters,
                self.interventions,
                layout.periods(),
                layout.clusters(),
                layout.interventions()
            )));
        }
        for i in 0..self.clusters {
            for j in 0..self.periods {
                for k in 0..self.interventions {
                    let e = layout.exposure_time(k + 1, i + 1, j + 1);
                    if self.exposures(i, j)[k] != e || self.arms(i, j)[k] != (e > 0) {
                        return Err(Error::InvalidConfig(format!(
                            "cluster {}, period {}: intervention {} disagrees with the layout",
                            i + 1,
                            j + 1,
                            k + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let m = self.interventions;
        let mut header = vec!["cluster".to_string(), "period".into(), "individual".into()];
        header.extend((1..=m).map(|k| format!("x{k}")));
        header.extend((1..=m).map(|k| format!("e{k}")));
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.clusters {
            for j in 0..self.periods {
                for (s, y) in self.cell_outcomes(i, j).iter().enumerate() {
                    let mut rec = vec![(i + 1).to_string(), (j + 1).to_string(), (s + 1).to_string()];
                    rec.extend(self.arms(i, j).iter().map(|&a| u8::from(a).to_string()));
                    rec.extend(self.exposures(i, j).iter().map(|e| e.to_string()));
                    rec.push(format!("{y:?}"));
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `cluster,period,individual,x1..xm,e1..em,y` format. Records
    /// may come in any order; every cluster-period must be present.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let bad_header = |msg: String| Error::Data { line: 1, message: msg };
        if header.len() < 6 || !header.len().is_multiple_of(2) {
            return Err(bad_header(format!("unexpected header {header:?}")));
        }
        let m = (header.len() - 4) / 2;
        let mut expected = vec!["cluster".to_string(), "period".into(), "individual".into()];
        expected.extend((1..=m).map(|k| format!("x{k}")));
        expected.extend((1..=m).map(|k| format!("e{k}")));
        expected.push("y".into());
        if header != expected {
            return Err(bad_header(format!("expected header {}", expected.join(","))));
        }

        struct Row {
            cluster: usize,
            period: usize,
            arms: Vec<bool>,
            exposures: Vec<usize>,
            y: f64,
            line: usize,
        }
        let mut rows = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::Data {
                line,
                message: e.to_string(),
            })?;
            let field = |c: usize| -> &str { rec.get(c).unwrap_or("") };
            let int = |c: usize| -> Result<usize> {
                field(c).parse::<usize>().map_err(|_| Error::Data {
                    line,
                    message: format!("column {} is not a non-negative integer: {:?}", header[c], field(c)),
                })
            };
            let cluster = int(0)?;
            let period = int(1)?;
            int(2)?;
            if cluster == 0 || period == 0 {
                return Err(Error::Data {
                    line,
                    message: "cluster and period are numbered from 1".into(),
                });
            }
            let mut arms = Vec::with_capacity(m);
            for c in 3..3 + m {
                match int(c)? {
                    0 => arms.push(false),
                    1 => arms.push(true),
                    v => {
                        return Err(Error::Data {
                            line,
                            message: format!("{} must be 0 or 1, got {v}", header[c]),
                        })
                    }
                }
            }
            let exposures = (3 + m..3 + 2 * m).map(int).collect::<Result<Vec<_>>>()?;
            let y: f64 = field(3 + 2 * m).parse().map_err(|_| Error::Data {
                line,
                message: format!("y is not a number: {:?}", field(3 + 2 * m)),
            })?;
            if !y.is_finite() {
                return Err(Error::Data {
                    line,
                    message: "y must be finite".into(),
                });
            }
            rows.push(Row {
                cluster,
                period,
                arms,
                exposures,
                y,
                line,
            });
        }
        if rows.is_empty() {
            return Err(Error::Data {
                line: 1,
                message: "no records".into(),
            });
        }
        let clusters = rows.iter().map(|r| r.cluster).max().unwrap_or(0);
        let periods = rows.iter().map(|r| r.period).max().unwrap_or(0);
        let n_cells = clusters * periods;
        let mut arms: Vec<Option<Vec<bool>>> = vec![None; n_cells];
        let mut exposures: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
        let mut outcomes: Vec<Vec<f64>> = vec![Vec::new(); n_cells];
        for row in rows {
            let c = (row.cluster - 1) * periods + row.period - 1;
            match &arms[c] {
                None => {
                    arms[c] = Some(row.arms);
                    exposures[c] = row.exposures;
                }
                Some(a) if *a != row.arms || exposures[c] != row.exposures => {
                    return Err(Error::Data {
                        line: row.line,
                        message: format!(
                            "treatment columns differ from earlier records of cluster {}, period {}",
                            row.cluster, row.period
                        ),
                    })
                }
                Some(_) => {}
            }
            outcomes[c].push(row.y);
        }
        let arms = arms
            .into_iter()
            .enumerate()
            .map(|(c, a)| {
                a.ok_or_else(|| Error::Data {
                    line: 0,
                    message: format!("no records for cluster {}, period {}", c / periods + 1, c % periods + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            periods,
            interventions: m,
            clusters,
            arms,
            exposures,
            outcomes,
        })
    }
}

/// One dataset drawn from the stream of replicate `replicate`.
pub fn simulate_replicate(config: &SimulationConfig, replicate: u64) -> Result<TrialDataset> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, &[rng::SIMULATION, replicate]);
    let gauss = Gaussian::default();
    let layout = &config.layout;
    let (t, m, clusters) = (layout.periods(), layout.interventions(), layout.clusters());
    let sd_cluster = config.vc.cluster.sqrt();
    let sd_resid = config.vc.residual.sqrt();
    let mut arms = Vec::with_capacity(clusters * t);
    let mut exposures = Vec::with_capacity(clusters * t);
    let mut outcomes = Vec::with_capacity(clusters * t);
    for i in 0..clusters {
        let alpha = sd_cluster * gauss.sample(&mut rng);
        for j in 0..t {
            let e: Vec<usize> = (1..=m).map(|k| layout.exposure_time(k, i + 1, j + 1)).collect();
            let mu = config.cell_mean(i, j) + alpha;
            let n = config.sizes.get(i, j);
            outcomes.push((0..n).map(|_| mu + sd_resid * gauss.sample(&mut rng)).collect());
            arms.push(e.iter().map(|&e| e > 0).collect());
            exposures.push(e);
        }
    }
    Ok(TrialDataset {
        periods: t,
        interventions: m,
        clusters,
        arms,
        exposures,
        outcomes,
    })
}

pub fn simulate(config: &SimulationConfig) -> Result<TrialDataset> {
    simulate_replicate(config, 0)
}
