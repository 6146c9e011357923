mod plot;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use swedge::bias::{bias_curve_table, bias_rows, write_bias_csv, BiasRow, CurveScenario};
use swedge::design::{LayoutJson, LayoutOptions};
use swedge::estimate::{bootstrap, BootstrapOptions, FitOptions, FitResult, Method, ModelFitter};
use swedge::study::{
    outcome_specs, preset, run_power, run_scenario, scenarios_from_json, write_power, write_report,
    BiasPreset, DesignSpec, EffectSize, OutcomeModel, PowerSpec, Preset, PresetSettings, ScenarioSpec, StudyOptions,
};
use swedge::{fixture, simulate, DesignLayout, EffectCurve, LayoutKind, ModelKind, TrialDataset};

const DEFAULT_SEED: u64 = 20_250_101;
const FIXTURE_CSV: &str = include_str!("../data/ponder_like.csv");
const FIXTURE_LAYOUT: &str = include_str!("../data/ponder_like_layout.json");

#[derive(Parser)]
#[command(name = "swedge", version, about = "Stepped-wedge designs with multiple interventions and time-varying effects")]
struct Cli {
    /// Base seed for every randomized step.
    #[arg(long, global = true, env = "SWEDGE_SEED")]
    seed: Option<u64>,
    /// Worker threads for studies and bootstraps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print a layout grid and write its JSON description.
    Design {
        #[arg(long)]
        kind: String,
        #[arg(long = "T")]
        periods: usize,
        /// Interventions (defaults to 1 for single layouts, 2 otherwise).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 1)]
        offset: usize,
        /// Clusters per sequence.
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Expected constant-effect estimates under time-varying effects.
    Bias {
        #[arg(long, conflicts_with_all = ["config", "kind"])]
        preset: Option<String>,
        #[arg(long, conflicts_with = "kind")]
        config: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long = "T")]
        periods: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 1)]
        offset: usize,
        /// Design scalars; fractions such as `1/3` are accepted.
        #[arg(long, value_delimiter = ',')]
        b: Vec<String>,
        /// Outcome models A, B1..B4.
        #[arg(long, value_delimiter = ',')]
        family: Vec<String>,
        /// small or large.
        #[arg(long)]
        regime: Option<String>,
        /// Explicit average effects `Δ1,Δ2`.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        /// A stacked effect vector `δ_1..δ_m`, fractions accepted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta: Vec<String>,
        /// Also write an SVG of true against expected curves.
        #[arg(long)]
        plot: bool,
    },
    /// Fit models A, B or C to a dataset.
    Fit {
        #[arg(long, required_unless_present = "fixture")]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "fixture")]
        layout: Option<PathBuf>,
        /// Use the bundled synthetic fixture.
        #[arg(long, conflicts_with_all = ["data", "layout"])]
        fixture: bool,
        /// A, B, C or all.
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        ml: bool,
    },
    /// Monte Carlo comparison of the fitted models.
    Study {
        #[arg(long, required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Only run scenarios whose id contains this text.
        #[arg(long)]
        only: Option<String>,
    },
    /// Empirical power of the exposure-specific model.
    Power {
        #[arg(long, required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        delta1: Vec<f64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Write a simulated dataset and its layout.
    Simulate {
        /// Generate the synthetic fixture instead of a scenario.
        #[arg(long, required_unless_present = "scenario")]
        fixture: bool,
        #[arg(long, conflicts_with = "fixture")]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
}

/// Bias grid read from `--config`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasConfig {
    designs: Vec<DesignSpec>,
    #[serde(default = "two")]
    m: usize,
    b: Vec<f64>,
    outcomes: Vec<OutcomeModel>,
    effect: EffectSize,
}

fn two() -> usize {
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .chain()
                .any(|e| e.downcast_ref::<swedge::Error>().is_some_and(|e| e.is_numerical()));
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let ctx = Ctx {
        seed,
        out: cli.out_dir.clone(),
        format: cli.format,
        study: StudyOptions {
            workers: cli.workers,
            out_dir: Some(cli.out_dir.clone()),
        },
    };
    match cli.command {
        Command::Design {
            kind,
            periods,
            m,
            offset,
            replicates,
        } => cmd_design(&ctx, &kind, periods, m, offset, replicates),
        Command::Bias {
            preset,
            config,
            kind,
            periods,
            m,
            offset,
            b,
            family,
            regime,
            deltas,
            delta,
            plot,
        } => {
            let grid = match (preset, config) {
                (Some(name), _) => match swedge::study::preset(&name, PresetSettings::default())? {
                    Preset::Bias(p) => BiasGrid::from_preset(p),
                    _ => bail!("preset {name} is not a bias preset (use fig5 or fig7)"),
                },
                (None, Some(path)) => BiasGrid::from_config(serde_json::from_str(&read(&path)?)?)?,
                (None, None) => {
                    let kind = kind.ok_or_else(|| anyhow!("give --preset, --config or --kind with --T"))?;
                    let periods = periods.ok_or_else(|| anyhow!("--T is required with --kind"))?;
                    let layout = build_layout(&kind, periods, m, offset, 1)?;
                    BiasGrid::from_flags(layout, &b, &family, regime.as_deref(), &deltas, &delta)?
                }
            };
            cmd_bias(&ctx, grid, plot)
        }
        Command::Fit {
            data,
            layout,
            fixture,
            model,
            bootstrap,
            level,
            ml,
        } => {
            let (dataset, layout) = if fixture {
                (
                    TrialDataset::read_csv(FIXTURE_CSV.as_bytes())?,
                    DesignLayout::from_json(&serde_json::from_str::<LayoutJson>(FIXTURE_LAYOUT)?)?,
                )
            } else {
                let data = data.expect("required by clap");
                let layout = layout.expect("required by clap");
                let file = File::open(&data).with_context(|| format!("opening {}", data.display()))?;
                let dataset = TrialDataset::read_csv(file).with_context(|| format!("reading {}", data.display()))?;
                let json: LayoutJson = serde_json::from_str(&read(&layout)?)
                    .with_context(|| format!("parsing layout {}", layout.display()))?;
                (dataset, DesignLayout::from_json(&json)?)
            };
            let method = if ml { Method::Ml } else { Method::Reml };
            cmd_fit(&ctx, &dataset, &layout, &model, bootstrap, level, method)
        }
        Command::Study {
            preset: name,
            config,
            replicates,
            bootstrap,
            only,
        } => {
            let settings = settings(seed, replicates, bootstrap);
            let mut specs = match (name, config) {
                (Some(name), _) => match preset(&name, settings)? {
                    Preset::Study(s) => s,
                    _ => bail!("preset {name} is not a study preset (use table1..table4)"),
                },
                (None, Some(path)) => {
                    let mut specs = scenarios_from_json(&read(&path)?)?;
                    for s in &mut specs {
                        s.replicates = replicates.unwrap_or(s.replicates);
                        s.bootstrap = bootstrap.unwrap_or(s.bootstrap);
                        if cli.seed.is_some() {
                            s.seed = seed;
                        }
                    }
                    specs
                }
                (None, None) => unreachable!("clap requires one"),
            };
            if let Some(filter) = only {
                specs.retain(|s| s.id.contains(&filter));
                if specs.is_empty() {
                    bail!("no scenario id contains {filter:?}");
                }
            }
            cmd_study(&ctx, &specs)
        }
        Command::Power {
            preset: name,
            config,
            n,
            delta1,
            replicates,
            bootstrap,
        } => {
            let settings = settings(seed, replicates, bootstrap);
            let mut spec = match (name, config) {
                (Some(name), _) => match preset(&name, settings)? {
                    Preset::Power(p) => p,
                    _ => bail!("preset {name} is not a power preset (use sim2)"),
                },
                (None, Some(path)) => {
                    let mut spec: PowerSpec = serde_json::from_str(&read(&path)?)?;
                    spec.replicates = replicates.unwrap_or(spec.replicates);
                    spec.bootstrap = bootstrap.unwrap_or(spec.bootstrap);
                    if cli.seed.is_some() {
                        spec.seed = seed;
                    }
                    spec
                }
                (None, None) => unreachable!("clap requires one"),
            };
            if !n.is_empty() {
                spec.n = n;
            }
            if !delta1.is_empty() {
                spec.delta1 = delta1;
            }
            cmd_power(&ctx, &spec)
        }
        Command::Simulate {
            fixture: use_fixture,
            scenario,
            replicate,
        } => {
            let (config, name) = if use_fixture {
                (fixture::config(seed)?, "ponder_like".to_string())
            } else {
                let path = scenario.expect("required by clap");
                let mut spec: ScenarioSpec = serde_json::from_str(&read(&path)?)?;
                if cli.seed.is_some() {
                    spec.seed = seed;
                }
                spec.validate()?;
                (spec.simulation_config()?, spec.id.clone())
            };
            let data = simulate::simulate_replicate(&config, replicate)?;
            fs::create_dir_all(&ctx.out)?;
            let data_path = ctx.out.join(format!("{name}.csv"));
            data.write_csv(BufWriter::new(File::create(&data_path)?))?;
            let layout_path = ctx.out.join(format!("{name}_layout.json"));
            write_json(&layout_path, &config.layout.to_json())?;
            println!("wrote {} ({} observations) and {}", data_path.display(), data.len(), layout_path.display());
            Ok(())
        }
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    format: Format,
    study: StudyOptions,
}

impl Ctx {
    fn table_path(&self, stem: &str) -> PathBuf {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.out.join(format!("{stem}.{ext}"))
    }
}

fn settings(seed: u64, replicates: Option<usize>, bootstrap: Option<usize>) -> PresetSettings {
    let d = PresetSettings::default();
    PresetSettings {
        replicates: replicates.unwrap_or(d.replicates),
        bootstrap: bootstrap.unwrap_or(d.bootstrap),
        seed,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().with_context(|| format!("bad number {s:?}"))?;
            let den: f64 = den.trim().parse().with_context(|| format!("bad number {s:?}"))?;
            num / den
        }
        None => s.parse().with_context(|| format!("bad number {s:?}"))?,
    };
    if !value.is_finite() {
        bail!("number {s:?} is not finite");
    }
    Ok(value)
}

fn build_layout(kind: &str, periods: usize, m: Option<usize>, offset: usize, replicates: usize) -> Result<DesignLayout> {
    let kind: LayoutKind = kind.parse()?;
    let m = m.unwrap_or(if kind == LayoutKind::Single { 1 } else { 2 });
    let opts = LayoutOptions { offset, replicates };
    Ok(DesignLayout::build(kind, periods, m, opts)?)
}

fn cmd_design(ctx: &Ctx, kind: &str, periods: usize, m: Option<usize>, offset: usize, replicates: usize) -> Result<()> {
    let layout = build_layout(kind, periods, m, offset, replicates)?;
    print!("{}", layout.render_grid());
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("layout.json");
    write_json(&path, &layout.to_json())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Curves evaluated under each design and design scalar.
struct BiasGrid {
    designs: Vec<DesignLayout>,
    b: Vec<f64>,
    scenarios: Vec<CurveScenario>,
    custom: Option<Vec<Vec<f64>>>,
}

impl BiasGrid {
    fn from_preset(p: BiasPreset) -> Self {
        Self {
            designs: p.designs,
            b: p.b_grid,
            scenarios: p.scenarios,
            custom: None,
        }
    }

    fn from_config(cfg: BiasConfig) -> Result<Self> {
        let mut designs = Vec::new();
        for d in &cfg.designs {
            let opts = LayoutOptions {
                offset: d.offset,
                ..LayoutOptions::default()
            };
            designs.push(DesignLayout::build(d.design, d.periods, cfg.m, opts)?);
        }
        let periods = designs.first().map(|d| d.periods()).ok_or_else(|| anyhow!("no designs given"))?;
        if designs.iter().any(|d| d.periods() != periods) {
            bail!("all designs of a bias config must share T");
        }
        let scenarios = cfg
            .outcomes
            .iter()
            .map(|&o| {
                Ok(CurveScenario {
                    name: o.name().to_string(),
                    specs: outcome_specs(o, &cfg.effect, periods)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            designs,
            b: cfg.b,
            scenarios,
            custom: None,
        })
    }

    fn from_flags(
        layout: DesignLayout,
        b: &[String],
        family: &[String],
        regime: Option<&str>,
        deltas: &[f64],
        delta: &[String],
    ) -> Result<Self> {
        let t = layout.periods();
        let m = layout.interventions();
        let b = if b.is_empty() {
            vec![1.0 / t as f64]
        } else {
            b.iter().map(|s| parse_number(s)).collect::<Result<_>>()?
        };
        let custom = if delta.is_empty() {
            None
        } else {
            let values: Vec<f64> = delta.iter().map(|s| parse_number(s)).collect::<Result<_>>()?;
            if values.len() != m * (t - 1) {
                bail!("--delta needs m(T-1) = {} values, got {}", m * (t - 1), values.len());
            }
            Some(values.chunks(t - 1).map(|c| c.to_vec()).collect())
        };
        let families: Vec<OutcomeModel> = if family.is_empty() {
            if custom.is_some() {
                Vec::new()
            } else {
                OutcomeModel::ALL.to_vec()
            }
        } else {
            family.iter().map(|f| Ok(f.parse()?)).collect::<Result<_>>()?
        };
        if !families.is_empty() && m != 2 {
            bail!("outcome-model families are defined for two interventions; use --delta for m = {m}");
        }
        if !deltas.is_empty() && deltas.len() != 2 {
            bail!("--deltas takes two values, got {}", deltas.len());
        }
        let effect = match (regime, deltas) {
            (Some(_), [_, _]) => bail!("give either --regime or --deltas"),
            (_, [d1, d2]) => EffectSize::Explicit { delta1: *d1, delta2: *d2 },
            (Some("small"), _) => EffectSize::Small,
            (Some("large") | None, _) => EffectSize::Large,
            (Some(other), _) => bail!("unknown regime {other:?} (expected small or large)"),
        };
        let scenarios = families
            .iter()
            .map(|&o| {
                Ok(CurveScenario {
                    name: o.name().to_string(),
                    specs: outcome_specs(o, &effect, t)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            designs: vec![layout],
            b,
            scenarios,
            custom,
        })
    }

    fn rows(&self) -> Result<(Vec<BiasRow>, Vec<plot::Panel>)> {
        let mut rows = Vec::new();
        let mut panels = Vec::new();
        for layout in &self.designs {
            for &b in &self.b {
                let mut curves = Vec::new();
                for s in &self.scenarios {
                    curves.push((s.name.clone(), EffectCurve::from_specs(layout.periods(), &s.specs)?));
                }
                if let Some(custom) = &self.custom {
                    curves.push(("custom".to_string(), EffectCurve::custom(layout.periods(), custom.clone())?));
                }
                for (name, curve) in curves {
                    let block = bias_rows(layout, b, &name, &curve)?;
                    panels.push(plot::Panel {
                        title: format!("{} {name}, b = {b:.4}", layout.kind()),
                        series: block
                            .iter()
                            .map(|r| plot::Series {
                                label: format!("k = {}", r.intervention),
                                truth: curve.delta(r.intervention).to_vec(),
                                expected: r.expected,
                            })
                            .collect(),
                    });
                    rows.extend(block);
                }
            }
        }
        Ok((rows, panels))
    }
}

fn cmd_bias(ctx: &Ctx, grid: BiasGrid, plot: bool) -> Result<()> {
    let (rows, panels) = if grid.custom.is_none() && !plot {
        (bias_curve_table(&grid.designs, &grid.b, &grid.scenarios)?, Vec::new())
    } else {
        grid.rows()?
    };
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.table_path("bias");
    match ctx.format {
        Format::Csv => write_bias_csv(&rows, BufWriter::new(File::create(&path)?))?,
        Format::Json => write_json(&path, &rows)?,
    }
    write_bias_csv(&rows, io::stdout().lock())?;
    eprintln!("wrote {}", path.display());
    if plot {
        let svg_path = ctx.out.join("bias.svg");
        fs::write(&svg_path, plot::render(&panels))?;
        eprintln!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn cmd_fit(
    ctx: &Ctx,
    dataset: &TrialDataset,
    layout: &DesignLayout,
    model: &str,
    replicates: usize,
    level: f64,
    method: Method,
) -> Result<()> {
    dataset.check_layout(layout)?;
    let models: Vec<ModelKind> = if model.eq_ignore_ascii_case("all") {
        ModelKind::ALL.to_vec()
    } else {
        vec![model.parse()?]
    };
    let table = dataset.cluster_period_means();
    let pool_opts = &ctx.study;
    let mut fits: Vec<FitResult> = Vec::new();
    for m in models {
        let fitter = ModelFitter::new(layout, m, &table.sizes(), method)?;
        let opts = FitOptions {
            method,
            ..FitOptions::default()
        };
        let mut fit = fitter.fit(&table, &opts).with_context(|| format!("fitting model {m}"))?;
        if !fit.converged {
            eprintln!("warning: model {m} did not converge ({:?})", fit.convergence);
        }
        if replicates > 0 {
            let bopts = BootstrapOptions::new(replicates, level, ctx.seed);
            let summary = pool_opts.install(|| bootstrap(dataset, &fitter, &fit, &bopts))??;
            if summary.failure_rate() > 0.01 {
                eprintln!(
                    "warning: {} of {} bootstrap refits failed for model {m}",
                    summary.failures, replicates
                );
            }
            summary.apply(&mut fit);
        }
        fits.push(fit);
    }
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("fit.json");
    if fits.len() == 1 {
        write_json(&path, &fits[0])?;
        println!("{}", serde_json::to_string_pretty(&fits[0])?);
    } else {
        write_json(&path, &fits)?;
        println!("{}", serde_json::to_string_pretty(&fits)?);
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_study(ctx: &Ctx, specs: &[ScenarioSpec]) -> Result<()> {
    fs::create_dir_all(&ctx.out)?;
    let mut rows = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        eprintln!("[{}/{}] {}", i + 1, specs.len(), spec.id);
        let outcome = run_scenario(spec, &ctx.study).with_context(|| format!("scenario {}", spec.id))?;
        rows.extend(outcome.rows);
    }
    let path = ctx.table_path("report");
    match ctx.format {
        Format::Csv => write_report(&rows, BufWriter::new(File::create(&path)?))?,
        Format::Json => write_json(&path, &rows)?,
    }
    write_report(&rows, io::stdout().lock())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_power(ctx: &Ctx, spec: &PowerSpec) -> Result<()> {
    fs::create_dir_all(&ctx.out)?;
    let rows = run_power(spec, &ctx.study)?;
    let path = ctx.table_path("power");
    match ctx.format {
        Format::Csv => write_power(&rows, BufWriter::new(File::create(&path)?))?,
        Format::Json => write_json(&path, &rows)?,
    }
    write_power(&rows, io::stdout().lock())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
