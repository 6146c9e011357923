use std::fs;

use swedge::estimate::{FitOptions, Method, ModelFitter};
use swedge::simulate::simulate_replicate;
use swedge::study::{
    aggregate, preset, read_replicates, replicate_file, run_scenario, scenarios_from_json, EffectSize, OutcomeModel,
    Preset, PresetSettings, ReplicateRecord, ScenarioSpec, StudyOptions,
};
use swedge::{LayoutKind, ModelKind};
use tempfile::TempDir;

fn spec(id: &str, replicates: usize) -> ScenarioSpec {
    let text = format!(
        r#"{{"id": "{id}", "design": "concurrent", "T": 5, "n": 30, "outcome": "B2",
            "effect": {{"regime": "small"}}, "replicates": {replicates}, "bootstrap": 20, "seed": 42}}"#
    );
    scenarios_from_json(&text).unwrap().remove(0)
}

fn serial() -> StudyOptions {
    StudyOptions {
        workers: Some(1),
        out_dir: None,
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let s = spec("workers", 6);
    let one = run_scenario(&s, &serial()).unwrap();
    let two = run_scenario(
        &s,
        &StudyOptions {
            workers: Some(2),
            out_dir: None,
        },
    )
    .unwrap();
    assert_eq!(one.records, two.records);
    assert_eq!(one.records.len(), 6 * 3 * 2);
    assert!(one.records.iter().all(|r| !r.failed));
    for (a, b) in one.rows.iter().zip(&two.rows) {
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
        assert_eq!(a.coverage_pct.to_bits(), b.coverage_pct.to_bits());
    }
}

#[test]
fn resume_extends_and_repairs_replicate_files() {
    let dir = TempDir::new().unwrap();
    let opts = StudyOptions {
        workers: Some(1),
        out_dir: Some(dir.path().to_path_buf()),
    };
    let fresh = run_scenario(&spec("resume", 5), &serial()).unwrap();

    run_scenario(&spec("resume", 3), &opts).unwrap();
    let path = replicate_file(dir.path(), "resume");
    assert_eq!(read_replicates(fs::File::open(&path).unwrap()).unwrap().len(), 3 * 6);

    let resumed = run_scenario(&spec("resume", 5), &opts).unwrap();
    assert_eq!(resumed.records, fresh.records);
    assert_eq!(resumed.rows, fresh.rows);

    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(1 + 4 * 6 + 2).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let repaired = run_scenario(&spec("resume", 5), &opts).unwrap();
    assert_eq!(repaired.records, fresh.records);
}

#[test]
fn stale_truth_is_recomputed() {
    let dir = TempDir::new().unwrap();
    let opts = StudyOptions {
        workers: Some(1),
        out_dir: Some(dir.path().to_path_buf()),
    };
    let mut s = spec("stale", 2);
    run_scenario(&s, &opts).unwrap();
    s.effect = EffectSize::Large;
    let rerun = run_scenario(&s, &opts).unwrap();
    let fresh = run_scenario(&s, &serial()).unwrap();
    assert_eq!(rerun.records, fresh.records);
}

#[test]
fn aggregation_by_hand() {
    let s = spec("hand", 3);
    let rec = |r: u64, est: f64, lo: f64, hi: f64| ReplicateRecord {
        scenario_id: "hand".into(),
        replicate: r,
        fit_model: ModelKind::A,
        intervention: 1,
        truth: 0.5,
        estimate: Some(est),
        se: Some(0.1),
        ci_low: Some(lo),
        ci_high: Some(hi),
        boot_sd: Some(0.1),
        boot_failures: 0,
        failed: false,
    };
    let mut failed = rec(2, 0.0, 0.0, 0.0);
    failed.failed = true;
    failed.estimate = None;
    let records = vec![rec(0, 0.4, 0.3, 0.6), rec(1, 0.8, 0.6, 1.0), failed];
    let mut s = s;
    s.models = vec![ModelKind::A];
    let rows = aggregate(&s, &records, &[0.5]);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert!((row.bias - 0.1).abs() < 1e-12);
    assert!((row.sd - 0.08f64.sqrt()).abs() < 1e-12);
    assert!((row.coverage_pct - 50.0).abs() < 1e-12);
    assert!((row.ci_length - 0.35).abs() < 1e-12);
    assert_eq!(row.n_fail, 1);
    assert!((row.mc_se_bias - 0.08f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
    assert!((row.mc_se_coverage - 100.0 * (0.25f64 / 2.0).sqrt()).abs() < 1e-12);

    let single = aggregate(&s, &records[..1], &[0.5]);
    assert!(single[0].sd.is_nan());
}

#[test]
fn presets_cover_the_designed_grids() {
    let settings = PresetSettings::default();
    for name in ["table1", "table2", "table3", "table4"] {
        let Preset::Study(specs) = preset(name, settings).unwrap() else { panic!("{name}") };
        assert_eq!(specs.len(), 10);
        for s in &specs {
            s.validate().unwrap();
            assert_eq!(s.models, ModelKind::ALL.to_vec());
            let layout = s.layout().unwrap();
            match (s.design, s.periods) {
                (LayoutKind::Concurrent, t) => assert_eq!(layout.clusters(), 2 * (t - 1)),
                (LayoutKind::FactorialAugmented, 5) => assert_eq!(layout.clusters(), 8),
                (LayoutKind::FactorialAugmented, 11) => assert_eq!(layout.clusters(), 20),
                other => panic!("{other:?}"),
            }
        }
        let ids: std::collections::BTreeSet<_> = specs.iter().map(|s| s.id.clone()).collect();
        assert_eq!(ids.len(), specs.len());
    }
    let Preset::Power(p) = preset("sim2", settings).unwrap() else { panic!() };
    let scenarios = p.scenarios();
    assert_eq!(scenarios.len(), 2 * 3 * 7);
    for s in &scenarios {
        s.validate().unwrap();
        assert_eq!(s.layout().unwrap().clusters(), 8);
        let truth = s.curve().unwrap().realized_estimand().averages;
        let EffectSize::Explicit { delta1, delta2 } = s.effect else { panic!() };
        assert!((truth[0] - delta1).abs() < 1e-12 && (truth[1] - delta2).abs() < 1e-12);
    }
    assert!(matches!(preset("fig5", settings).unwrap(), Preset::Bias(_)));
    assert!(preset("table9", settings).is_err());
}

#[test]
fn regime_targets_are_realized() {
    for (effect, t, want) in [
        (EffectSize::Small, 5, (0.10, 0.14)),
        (EffectSize::Small, 11, (0.10, 0.13)),
        (EffectSize::Large, 5, (0.28, 0.40)),
        (EffectSize::Large, 11, (0.29, 0.40)),
    ] {
        for outcome in OutcomeModel::ALL {
            let mut s = spec("targets", 1);
            s.periods = t;
            s.effect = effect;
            s.outcome = outcome;
            let got = s.curve().unwrap().realized_estimand().averages;
            assert!((got[0] - want.0).abs() < 0.011, "{outcome} T={t}: {got:?}");
            assert!((got[1] - want.1).abs() < 0.011, "{outcome} T={t}: {got:?}");
        }
    }
}

#[test]
fn bad_configs_are_rejected() {
    assert!(scenarios_from_json(r#"{"id": "x"}"#).is_err());
    let mut s = spec("ok", 1);
    s.bootstrap = 1;
    assert!(s.validate().is_err());
    let mut s = spec("a/b", 1);
    assert!(s.validate().is_err());
    s.id = "fine".into();
    s.periods = 7;
    assert!(s.validate().is_err(), "regimes are tabulated only at T = 5 and 11");
}

/// Model-based standard errors track the spread of the estimates when the
/// fitted model is correct.
#[test]
fn model_standard_errors_match_empirical_spread() {
    let mut s = spec("covariance", 1);
    s.periods = 11;
    s.outcome = OutcomeModel::A;
    s.effect = EffectSize::Large;
    let config = s.simulation_config().unwrap();
    let sizes = vec![vec![s.n; 11]; config.layout.clusters()];
    let replicates = 300;
    for model in [ModelKind::A, ModelKind::B] {
        let fitter = ModelFitter::new(&config.layout, model, &sizes, Method::Reml).unwrap();
        let mut est = vec![Vec::new(); 2];
        let mut se = vec![Vec::new(); 2];
        for r in 0..replicates {
            let data = simulate_replicate(&config, r).unwrap();
            let fit = fitter.fit(&data.cluster_period_means(), &FitOptions::default()).unwrap();
            for k in 0..2 {
                est[k].push(fit.estimands[k].delta_hat);
                se[k].push(fit.estimands[k].se);
            }
        }
        for k in 0..2 {
            let n = est[k].len() as f64;
            let mean = est[k].iter().sum::<f64>() / n;
            let sd = (est[k].iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let mean_se = se[k].iter().sum::<f64>() / n;
            let ratio = mean_se / sd;
            assert!((ratio - 1.0).abs() < 0.15, "model {model} k={}: se {mean_se} sd {sd}", k + 1);
        }
    }
}
