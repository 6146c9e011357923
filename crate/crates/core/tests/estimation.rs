use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use swedge::curves::{CurveSpec, EffectCurve};
use swedge::design::{DesignLayout, LayoutKind, LayoutOptions};
use swedge::estimate::{fit_gls, fit_reml, FitOptions, Method, ModelFitter, ModelKind};
use swedge::simulate::{linear_time_effects, simulate_replicate, CellSizes, SimulationConfig, TrialDataset};
use swedge::VarianceComponents;

fn config(kind: LayoutKind, t: usize, sizes: CellSizes, vc: (f64, f64), seed: u64) -> SimulationConfig {
    let layout = DesignLayout::build(kind, t, 2, LayoutOptions::default()).unwrap();
    SimulationConfig {
        curve: EffectCurve::from_specs(
            t,
            &[CurveSpec::LagHalf { average: 0.3 }, CurveSpec::Linear { lower: 0.1, upper: 0.6 }],
        )
        .unwrap(),
        beta: linear_time_effects(t, 0.1, 0.5),
        vc: VarianceComponents::new(vc.0, vc.1).unwrap(),
        sizes,
        seed,
        layout,
    }
}

/// Individual-level log-likelihood with the full covariance matrix.
fn dense_loglik(data: &TrialDataset, layout: &DesignLayout, model: ModelKind, vc: &VarianceComponents, coef: &[f64]) -> f64 {
    let t = layout.periods();
    let q = t - 1;
    let mut obs = Vec::new();
    for i in 0..data.clusters() {
        for j in 0..t {
            for &y in data.cell_outcomes(i, j) {
                obs.push((i, j, y));
            }
        }
    }
    let mean = |i: usize, j: usize| {
        let mut mu = coef[j];
        for k in 0..layout.interventions() {
            let e = layout.exposure_time(k + 1, i + 1, j + 1);
            if e > 0 {
                mu += match model {
                    ModelKind::B => coef[t + k * q + e - 1],
                    _ => coef[t + k],
                };
            }
        }
        mu
    };
    let n = obs.len();
    let sigma = DMatrix::from_fn(n, n, |a, b| {
        let (ia, ja, _) = obs[a];
        let (ib, jb, _) = obs[b];
        let mut v = if a == b { vc.residual } else { 0.0 };
        if ia == ib {
            v += vc.cluster;
        }
        if model == ModelKind::C {
            for k in 0..layout.interventions() {
                let ea = layout.exposure_time(k + 1, ia + 1, ja + 1);
                let eb = layout.exposure_time(k + 1, ib + 1, jb + 1);
                if ea > 0 && ea == eb {
                    v += vc.random_effects[k];
                }
            }
        }
        v
    });
    let r = DVector::from_iterator(n, obs.iter().map(|&(i, j, y)| y - mean(i, j)));
    let chol = sigma.cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + r.dot(&chol.solve(&r)))
}

#[test]
fn likelihood_decomposition_matches_dense_oracle() {
    let clusters = DesignLayout::build(LayoutKind::Factorial, 4, 2, LayoutOptions::default()).unwrap().clusters();
    let sizes: Vec<Vec<usize>> = (0..clusters).map(|i| (0..4).map(|j| 1 + (i + 2 * j) % 4).collect()).collect();
    let cfg = config(LayoutKind::Factorial, 4, CellSizes::PerCell(sizes), (0.4, 1.3), 5);
    let data = simulate_replicate(&cfg, 0).unwrap();
    assert!(data.len() <= 200);
    let table = data.cluster_period_means();
    for model in ModelKind::ALL {
        let fitter = ModelFitter::new(&cfg.layout, model, &table.sizes(), Method::Ml).unwrap();
        let width = 4 + if model == ModelKind::B { 6 } else { 2 };
        let coef: Vec<f64> = (0..width).map(|c| 0.05 * c as f64 - 0.1).collect();
        let mut vc = VarianceComponents::new(0.3, 0.9).unwrap();
        if model == ModelKind::C {
            vc = vc.with_random_effects(vec![0.2, 0.05]).unwrap();
        }
        let ours = fitter.log_likelihood_at(&table, &vc, &coef).unwrap();
        let dense = dense_loglik(&data, &cfg.layout, model, &vc, &coef);
        assert!((ours - dense).abs() < 1e-8, "model {model}: {ours} vs {dense}");
    }
}

#[test]
fn random_effect_model_nests_constant_model() {
    let cfg = config(LayoutKind::Concurrent, 5, CellSizes::Equal(7), (0.15, 2.85), 9);
    let table = simulate_replicate(&cfg, 3).unwrap().cluster_period_means();
    let a = ModelFitter::new(&cfg.layout, ModelKind::A, &table.sizes(), Method::Reml).unwrap();
    let c = ModelFitter::new(&cfg.layout, ModelKind::C, &table.sizes(), Method::Reml).unwrap();
    for la in [1e-4, 0.05, 0.7] {
        let la_a = a.profiled_log_likelihood(&table, &[la]).unwrap();
        let la_c = c.profiled_log_likelihood(&table, &[la, 0.0, 0.0]).unwrap();
        assert!((la_a - la_c).abs() < 1e-8, "{la_a} vs {la_c}");
    }
}

#[test]
fn frozen_components_reproduce_gls() {
    let cfg = config(LayoutKind::Concurrent, 5, CellSizes::Equal(30), (0.15, 2.85), 1);
    for r in 0..5 {
        let table = simulate_replicate(&cfg, r).unwrap().cluster_period_means();
        for model in [ModelKind::A, ModelKind::B] {
            let gls = fit_gls(&table, &cfg.layout, model, &cfg.vc).unwrap();
            let fitter = ModelFitter::new(&cfg.layout, model, &table.sizes(), Method::Reml).unwrap();
            let frozen = fitter.fit_frozen(&table, &cfg.vc).unwrap();
            for (a, b) in gls.beta.iter().zip(&frozen.beta) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in gls.effects.iter().zip(&frozen.effects) {
                assert!((a.estimate - b.estimate).abs() < 1e-10);
                assert!((a.se - b.se).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn scaling_outcomes_scales_standard_errors() {
    let cfg = config(LayoutKind::Concurrent, 5, CellSizes::Equal(30), (0.15, 2.85), 2);
    let data = simulate_replicate(&cfg, 0).unwrap();
    for model in ModelKind::ALL {
        let one = fit_reml(&data.cluster_period_means(), &cfg.layout, model, &FitOptions::default()).unwrap();
        let two = fit_reml(&data.scaled(2.0).cluster_period_means(), &cfg.layout, model, &FitOptions::default()).unwrap();
        for (a, b) in one.estimands.iter().zip(&two.estimands) {
            assert!((2.0 * a.delta_hat - b.delta_hat).abs() < 1e-5, "{model}");
            assert!((2.0 * a.se - b.se).abs() < 1e-5 * a.se.max(1.0), "{model}: {} {}", a.se, b.se);
        }
    }
}

#[test]
fn reml_fit_is_sensible() {
    let cfg = config(LayoutKind::Concurrent, 5, CellSizes::Equal(30), (0.15, 2.85), 3);
    let table = simulate_replicate(&cfg, 0).unwrap().cluster_period_means();
    let fit = fit_reml(&table, &cfg.layout, ModelKind::B, &FitOptions::default()).unwrap();
    assert!(fit.converged, "{:?}", fit.convergence);
    assert!(fit.vc.residual > 2.0 && fit.vc.residual < 3.7);
    let mean_block: f64 = fit.effects[..4].iter().map(|c| c.estimate).sum::<f64>() / 4.0;
    assert!((fit.estimands[0].delta_hat - mean_block).abs() < 1e-12);
    let json = serde_json::to_value(&fit).unwrap();
    assert!(json.get("estimands").is_some() && json.get("boundary").is_some());
}

#[test]
fn supplementation_rejects_model_b() {
    let layout = DesignLayout::build(LayoutKind::Supplementation, 5, 2, LayoutOptions::default()).unwrap();
    let sizes = vec![vec![5; 5]; layout.clusters()];
    let err = ModelFitter::new(&layout, ModelKind::B, &sizes, Method::Reml).err().unwrap();
    let msg = err.to_string();
    assert!(msg.contains("delta[1,1]") || msg.contains("estimable"), "{msg}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimizer_trace_never_increases(seed in 0u64..1000, n in 2usize..12) {
        let cfg = config(LayoutKind::Concurrent, 4, CellSizes::Equal(n), (0.2, 1.0), seed);
        let table = simulate_replicate(&cfg, 0).unwrap().cluster_period_means();
        let fitter = ModelFitter::new(&cfg.layout, ModelKind::C, &table.sizes(), Method::Reml).unwrap();
        let fit = fitter.fit(&table, &FitOptions::default()).unwrap();
        prop_assert!(fit.loglik.is_finite());
        // The optimum is at least as good as the starting grid.
        let start = fitter.profiled_log_likelihood(&table, &[0.05, 0.02, 0.02]).unwrap();
        prop_assert!(fit.loglik >= start - 1e-9);
    }

    #[test]
    fn covariance_is_symmetric_psd(seed in 0u64..1000) {
        let cfg = config(LayoutKind::Concurrent, 4, CellSizes::Equal(5), (0.2, 1.0), seed);
        let table = simulate_replicate(&cfg, 0).unwrap().cluster_period_means();
        let fit = fit_reml(&table, &cfg.layout, ModelKind::B, &FitOptions::default()).unwrap();
        let n = fit.covariance.len();
        let m = DMatrix::from_fn(n, n, |r, c| fit.covariance[r][c]);
        prop_assert!((&m - m.transpose()).amax() < 1e-12);
        let eig = m.symmetric_eigenvalues();
        prop_assert!(eig.min() > -1e-12);
    }
}
