//! Slow statistical checks: ablation ordering of the adjustment modes,
//! whitening at the true coefficient, and out-of-sample forecast gains.
//! These run the full training loop many times and are paired by seed, so
//! they are deterministic across reruns.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use autocorr::adjust::{
    fit_supervised, joint_train, transformed_inputs, AdjustmentMode, Objective, RhoParam,
    TrainConfig,
};
use autocorr::autodiff::{ParamStore, Tensor};
use autocorr::bench::{run_regression_with_mode, DgpConfig};
use autocorr::models::{ModelGraph, ModelSpec};
use autocorr::series::{split_chronological, SeriesFrame};
use autocorr::stats::{residual_autocorrelation, simulate_ar1};

const ROOT: u64 = 42;

/// Mean test MSE over paired seeds must not get worse as more of the
/// objective is quasi-differenced: none >= min(input, output) >= both.
#[test]
fn ablation_modes_are_ordered() {
    let cfg = DgpConfig::new(100, 3, 0.75, 0.02);
    let seeds = 20u64;
    let mean_mse = |mode: AdjustmentMode| -> f64 {
        let total: f64 = (0..seeds)
            .map(|s| run_regression_with_mode(&cfg, mode, s, ROOT, 16).unwrap().0)
            .sum();
        total / seeds as f64
    };
    let none = mean_mse(AdjustmentMode::None);
    let input = mean_mse(AdjustmentMode::InputOnly);
    let output = mean_mse(AdjustmentMode::OutputOnly);
    let both = mean_mse(AdjustmentMode::Both);
    let partial = input.min(output);
    assert!(
        none >= partial,
        "none {none:.6} < best partial {partial:.6} (input {input:.6}, output {output:.6})"
    );
    assert!(
        partial >= both,
        "best partial {partial:.6} < both {both:.6} (input {input:.6}, output {output:.6})"
    );
}

/// With a linear signal the quasi-difference commutes with the model, so a
/// fit with the coefficient frozen at the true value whitens the test
/// residuals exactly; frozen at zero they keep the noise autocorrelation.
#[test]
fn frozen_true_rho_whitens_residuals() {
    let rho_true = 0.75;
    let beta = [1.0, -0.5, 0.3];
    let make = |seed: u64, t: usize| -> autocorr::adjust::SupervisedData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = beta.len();
        let xs: Vec<f64> = (0..t * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::new(t, k, xs);
        let e = simulate_ar1(rho_true, 0.2, t, &mut rng).unwrap();
        let y: Vec<f64> = (0..t)
            .map(|r| {
                x.row_slice(r).iter().zip(&beta).map(|(v, b)| v * b).sum::<f64>() + e[r]
            })
            .collect();
        let pick = |src: &Tensor, off: usize| {
            let mut d = Vec::new();
            for i in 1..t {
                d.extend_from_slice(src.row_slice(i - off));
            }
            Tensor::new(t - 1, src.cols(), d)
        };
        let yt = Tensor::new(t, 1, y);
        autocorr::adjust::SupervisedData::new(
            pick(&x, 0),
            pick(&x, 1),
            pick(&yt, 0),
            pick(&yt, 1),
        )
        .unwrap()
    };
    let train = make(77, 2000);
    let test = make(78, 10_000);

    let remaining_at = |freeze: f64| -> f64 {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ModelGraph::build(ModelSpec::linear(3, 1), &mut store, &mut rng).unwrap();
        let mode = AdjustmentMode::Both;
        let train_cfg = TrainConfig {
            epochs: 1500,
            early_stop_patience: None,
            batch_size: usize::MAX,
            window: 1,
            lr_model: 0.05,
            lr_rho: 1e-2,
            seed: 5,
            mode,
            rho_dim: Some(1),
            freeze_rho: Some(freeze),
            skip_first_epochs: 0,
        };
        let rho = RhoParam::frozen(vec![freeze]).unwrap();
        fit_supervised(&model, &mut store, &rho, Objective::Joint, &train, &train, &train_cfg)
            .unwrap();
        let tx = transformed_inputs(&test, &[freeze], mode);
        let pred = model.predict(&store, &tx);
        let residuals: Vec<f64> = (0..test.len())
            .map(|r| {
                let forecast = pred.get(r, 0) + freeze * test.y_prev.get(r, 0);
                test.y.get(r, 0) - forecast
            })
            .collect();
        residual_autocorrelation(&residuals).unwrap()
    };

    let whitened = remaining_at(rho_true);
    let unadjusted = remaining_at(0.0);
    // 10_000 test points: the whitened autocorrelation should sit near the
    // sampling noise floor while the unadjusted one stays near rho.
    assert!(whitened.abs() < 0.05, "whitened remaining {whitened:.4}");
    assert!(unadjusted > 0.5, "unadjusted remaining {unadjusted:.4}");
    assert!(whitened.abs() < unadjusted.abs() / 5.0);
}

/// Strongly autocorrelated noise on a smooth signal: the jointly learned
/// adjustment beats the unadjusted forecaster on mean test RRMSE over
/// paired seeds.
#[test]
fn joint_adjustment_improves_forecasts() {
    let make_frame = |seed: u64| -> SeriesFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 320;
        let n = 2;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for c in 0..n {
            let e = simulate_ar1(0.8, 0.3, t, &mut rng).unwrap();
            let phase: f64 = rng.random_range(0.0..6.28);
            cols.push(
                (0..t)
                    .map(|i| (0.05 * i as f64 + phase).sin() * (1.0 + 0.2 * c as f64) + e[i])
                    .collect(),
            );
        }
        let mut data = Vec::with_capacity(t * n);
        for r in 0..t {
            for col in &cols {
                data.push(col[r]);
            }
        }
        SeriesFrame::from_values(Tensor::new(t, n, data)).unwrap()
    };

    let base_cfg = |seed: u64, mode: AdjustmentMode| TrainConfig {
        epochs: 120,
        early_stop_patience: Some(40),
        batch_size: 32,
        window: 6,
        lr_model: 5e-3,
        lr_rho: 1e-2,
        seed,
        mode,
        rho_dim: None,
        freeze_rho: None,
        skip_first_epochs: 0,
    };

    let spec = ModelSpec::window_forecaster(6, 2, 8);
    let mut wo_sum = 0.0;
    let mut w_sum = 0.0;
    let mut rho_hats = Vec::new();
    for seed in 0..5u64 {
        let frame = make_frame(1000 + seed);
        let (tr, va, te) = split_chronological(&frame, &Default::default()).unwrap();
        let wo = joint_train(&tr, &va, &te, &spec, &base_cfg(seed, AdjustmentMode::None)).unwrap();
        let w = joint_train(&tr, &va, &te, &spec, &base_cfg(seed, AdjustmentMode::Both)).unwrap();
        wo_sum += wo.test_rrmse;
        w_sum += w.test_rrmse;
        rho_hats.push(w.rho[0]);
    }
    assert!(
        w_sum < wo_sum,
        "adjusted mean rrmse {:.4} not below unadjusted {:.4}",
        w_sum / 5.0,
        wo_sum / 5.0
    );
    // the learned coefficient should move decisively toward the noise sign
    assert!(
        rho_hats.iter().all(|r| *r > 0.1),
        "learned coefficients {rho_hats:?}"
    );
}
