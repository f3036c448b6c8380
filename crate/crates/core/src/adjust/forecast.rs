//! One-step-ahead forecasting pipeline: windowing + normalization glue
//! around the training engine, forecast recovery to original units, and
//! residual diagnostics on the test split.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjust::trainer::{
    evaluate_loss, fit_supervised, mpw_fit, transformed_inputs, Objective, SupervisedData,
    MPW_OUTER_TOL,
};
use crate::adjust::{
    auto_rho_len, recover_forecast, AdjustmentMode, RhoParam, TrainConfig,
};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, ModelGraph, ModelKind, ModelSpec};
use crate::seeds;
use crate::series::{make_windows, Normalizer, Preceding, SeriesFrame, WindowSpec};
use crate::stats::{residual_autocorrelation, rrmse};

pub const FIT_REPORT_VERSION: u32 = 1;

/// Everything a fit leaves behind, JSON-serializable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub format_version: u32,
    /// `wo`, `w`, `mpw`, or `grid`.
    pub method: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub model_spec: ModelSpec,
    pub checkpoint: Checkpoint,
    /// Learned (or frozen) coefficient values.
    pub rho: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_curve: Vec<f64>,
    pub valid_curve: Vec<f64>,
    /// Lag-1 autocorrelation of original-unit test residuals, per series.
    pub remaining_autocorrelation: Vec<f64>,
    pub remaining_autocorrelation_mean: f64,
    /// RRMSE of recovered forecasts in original units.
    pub test_rrmse: f64,
    /// RRMSE on the transformed (quasi-differenced, normalized) scale.
    pub test_rrmse_transformed: f64,
    pub wall_clock_secs: f64,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the wall-clock field zeroed, for determinism checks.
    pub fn to_json_stable(&self) -> String {
        let mut copy = self.clone();
        copy.wall_clock_secs = 0.0;
        copy.to_json().expect("report serializes")
    }

    /// Two-column plot-ready CSV for one loss curve.
    pub fn curve_csv(curve: &[f64]) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, v) in curve.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Windowed, normalized splits plus the bookkeeping needed to score
/// forecasts in original units.
struct Prepared {
    normalizer: Normalizer,
    raw: SeriesFrame,
    train: SupervisedData,
    valid: SupervisedData,
    test: SupervisedData,
    valid_targets: Vec<usize>,
    test_targets: Vec<usize>,
    n_series: usize,
}

fn window_data(
    windows: &[(usize, Tensor, Vec<f64>, Vec<f64>, Vec<f64>)],
    w: usize,
    n: usize,
) -> Result<SupervisedData> {
    let s = windows.len();
    let mut x = Vec::with_capacity(s * w * n);
    let mut xp = Vec::with_capacity(s * w * n);
    let mut y = Vec::with_capacity(s * n);
    let mut yp = Vec::with_capacity(s * n);
    for (_, hist, oldest, target, prev) in windows {
        x.extend_from_slice(hist.data());
        xp.extend_from_slice(&hist.data()[n..]);
        xp.extend_from_slice(oldest);
        y.extend_from_slice(target);
        yp.extend_from_slice(prev);
    }
    SupervisedData::new(
        Tensor::new(s, w * n, x),
        Tensor::new(s, w * n, xp),
        Tensor::new(s, n, y),
        Tensor::new(s, n, yp),
    )
}

/// Normalizes on training statistics, windows the concatenated splits so
/// validation and test histories can reach back across boundaries, and
/// mean-fills the single missing oldest lag of the earliest window.
fn prepare(
    train: &SeriesFrame,
    valid: &SeriesFrame,
    test: &SeriesFrame,
    window: usize,
) -> Result<Prepared> {
    let raw = SeriesFrame::concat(&[train, valid, test])?;
    let n = raw.n_series();
    let normalizer = Normalizer::fit(train);
    let normed = normalizer.apply(&raw);
    let norm_train = normalizer.apply(train);
    let mut mean = vec![0.0; n];
    for r in 0..norm_train.len() {
        for (m, v) in mean.iter_mut().zip(norm_train.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= norm_train.len() as f64);

    let b1 = train.len();
    let b2 = b1 + valid.len();
    if b1 <= window {
        return Err(Error::FrameTooShort {
            len: b1,
            window,
        });
    }
    let windows = make_windows(&normed, &WindowSpec { window })?;
    let mut groups: [Vec<(usize, Tensor, Vec<f64>, Vec<f64>, Vec<f64>)>; 3] =
        [Vec::new(), Vec::new(), Vec::new()];
    for win in windows {
        let t = win.target_index;
        let hist = Tensor::new(window, n, win.history.clone());
        let oldest = match &win.preceding {
            Preceding::Value(v) => v.clone(),
            Preceding::MeanFill => mean.clone(),
        };
        let prev = hist.row_slice(0).to_vec();
        let entry = (t, hist, oldest, win.target, prev);
        if t < b1 {
            groups[0].push(entry);
        } else if t < b2 {
            groups[1].push(entry);
        } else {
            groups[2].push(entry);
        }
    }
    if groups[1].is_empty() || groups[2].is_empty() {
        return Err(Error::InvalidSplit(
            "validation or test split produced no windows".into(),
        ));
    }
    let valid_targets = groups[1].iter().map(|e| e.0).collect();
    let test_targets = groups[2].iter().map(|e| e.0).collect();
    Ok(Prepared {
        normalizer,
        raw,
        train: window_data(&groups[0], window, n)?,
        valid: window_data(&groups[1], window, n)?,
        test: window_data(&groups[2], window, n)?,
        valid_targets,
        test_targets,
        n_series: n,
    })
}

fn check_spec(spec: &ModelSpec, window: usize, n: usize) -> Result<()> {
    spec.validate()?;
    if spec.kind == ModelKind::MlpRegressor {
        return Err(Error::InvalidSpec(
            "forecasting expects a linear or window_forecaster model".into(),
        ));
    }
    if spec.input_dim != window * n || spec.output_dim != n {
        return Err(Error::InvalidSpec(format!(
            "model dims {}x{} do not match window {window} x {n} series",
            spec.input_dim, spec.output_dim
        )));
    }
    Ok(())
}

enum PredictionRule {
    /// Single model on quasi-differenced input; recover by adding back
    /// `rho (.) X_{t-1}` when the output side was transformed.
    Joint(AdjustmentMode),
    /// `f(x) - rho (.) f(x_prev)` on the transformed scale.
    TwoModel,
}

struct SplitMetrics {
    rrmse_original: f64,
    rrmse_transformed: f64,
    remaining: Vec<f64>,
    remaining_mean: f64,
}

fn score_split(
    model: &ModelGraph,
    store: &ParamStore,
    rho: &[f64],
    rule: &PredictionRule,
    data: &SupervisedData,
    targets: &[usize],
    raw: &SeriesFrame,
    normalizer: &Normalizer,
) -> Result<SplitMetrics> {
    let n = data.output_dim();
    let s = data.len();
    let (pred_transformed, recovered_norm) = match rule {
        PredictionRule::Joint(mode) => {
            let tx = transformed_inputs(data, rho, *mode);
            let pred = model.predict(store, &tx);
            let mut rec = Vec::with_capacity(s * n);
            for r in 0..s {
                if mode.transforms_output() {
                    rec.extend(recover_forecast(
                        pred.row_slice(r),
                        data.y_prev.row_slice(r),
                        rho,
                    ));
                } else {
                    rec.extend_from_slice(pred.row_slice(r));
                }
            }
            (pred, Tensor::new(s, n, rec))
        }
        PredictionRule::TwoModel => {
            let pred_now = model.predict(store, &data.x);
            let zero = rho.iter().all(|v| *v == 0.0);
            let pred_lag = if zero {
                None
            } else {
                Some(model.predict(store, &data.x_prev))
            };
            let mut trans = Vec::with_capacity(s * n);
            let mut rec = Vec::with_capacity(s * n);
            for r in 0..s {
                for c in 0..n {
                    let rc = if rho.len() == 1 { rho[0] } else { rho[c] };
                    let p = pred_now.get(r, c)
                        - pred_lag.as_ref().map_or(0.0, |pl| rc * pl.get(r, c));
                    trans.push(p);
                    rec.push(p + rc * data.y_prev.get(r, c));
                }
            }
            (Tensor::new(s, n, trans), Tensor::new(s, n, rec))
        }
    };

    // transformed-scale targets and score
    let mut ty = Vec::with_capacity(s * n);
    for r in 0..s {
        for c in 0..n {
            let rc = if rho.len() == 1 { rho[0] } else { rho[c] };
            ty.push(data.y.get(r, c) - rc * data.y_prev.get(r, c));
        }
    }
    let target_transformed = Tensor::new(s, n, ty);
    let rrmse_transformed = rrmse(&target_transformed, &pred_transformed)?;

    // original-unit score and residual diagnostics
    let mut actual = Vec::with_capacity(s * n);
    let mut forecast = Vec::with_capacity(s * n);
    for (r, &t) in targets.iter().enumerate() {
        actual.extend_from_slice(raw.row(t));
        forecast.extend(normalizer.invert_row(recovered_norm.row_slice(r)));
    }
    let actual = Tensor::new(s, n, actual);
    let forecast = Tensor::new(s, n, forecast);
    let rrmse_original = rrmse(&actual, &forecast)?;
    let mut remaining = Vec::with_capacity(n);
    for c in 0..n {
        let e: Vec<f64> = (0..s).map(|r| actual.get(r, c) - forecast.get(r, c)).collect();
        remaining.push(residual_autocorrelation(&e)?);
    }
    let remaining_mean = remaining.iter().sum::<f64>() / n as f64;
    Ok(SplitMetrics {
        rrmse_original,
        rrmse_transformed,
        remaining,
        remaining_mean,
    })
}

fn resolve_rho(store: &mut ParamStore, cfg: &TrainConfig, n: usize) -> Result<RhoParam> {
    let len = cfg.rho_dim.unwrap_or_else(|| auto_rho_len(n));
    if cfg.mode == AdjustmentMode::None {
        return RhoParam::frozen(vec![0.0; len]);
    }
    match cfg.freeze_rho {
        Some(v) => RhoParam::frozen(vec![v; len]),
        None => RhoParam::trainable(store, len),
    }
}

fn build_report(
    method: &str,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    model: &ModelGraph,
    store: &ParamStore,
    rho: Vec<f64>,
    best_epoch: usize,
    epochs_run: usize,
    train_curve: Vec<f64>,
    valid_curve: Vec<f64>,
    metrics: SplitMetrics,
    started: Instant,
) -> FitReport {
    FitReport {
        format_version: FIT_REPORT_VERSION,
        method: method.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        model_spec: spec.clone(),
        checkpoint: Checkpoint::capture(model, store, cfg.seed),
        rho,
        best_epoch,
        epochs_run,
        train_curve,
        valid_curve,
        remaining_autocorrelation: metrics.remaining,
        remaining_autocorrelation_mean: metrics.remaining_mean,
        test_rrmse: metrics.rrmse_original,
        test_rrmse_transformed: metrics.rrmse_transformed,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

/// Fits the model with the coefficient learned jointly (or frozen per the
/// config) and scores recovered forecasts on the test split.
pub fn joint_train(
    train: &SeriesFrame,
    valid: &SeriesFrame,
    test: &SeriesFrame,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    let started = Instant::now();
    cfg.validate()?;
    check_spec(spec, cfg.window, train.n_series())?;
    let prep = prepare(train, valid, test, cfg.window)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[cfg.seed, 10]));
    let model = ModelGraph::build(spec.clone(), &mut store, &mut rng)?;
    let rho = resolve_rho(&mut store, cfg, prep.n_series)?;
    let out = fit_supervised(
        &model,
        &mut store,
        &rho,
        Objective::Joint,
        &prep.train,
        &prep.valid,
        cfg,
    )?;
    let metrics = score_split(
        &model,
        &store,
        &out.rho,
        &PredictionRule::Joint(cfg.mode),
        &prep.test,
        &prep.test_targets,
        &prep.raw,
        &prep.normalizer,
    )?;
    let method = if cfg.mode == AdjustmentMode::None {
        "wo"
    } else {
        "w"
    };
    Ok(build_report(
        method,
        cfg,
        spec,
        &model,
        &store,
        out.rho,
        out.best_epoch,
        out.epochs_run,
        out.train_curve,
        out.valid_curve,
        metrics,
        started,
    ))
}

/// The alternating baseline on the same pipeline.
pub fn naive_mpw_train(
    train: &SeriesFrame,
    valid: &SeriesFrame,
    test: &SeriesFrame,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    max_outer_iters: usize,
) -> Result<FitReport> {
    let started = Instant::now();
    cfg.validate()?;
    check_spec(spec, cfg.window, train.n_series())?;
    let prep = prepare(train, valid, test, cfg.window)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[cfg.seed, 10]));
    let model = ModelGraph::build(spec.clone(), &mut store, &mut rng)?;
    let len = cfg.rho_dim.unwrap_or_else(|| auto_rho_len(prep.n_series));
    let out = mpw_fit(
        &model,
        &mut store,
        &prep.train,
        &prep.valid,
        cfg,
        len,
        max_outer_iters,
        MPW_OUTER_TOL,
    )?;
    let metrics = score_split(
        &model,
        &store,
        &out.rho,
        &PredictionRule::TwoModel,
        &prep.test,
        &prep.test_targets,
        &prep.raw,
        &prep.normalizer,
    )?;
    Ok(build_report(
        "mpw",
        cfg,
        spec,
        &model,
        &store,
        out.rho,
        out.last.best_epoch,
        out.last.epochs_run,
        out.last.train_curve,
        out.last.valid_curve,
        metrics,
        started,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_rho: f64,
    /// (coefficient, validation RRMSE in original units), in grid order.
    pub table: Vec<(f64, f64)>,
}

/// Trains once per grid value with the coefficient frozen (shared across
/// series) and ranks grid points by validation RRMSE of recovered
/// forecasts. The same seed is reused for every grid point so scores are
/// comparable and order-independent.
pub fn grid_search_rho(
    train: &SeriesFrame,
    valid: &SeriesFrame,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    grid: &[f64],
) -> Result<GridSearchResult> {
    cfg.validate()?;
    check_spec(spec, cfg.window, train.n_series())?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    for &g in grid {
        if !(-1.0..=1.0).contains(&g) {
            return Err(Error::RhoOutOfRange(g));
        }
    }
    // the valid split doubles as the scoring split; windows for it still
    // reach back into train history
    let prep = prepare_two(train, valid, cfg.window)?;
    let mut table = Vec::with_capacity(grid.len());
    for &g in grid {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[cfg.seed, 10]));
        let model = ModelGraph::build(spec.clone(), &mut store, &mut rng)?;
        let rho = RhoParam::frozen(vec![g])?;
        let mut run_cfg = cfg.clone();
        run_cfg.freeze_rho = Some(g);
        fit_supervised(
            &model,
            &mut store,
            &rho,
            Objective::Joint,
            &prep.train,
            &prep.valid,
            &run_cfg,
        )?;
        let metrics = score_split(
            &model,
            &store,
            &[g],
            &PredictionRule::Joint(run_cfg.mode),
            &prep.valid,
            &prep.valid_targets,
            &prep.raw,
            &prep.normalizer,
        )?;
        table.push((g, metrics.rrmse_original));
    }
    let best_rho = table
        .iter()
        .fold((f64::NAN, f64::INFINITY), |acc, &(g, v)| {
            if v < acc.1 {
                (g, v)
            } else {
                acc
            }
        })
        .0;
    Ok(GridSearchResult { best_rho, table })
}

/// Two-split variant of [`prepare`]; the valid split fills both the
/// early-stopping and scoring roles.
fn prepare_two(train: &SeriesFrame, valid: &SeriesFrame, window: usize) -> Result<Prepared> {
    // reuse prepare by splitting valid in half is wasteful; instead
    // concatenate and mark everything past the boundary as valid
    let raw = SeriesFrame::concat(&[train, valid])?;
    let n = raw.n_series();
    let normalizer = Normalizer::fit(train);
    let normed = normalizer.apply(&raw);
    let norm_train = normalizer.apply(train);
    let mut mean = vec![0.0; n];
    for r in 0..norm_train.len() {
        for (m, v) in mean.iter_mut().zip(norm_train.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= norm_train.len() as f64);
    let b1 = train.len();
    if b1 <= window {
        return Err(Error::FrameTooShort { len: b1, window });
    }
    let windows = make_windows(&normed, &WindowSpec { window })?;
    let mut train_group = Vec::new();
    let mut valid_group = Vec::new();
    for win in windows {
        let t = win.target_index;
        let hist = Tensor::new(window, n, win.history.clone());
        let oldest = match &win.preceding {
            Preceding::Value(v) => v.clone(),
            Preceding::MeanFill => mean.clone(),
        };
        let prev = hist.row_slice(0).to_vec();
        let entry = (t, hist, oldest, win.target, prev);
        if t < b1 {
            train_group.push(entry);
        } else {
            valid_group.push(entry);
        }
    }
    if valid_group.is_empty() {
        return Err(Error::InvalidSplit("validation split produced no windows".into()));
    }
    let valid_targets: Vec<usize> = valid_group.iter().map(|e| e.0).collect();
    let valid_data = window_data(&valid_group, window, n)?;
    Ok(Prepared {
        normalizer,
        raw,
        train: window_data(&train_group, window, n)?,
        valid: valid_data.clone(),
        test: valid_data,
        valid_targets: valid_targets.clone(),
        test_targets: valid_targets,
        n_series: n,
    })
}

/// Validation loss of an already-fitted model under a frozen coefficient;
/// exposed for diagnostics and tests.
pub fn frozen_valid_loss(
    model: &ModelGraph,
    store: &ParamStore,
    rho_value: f64,
    mode: AdjustmentMode,
    data: &SupervisedData,
) -> f64 {
    let rho = RhoParam::Frozen(vec![rho_value]);
    evaluate_loss(model, store, &rho, mode, Objective::Joint, data)
}
