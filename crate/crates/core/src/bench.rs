//! Synthetic regression benchmark with known ground-truth autocorrelation,
//! forecasting experiment runner, JSON-lines run records, and aggregation.

use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjust::trainer::{
    fit_supervised, mpw_fit, transformed_inputs, Objective, SupervisedData, MPW_MAX_OUTER,
    MPW_OUTER_TOL,
};
use crate::adjust::{
    joint_train, naive_mpw_train, AdjustmentMode, FitReport, RhoParam, TrainConfig,
};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::{ModelGraph, ModelSpec};
use crate::seeds;
use crate::series::{split_chronological, SeriesFrame, SplitSpec};
use crate::stats::{
    avg_relative_improvement, empirical_critical_values, paired_t_test, residual_autocorrelation,
    simulate_ar1, CriticalValueTable, PairedTTest,
};

/// Synthetic regression data-generating process:
/// `y_t = tanh((X_t . theta + 1) / sqrt(N)) + e_t` with all-ones theta,
/// Gaussian inputs, and an AR(1) error chain with a stationary start.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DgpConfig {
    pub t: usize,
    pub n: usize,
    pub rho: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    pub test_multiplier: usize,
    pub valid_frac: f64,
}

impl DgpConfig {
    pub fn new(t: usize, n: usize, rho: f64, sigma: f64) -> Self {
        DgpConfig {
            t,
            n,
            rho,
            sigma,
            sigma_x: 0.2,
            test_multiplier: 100,
            valid_frac: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.abs() >= 1.0 {
            return Err(Error::RhoOutOfRange(self.rho));
        }
        if self.sigma < 0.0 || self.sigma_x <= 0.0 {
            return Err(Error::InvalidConfig("sigmas must be non-negative".into()));
        }
        if self.t < 5 || self.n == 0 || self.test_multiplier == 0 {
            return Err(Error::InvalidConfig("T >= 5 and N >= 1 required".into()));
        }
        if !(self.valid_frac > 0.0 && self.valid_frac < 1.0) {
            return Err(Error::InvalidConfig("valid_frac must be in (0,1)".into()));
        }
        Ok(())
    }

    /// Stable identifier for grouping runs of one cell.
    pub fn hash_string(&self, hidden: usize) -> String {
        format!(
            "T{}_N{}_rho{}_sigma{}_sx{}_h{hidden}",
            self.t, self.n, self.rho, self.sigma, self.sigma_x
        )
    }
}

/// The published experiment grid; 30 replicates per cell by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub t_set: Vec<usize>,
    pub n_set: Vec<usize>,
    pub rho_set: Vec<f64>,
    pub sigma_set: Vec<f64>,
    pub seeds_per_cell: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        let rho_set = (0..13).map(|i| -0.9 + 0.15 * i as f64).collect::<Vec<_>>();
        // endpoints are exactly +-0.9, interior steps of 0.15
        ExperimentGrid {
            t_set: vec![25, 50, 100, 200, 400],
            n_set: vec![2, 3, 6, 12, 24],
            rho_set,
            sigma_set: vec![0.0025, 0.005, 0.01, 0.02, 0.04],
            seeds_per_cell: 30,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.t_set.is_empty()
            || self.n_set.is_empty()
            || self.rho_set.is_empty()
            || self.sigma_set.is_empty()
            || self.seeds_per_cell == 0
        {
            return Err(Error::InvalidConfig("empty experiment grid axis".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<DgpConfig> {
        let mut out = Vec::new();
        for &t in &self.t_set {
            for &n in &self.n_set {
                for &rho in &self.rho_set {
                    for &sigma in &self.sigma_set {
                        out.push(DgpConfig::new(t, n, rho, sigma));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wo,
    Mpw,
    W,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wo => "wo",
            Method::Mpw => "mpw",
            Method::W => "w",
        }
    }

    pub fn all() -> [Method; 3] {
        [Method::Wo, Method::Mpw, Method::W]
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "wo" => Ok(Method::Wo),
            "mpw" => Ok(Method::Mpw),
            "w" => Ok(Method::W),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

pub const RUN_RECORD_VERSION: u32 = 1;

/// One training run's results. Metric fields are `None` when the run
/// diverged (the run stays in the file, flagged).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub config_hash: String,
    pub method: Method,
    /// Replicate index within the cell (not the derived RNG seed).
    pub seed: u64,
    pub test_mse: Option<f64>,
    pub test_rrmse: Option<f64>,
    pub rho_hat: Vec<f64>,
    pub abs_rho_err: Option<f64>,
    pub remaining_autocorrelation: Option<f64>,
    pub wall_clock_secs: f64,
    pub diverged: bool,
}

/// Appends records to a JSON-lines file, one record per line.
pub fn append_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

/// Draws one supervised regression dataset triple. The same `rng` drives
/// inputs, errors, and the independent test chain, so one seed fixes the
/// whole dataset. Lags at the chain starts are filled with the training
/// input mean (targets with the training target mean).
pub fn generate_regression_dataset<R: Rng>(
    cfg: &DgpConfig,
    rng: &mut R,
) -> Result<(SupervisedData, SupervisedData, SupervisedData)> {
    cfg.validate()?;
    let input_dist = Normal::new(0.0, cfg.sigma_x).expect("positive sigma_x");
    let draw_chain = |len: usize, rng: &mut R| -> Result<(Tensor, Vec<f64>)> {
        let xs: Vec<f64> = (0..len * cfg.n).map(|_| input_dist.sample(rng)).collect();
        let x = Tensor::new(len, cfg.n, xs);
        let e = simulate_ar1(cfg.rho, cfg.sigma, len, rng)?;
        let y: Vec<f64> = (0..len)
            .map(|r| {
                let dot: f64 = x.row_slice(r).iter().sum(); // theta = all ones
                ((dot + 1.0) / (cfg.n as f64).sqrt()).tanh() + e[r]
            })
            .collect();
        Ok((x, y))
    };
    let (x, y) = draw_chain(cfg.t, rng)?;
    let (x_test, y_test) = draw_chain(cfg.t * cfg.test_multiplier, rng)?;

    let n_train = cfg.t - (cfg.t as f64 * cfg.valid_frac).floor() as usize;
    if n_train < 2 || n_train >= cfg.t {
        return Err(Error::InvalidSplit(format!(
            "T={} with valid_frac={} leaves a degenerate split",
            cfg.t, cfg.valid_frac
        )));
    }
    let mut x_mean = vec![0.0; cfg.n];
    for r in 0..n_train {
        for (m, v) in x_mean.iter_mut().zip(x.row_slice(r)) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n_train as f64);
    let y_mean = y[..n_train].iter().sum::<f64>() / n_train as f64;

    let build = |x: &Tensor, y: &[f64], lo: usize, hi: usize| -> Result<SupervisedData> {
        let s = hi - lo;
        let n = cfg.n;
        let mut xs = Vec::with_capacity(s * n);
        let mut xp = Vec::with_capacity(s * n);
        let mut ys = Vec::with_capacity(s);
        let mut yp = Vec::with_capacity(s);
        for t in lo..hi {
            xs.extend_from_slice(x.row_slice(t));
            if t == 0 {
                xp.extend_from_slice(&x_mean);
                yp.push(y_mean);
            } else {
                xp.extend_from_slice(x.row_slice(t - 1));
                yp.push(y[t - 1]);
            }
            ys.push(y[t]);
        }
        SupervisedData::new(
            Tensor::new(s, n, xs),
            Tensor::new(s, n, xp),
            Tensor::new(s, 1, ys),
            Tensor::new(s, 1, yp),
        )
    };
    Ok((
        build(&x, &y, 0, n_train)?,
        build(&x, &y, n_train, cfg.t)?,
        build(&x_test, &y_test, 0, cfg.t * cfg.test_multiplier)?,
    ))
}

/// Training settings for the regression benchmark.
fn regression_train_config(n: usize, seed: u64, mode: AdjustmentMode) -> TrainConfig {
    TrainConfig {
        epochs: 750,
        early_stop_patience: None,
        batch_size: 64,
        window: 1,
        lr_model: 5e-3,
        lr_rho: 1e-2,
        seed,
        mode,
        rho_dim: Some(1),
        freeze_rho: None,
        // best-validation selection skips the first 5 epochs on narrow inputs
        skip_first_epochs: if n <= 3 { 5 } else { 0 },
    }
}

/// Default hidden width for the benchmark MLP; recorded in every record's
/// config hash. The protocol leaves the width open.
pub const REGRESSION_HIDDEN: usize = 64;

struct ScoredRun {
    test_mse: f64,
    remaining: f64,
    rho_hat: Vec<f64>,
}

/// Original-unit test error of a trained regression model.
fn score_regression(
    model: &ModelGraph,
    store: &ParamStore,
    rho: &[f64],
    two_model: bool,
    mode: AdjustmentMode,
    test: &SupervisedData,
) -> Result<ScoredRun> {
    let s = test.len();
    let recovered: Vec<f64> = if two_model {
        let pred_now = model.predict(store, &test.x);
        let zero = rho.iter().all(|v| *v == 0.0);
        let pred_lag = if zero {
            None
        } else {
            Some(model.predict(store, &test.x_prev))
        };
        (0..s)
            .map(|r| {
                let rc = rho[0];
                pred_now.get(r, 0) - pred_lag.as_ref().map_or(0.0, |p| rc * p.get(r, 0))
                    + rc * test.y_prev.get(r, 0)
            })
            .collect()
    } else {
        let tx = transformed_inputs(test, rho, mode);
        let pred = model.predict(store, &tx);
        (0..s)
            .map(|r| {
                let base = pred.get(r, 0);
                if mode.transforms_output() {
                    base + rho[0] * test.y_prev.get(r, 0)
                } else {
                    base
                }
            })
            .collect()
    };
    let residuals: Vec<f64> = (0..s).map(|r| test.y.get(r, 0) - recovered[r]).collect();
    let test_mse = residuals.iter().map(|e| e * e).sum::<f64>() / s as f64;
    let remaining = residual_autocorrelation(&residuals)?;
    Ok(ScoredRun {
        test_mse,
        remaining,
        rho_hat: rho.to_vec(),
    })
}

fn run_one_regression(
    cfg: &DgpConfig,
    method: Method,
    replicate: u64,
    root_seed: u64,
    hidden: usize,
) -> RunRecord {
    let started = Instant::now();
    let config_hash = cfg.hash_string(hidden);
    let failed = |hash: String, elapsed: f64| RunRecord {
        format_version: RUN_RECORD_VERSION,
        config_hash: hash,
        method,
        seed: replicate,
        test_mse: None,
        test_rrmse: None,
        rho_hat: Vec::new(),
        abs_rho_err: None,
        remaining_autocorrelation: None,
        wall_clock_secs: elapsed,
        diverged: true,
    };

    // datasets are shared across methods: the data stream depends only on
    // (root, cell, replicate)
    let data_seed = seeds::run_seed(root_seed, cell_id(cfg), "data", replicate);
    let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
    let (train, valid, test) = match generate_regression_dataset(cfg, &mut data_rng) {
        Ok(v) => v,
        Err(_) => return failed(config_hash, started.elapsed().as_secs_f64()),
    };

    let run_seed = seeds::run_seed(root_seed, cell_id(cfg), method.as_str(), replicate);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let spec = ModelSpec::mlp_regressor(cfg.n, hidden);
    let model = match ModelGraph::build(spec, &mut store, &mut rng) {
        Ok(m) => m,
        Err(_) => return failed(config_hash, started.elapsed().as_secs_f64()),
    };

    let scored: Result<ScoredRun> = (|| match method {
        Method::Wo => {
            let cfg_t = regression_train_config(cfg.n, run_seed, AdjustmentMode::None);
            let rho = RhoParam::frozen(vec![0.0])?;
            fit_supervised(&model, &mut store, &rho, Objective::Joint, &train, &valid, &cfg_t)?;
            score_regression(&model, &store, &[0.0], false, AdjustmentMode::None, &test)
        }
        Method::W => {
            let cfg_t = regression_train_config(cfg.n, run_seed, AdjustmentMode::Both);
            let rho = RhoParam::trainable(&mut store, 1)?;
            let out = fit_supervised(
                &model, &mut store, &rho, Objective::Joint, &train, &valid, &cfg_t,
            )?;
            score_regression(&model, &store, &out.rho, false, AdjustmentMode::Both, &test)
        }
        Method::Mpw => {
            let cfg_t = regression_train_config(cfg.n, run_seed, AdjustmentMode::Both);
            let out = mpw_fit(
                &model, &mut store, &train, &valid, &cfg_t, 1, MPW_MAX_OUTER, MPW_OUTER_TOL,
            )?;
            score_regression(&model, &store, &out.rho, true, AdjustmentMode::Both, &test)
        }
    })();

    match scored {
        Ok(s) => {
            let rho_mean = s.rho_hat.iter().sum::<f64>() / s.rho_hat.len() as f64;
            RunRecord {
                format_version: RUN_RECORD_VERSION,
                config_hash,
                method,
                seed: replicate,
                test_mse: Some(s.test_mse),
                test_rrmse: None,
                rho_hat: s.rho_hat,
                abs_rho_err: Some((cfg.rho - rho_mean).abs()),
                remaining_autocorrelation: Some(s.remaining),
                wall_clock_secs: started.elapsed().as_secs_f64(),
                diverged: false,
            }
        }
        Err(_) => failed(config_hash, started.elapsed().as_secs_f64()),
    }
}

/// One joint-objective regression run under an explicit adjustment mode,
/// for ablations across `none`/`input`/`output`/`both`. The dataset stream
/// depends only on `(root_seed, cell, replicate)`, so runs that differ only
/// in mode are seed-paired; the training stream additionally keys on the
/// mode so initializations are independent across modes.
pub fn run_regression_with_mode(
    cfg: &DgpConfig,
    mode: AdjustmentMode,
    replicate: u64,
    root_seed: u64,
    hidden: usize,
) -> Result<(f64, f64, Vec<f64>)> {
    let data_seed = seeds::run_seed(root_seed, cell_id(cfg), "data", replicate);
    let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
    let (train, valid, test) = generate_regression_dataset(cfg, &mut data_rng)?;

    let mode_tag = match mode {
        AdjustmentMode::None => "mode_none",
        AdjustmentMode::InputOnly => "mode_input",
        AdjustmentMode::OutputOnly => "mode_output",
        AdjustmentMode::Both => "mode_both",
    };
    let run_seed = seeds::run_seed(root_seed, cell_id(cfg), mode_tag, replicate);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let spec = ModelSpec::mlp_regressor(cfg.n, hidden);
    let model = ModelGraph::build(spec, &mut store, &mut rng)?;
    let cfg_t = regression_train_config(cfg.n, run_seed, mode);
    let rho = if mode == AdjustmentMode::None {
        RhoParam::frozen(vec![0.0])?
    } else {
        RhoParam::trainable(&mut store, 1)?
    };
    let out = fit_supervised(&model, &mut store, &rho, Objective::Joint, &train, &valid, &cfg_t)?;
    let scored = score_regression(&model, &store, &out.rho, false, mode, &test)?;
    Ok((scored.test_mse, scored.remaining, scored.rho_hat))
}

fn cell_id(cfg: &DgpConfig) -> u64 {
    seeds::mix(&[
        cfg.t as u64,
        cfg.n as u64,
        cfg.rho.to_bits(),
        cfg.sigma.to_bits(),
    ])
}

/// Runs one grid cell: every (method, replicate) pair, in parallel, with
/// dataset draws shared across methods so comparisons are seed-paired.
/// Output order is deterministic (method, then replicate).
pub fn run_regression_cell(
    cfg: &DgpConfig,
    methods: &[Method],
    seeds_per_cell: usize,
    root_seed: u64,
) -> Result<Vec<RunRecord>> {
    run_regression_cell_with_hidden(cfg, methods, seeds_per_cell, root_seed, REGRESSION_HIDDEN)
}

/// Same cell runner with an explicit MLP hidden width.
pub fn run_regression_cell_with_hidden(
    cfg: &DgpConfig,
    methods: &[Method],
    seeds_per_cell: usize,
    root_seed: u64,
    hidden: usize,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if methods.is_empty() || seeds_per_cell == 0 {
        return Err(Error::InvalidConfig("no methods or seeds requested".into()));
    }
    let mut jobs: Vec<(Method, u64)> = Vec::new();
    for &m in methods {
        for s in 0..seeds_per_cell {
            jobs.push((m, s as u64));
        }
    }
    let mut records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(m, s)| run_one_regression(cfg, m, s, root_seed, hidden))
        .collect();
    records.sort_by_key(|r| (r.method, r.seed));
    Ok(records)
}

/// Forecasting experiment on user data: per-seed, per-method runs over a
/// chronological split, seed-paired across methods.
pub fn run_forecast_experiment(
    frame: &SeriesFrame,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    methods: &[Method],
    seeds_per_cell: usize,
    root_seed: u64,
) -> Result<Vec<RunRecord>> {
    if methods.is_empty() || seeds_per_cell == 0 {
        return Err(Error::InvalidConfig("no methods or seeds requested".into()));
    }
    let (train, valid, test) = split_chronological(frame, &SplitSpec::default())?;
    let hash = format!(
        "forecast_T{}_N{}_W{}_h{}",
        frame.len(),
        frame.n_series(),
        cfg.window,
        spec.hidden_dim
    );
    let mut records = Vec::new();
    for &method in methods {
        for s in 0..seeds_per_cell {
            let run_seed = seeds::run_seed(root_seed, 0, method.as_str(), s as u64);
            let started = Instant::now();
            let mut run_cfg = cfg.clone();
            run_cfg.seed = run_seed;
            run_cfg.mode = match method {
                Method::Wo => AdjustmentMode::None,
                _ => AdjustmentMode::Both,
            };
            let fitted: Result<FitReport> = match method {
                Method::Mpw => {
                    naive_mpw_train(&train, &valid, &test, spec, &run_cfg, MPW_MAX_OUTER)
                }
                _ => joint_train(&train, &valid, &test, spec, &run_cfg),
            };
            let record = match fitted {
                Ok(report) => {
                    let rho_mean =
                        report.rho.iter().sum::<f64>() / report.rho.len() as f64;
                    RunRecord {
                        format_version: RUN_RECORD_VERSION,
                        config_hash: hash.clone(),
                        method,
                        seed: s as u64,
                        test_mse: None,
                        test_rrmse: Some(report.test_rrmse),
                        rho_hat: report.rho.clone(),
                        abs_rho_err: Some(rho_mean.abs()),
                        remaining_autocorrelation: Some(report.remaining_autocorrelation_mean),
                        wall_clock_secs: started.elapsed().as_secs_f64(),
                        diverged: false,
                    }
                }
                Err(Error::TrainDiverged { .. }) => RunRecord {
                    format_version: RUN_RECORD_VERSION,
                    config_hash: hash.clone(),
                    method,
                    seed: s as u64,
                    test_mse: None,
                    test_rrmse: None,
                    rho_hat: Vec::new(),
                    abs_rho_err: None,
                    remaining_autocorrelation: None,
                    wall_clock_secs: started.elapsed().as_secs_f64(),
                    diverged: true,
                },
                Err(e) => return Err(e),
            };
            records.push(record);
        }
    }
    Ok(records)
}

/// Fixed-width histogram counts; values outside [lo, hi) are clamped into
/// the edge bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    assert!(bins > 0 && hi > lo);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    counts
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellMethodSummary {
    pub config_hash: String,
    pub method: Method,
    pub runs: usize,
    pub diverged: usize,
    pub mean_test_mse: Option<f64>,
    pub mean_test_rrmse: Option<f64>,
    pub mean_abs_rho_err: Option<f64>,
    pub mean_remaining_autocorrelation: Option<f64>,
    pub mean_abs_remaining_autocorrelation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellComparison {
    pub config_hash: String,
    pub baseline: Method,
    pub adjusted: Method,
    pub pairs: usize,
    pub t_test: PairedTTest,
    /// Average relative improvement in percent, on RRMSE when present for
    /// every pair, otherwise on test MSE.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainingHistogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub counts_per_method: Vec<(Method, Vec<usize>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub per_cell: Vec<CellMethodSummary>,
    pub comparisons: Vec<CellComparison>,
    pub histogram: RemainingHistogram,
    /// Recomputed from unadjusted runs when at least 20 are available.
    pub critical_values: Option<CriticalValueTable>,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Pure aggregation over run records: per-(cell, method) means, seed-paired
/// wo-vs-w tests, histogram data, and recomputed critical values. Rejects
/// cells where the wo and w replicate sets differ.
pub fn summarize(records: &[RunRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no run records".into()));
    }
    let mut cells: Vec<String> = records.iter().map(|r| r.config_hash.clone()).collect();
    cells.sort();
    cells.dedup();

    let mut per_cell = Vec::new();
    let mut comparisons = Vec::new();
    for cell in &cells {
        let of_method = |m: Method| -> Vec<&RunRecord> {
            let mut v: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.config_hash == *cell && r.method == m)
                .collect();
            v.sort_by_key(|r| r.seed);
            v
        };
        for method in Method::all() {
            let runs = of_method(method);
            if runs.is_empty() {
                continue;
            }
            let ok: Vec<&&RunRecord> = runs.iter().filter(|r| !r.diverged).collect();
            let collect = |f: fn(&RunRecord) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| f(r)).collect()
            };
            per_cell.push(CellMethodSummary {
                config_hash: cell.clone(),
                method,
                runs: runs.len(),
                diverged: runs.len() - ok.len(),
                mean_test_mse: mean_of(&collect(|r| r.test_mse)),
                mean_test_rrmse: mean_of(&collect(|r| r.test_rrmse)),
                mean_abs_rho_err: mean_of(&collect(|r| r.abs_rho_err)),
                mean_remaining_autocorrelation: mean_of(&collect(|r| {
                    r.remaining_autocorrelation
                })),
                mean_abs_remaining_autocorrelation: mean_of(&collect(|r| {
                    r.remaining_autocorrelation.map(f64::abs)
                })),
            });
        }

        for adjusted in [Method::W, Method::Mpw] {
            let base = of_method(Method::Wo);
            let adj = of_method(adjusted);
            if base.is_empty() || adj.is_empty() {
                continue;
            }
            let base_seeds: Vec<u64> = base.iter().map(|r| r.seed).collect();
            let adj_seeds: Vec<u64> = adj.iter().map(|r| r.seed).collect();
            if base_seeds != adj_seeds {
                return Err(Error::UnpairedRecords(cell.clone()));
            }
            // paired over non-diverged pairs only
            let metric = |r: &RunRecord| r.test_rrmse.or(r.test_mse);
            let mut wo_vals = Vec::new();
            let mut adj_vals = Vec::new();
            for (b, a) in base.iter().zip(&adj) {
                if let (Some(bv), Some(av)) = (metric(b), metric(a)) {
                    wo_vals.push(bv);
                    adj_vals.push(av);
                }
            }
            if wo_vals.len() < 2 {
                continue;
            }
            comparisons.push(CellComparison {
                config_hash: cell.clone(),
                baseline: Method::Wo,
                adjusted,
                pairs: wo_vals.len(),
                t_test: paired_t_test(&wo_vals, &adj_vals)?,
                improvement_pct: avg_relative_improvement(&wo_vals, &adj_vals)?,
            });
        }
    }

    let bins = 40;
    let mut counts_per_method = Vec::new();
    for method in Method::all() {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.remaining_autocorrelation)
            .collect();
        if !vals.is_empty() {
            counts_per_method.push((method, histogram(&vals, -1.0, 1.0, bins)));
        }
    }
    let wo_remaining: Vec<f64> = records
        .iter()
        .filter(|r| r.method == Method::Wo)
        .filter_map(|r| r.remaining_autocorrelation)
        .collect();
    let critical_values = if wo_remaining.len() >= 20 {
        Some(empirical_critical_values(
            &wo_remaining,
            &[0.10, 0.05, 0.01],
        )?)
    } else {
        None
    };

    Ok(Summary {
        per_cell,
        comparisons,
        histogram: RemainingHistogram {
            lo: -1.0,
            hi: 1.0,
            bins,
            counts_per_method,
        },
        critical_values,
    })
}

/// Plot-ready CSV of |true rho - learned rho| by method and cell.
pub fn rho_error_csv(summary: &Summary) -> String {
    let mut out = String::from("config_hash,method,mean_abs_rho_err\n");
    for c in &summary.per_cell {
        if let Some(v) = c.mean_abs_rho_err {
            out.push_str(&format!("{},{},{v}\n", c.config_hash, c.method.as_str()));
        }
    }
    out
}
