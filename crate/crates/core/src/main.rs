//! Command-line entry point: fitting, diagnostics, simulation, grid search,
//! classical estimators, and the Monte Carlo benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use autocorr::adjust::{default_rho_grid, grid_search_rho, AdjustmentMode, TrainConfig};
use autocorr::autodiff::Tensor;
use autocorr::bench::{
    self, run_forecast_experiment, run_regression_cell_with_hidden, summarize, DgpConfig,
    ExperimentGrid, Method, RunRecord, REGRESSION_HIDDEN,
};
use autocorr::classical::{cochrane_orcutt, ols_fit, prais_winsten};
use autocorr::method::{registry, strategy};
use autocorr::models::ModelSpec;
use autocorr::series::{load_csv, save_csv, split_chronological, SeriesFrame, SplitSpec};
use autocorr::stats::{
    durbin_watson, empirical_critical_values, residual_autocorrelation, simulate_ar1,
    CriticalValueTable,
};
use autocorr::{Error, Result};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "AUTOCORR_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "autocorr",
    version,
    about = "Train time-series models with first-order autocorrelated-error adjustment",
    after_help = "Config precedence: built-in defaults < --config TOML file < command-line flags.\n\
                  The default output directory comes from $AUTOCORR_OUT_DIR (falling back to `.`)."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonOpts {
    /// Root RNG seed; recorded in every artifact.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for benchmark runs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Which series are quasi-differenced during training.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Freeze the coefficient at this value instead of learning it.
    #[arg(long, global = true)]
    freeze_rho: Option<f64>,
    /// Coefficient dimensionality: auto (scalar below 300 series), scalar, or vector.
    #[arg(long, global = true, value_enum)]
    rho_dim: Option<RhoDimArg>,
    /// History window length fed to the forecaster.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long, global = true)]
    patience: Option<usize>,
    /// Mini-batch size.
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// Learning rate for model parameters.
    #[arg(long = "lr-model", global = true)]
    lr_model: Option<f64>,
    /// Learning rate for the coefficient.
    #[arg(long = "lr-rho", global = true)]
    lr_rho: Option<f64>,
    /// Hidden width of the MLP models.
    #[arg(long, global = true)]
    hidden: Option<usize>,
    /// Output directory (default: $AUTOCORR_OUT_DIR or `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML config file providing defaults for any of the above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModeArg {
    None,
    Input,
    Output,
    Both,
}

impl From<ModeArg> for AdjustmentMode {
    fn from(m: ModeArg) -> AdjustmentMode {
        match m {
            ModeArg::None => AdjustmentMode::None,
            ModeArg::Input => AdjustmentMode::InputOnly,
            ModeArg::Output => AdjustmentMode::OutputOnly,
            ModeArg::Both => AdjustmentMode::Both,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum RhoDimArg {
    Auto,
    Scalar,
    Vector,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Fit a forecaster on a CSV of series (columns = series, rows = time).
    Fit {
        /// Input CSV path.
        input: PathBuf,
        /// Training method, one of the registered strategies (`list` to
        /// print them).
        #[arg(long, default_value = "w")]
        method: String,
        /// Treat the first CSV row as data, not column names.
        #[arg(long)]
        no_header: bool,
    },
    /// Residual diagnostics: lag-1 autocorrelation, Durbin-Watson, verdict.
    Diagnose {
        /// CSV of residuals (columns = series).
        input: PathBuf,
        #[arg(long)]
        no_header: bool,
    },
    /// Grid search the frozen coefficient over the default grid.
    GridsearchRho {
        input: PathBuf,
        #[arg(long)]
        no_header: bool,
    },
    /// Simulate AR(1) series to CSV.
    Simulate {
        #[arg(long, alias = "T", default_value_t = 1000)]
        len: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        n_series: usize,
    },
    /// Synthetic regression benchmark over a cell slice or the full grid.
    BenchRegression {
        /// Comma-separated methods (wo, mpw, w).
        #[arg(long, default_value = "wo,mpw,w")]
        methods: String,
        /// Replicates per cell.
        #[arg(long, default_value_t = 30)]
        seeds: usize,
        /// Run the full published grid (48,750 runs per method) instead of
        /// the default 6-cell slice.
        #[arg(long)]
        full_grid: bool,
    },
    /// Seed-paired forecasting experiment on user data.
    BenchForecast {
        input: PathBuf,
        #[arg(long, default_value = "wo,w")]
        methods: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        no_header: bool,
    },
    /// Critical values: paper defaults, or recomputed from run records.
    Criticals {
        /// JSON-lines run records; uses unadjusted runs' remaining
        /// autocorrelation. Omit to print the published table.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Classical linear estimators (OLS, Cochrane-Orcutt, Prais-Winsten).
    ClassicalFit {
        input: PathBuf,
        /// Target column name; defaults to the last column.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value = "all")]
        estimator: String,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        /// Skip the implicit intercept column.
        #[arg(long)]
        no_intercept: bool,
        #[arg(long)]
        no_header: bool,
    },
}

/// Optional overrides loadable from a TOML file; same names as the flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    workers: Option<usize>,
    mode: Option<String>,
    freeze_rho: Option<f64>,
    rho_dim: Option<String>,
    window: Option<usize>,
    epochs: Option<usize>,
    patience: Option<usize>,
    batch: Option<usize>,
    lr_model: Option<f64>,
    lr_rho: Option<f64>,
    hidden: Option<usize>,
    out: Option<PathBuf>,
}

/// Fully resolved settings after applying precedence, echoed into outputs.
#[derive(Debug, Clone, Serialize)]
struct Effective {
    seed: u64,
    workers: Option<usize>,
    train: TrainConfig,
    rho_dim: String,
    hidden: usize,
    out_dir: PathBuf,
}

fn parse_mode(s: &str) -> Result<AdjustmentMode> {
    match s {
        "none" => Ok(AdjustmentMode::None),
        "input" | "input_only" => Ok(AdjustmentMode::InputOnly),
        "output" | "output_only" => Ok(AdjustmentMode::OutputOnly),
        "both" => Ok(AdjustmentMode::Both),
        other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
    }
}

fn resolve(common: &CommonOpts) -> Result<Effective> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("bad config file: {e}")))?
        }
        None => FileConfig::default(),
    };

    let mut train = TrainConfig::default();
    if let Some(m) = &file.mode {
        train.mode = parse_mode(m)?;
    }
    if let Some(m) = common.mode {
        train.mode = m.into();
    }
    train.freeze_rho = common.freeze_rho.or(file.freeze_rho);
    if let Some(w) = common.window.or(file.window) {
        train.window = w;
    }
    if let Some(e) = common.epochs.or(file.epochs) {
        train.epochs = e;
    }
    if let Some(p) = common.patience.or(file.patience) {
        train.early_stop_patience = if p == 0 { None } else { Some(p) };
    }
    if let Some(b) = common.batch.or(file.batch) {
        train.batch_size = b;
    }
    if let Some(lr) = common.lr_model.or(file.lr_model) {
        train.lr_model = lr;
    }
    if let Some(lr) = common.lr_rho.or(file.lr_rho) {
        train.lr_rho = lr;
    }
    let seed = common.seed.or(file.seed).unwrap_or(42);
    train.seed = seed;

    let rho_dim = match common.rho_dim {
        Some(RhoDimArg::Auto) => "auto".to_string(),
        Some(RhoDimArg::Scalar) => "scalar".to_string(),
        Some(RhoDimArg::Vector) => "vector".to_string(),
        None => file.rho_dim.clone().unwrap_or_else(|| "auto".to_string()),
    };
    if !matches!(rho_dim.as_str(), "auto" | "scalar" | "vector") {
        return Err(Error::InvalidConfig(format!("unknown rho_dim `{rho_dim}`")));
    }

    let out_dir = common
        .out
        .clone()
        .or(file.out)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(Effective {
        seed,
        workers: common.workers.or(file.workers),
        train,
        rho_dim,
        hidden: common.hidden.or(file.hidden).unwrap_or(0),
        out_dir,
    })
}

/// Maps rho_dim setting to a concrete `TrainConfig::rho_dim`.
fn apply_rho_dim(train: &mut TrainConfig, rho_dim: &str, n_series: usize) {
    train.rho_dim = match rho_dim {
        "scalar" => Some(1),
        "vector" => Some(n_series),
        _ => None, // auto rule resolves inside the trainer
    };
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn load_frame(path: &Path, no_header: bool) -> Result<SeriesFrame> {
    load_csv(path, !no_header)
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m = Method::from_str(part)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("no methods given".into()));
    }
    Ok(out)
}

/// Zeroes per-run wall-clock times so emitted files are bit-for-bit
/// reproducible for a fixed seed.
fn stable_records(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    for r in &mut records {
        r.wall_clock_secs = 0.0;
    }
    records
}

fn records_jsonl(records: &[RunRecord]) -> Result<String> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    Ok(text)
}

fn run(cli: Cli) -> Result<()> {
    let eff = resolve(&cli.common)?;
    if let Some(workers) = eff.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    }

    match cli.cmd {
        Cmd::Fit {
            input,
            method,
            no_header,
        } => cmd_fit(&eff, &input, &method, no_header),
        Cmd::Diagnose { input, no_header } => cmd_diagnose(&eff, &input, no_header),
        Cmd::GridsearchRho { input, no_header } => cmd_gridsearch(&eff, &input, no_header),
        Cmd::Simulate {
            len,
            rho,
            sigma,
            n_series,
        } => cmd_simulate(&eff, len, rho, sigma, n_series),
        Cmd::BenchRegression {
            methods,
            seeds,
            full_grid,
        } => cmd_bench_regression(&eff, &methods, seeds, full_grid),
        Cmd::BenchForecast {
            input,
            methods,
            seeds,
            no_header,
        } => cmd_bench_forecast(&eff, &input, &methods, seeds, no_header),
        Cmd::Criticals { from } => cmd_criticals(&eff, from.as_deref()),
        Cmd::ClassicalFit {
            input,
            target,
            estimator,
            max_iters,
            no_intercept,
            no_header,
        } => cmd_classical(&eff, &input, target.as_deref(), &estimator, max_iters, !no_intercept, no_header),
    }
}

fn cmd_fit(eff: &Effective, input: &Path, method: &str, no_header: bool) -> Result<()> {
    if method == "list" {
        for s in registry() {
            println!("{}: {}", s.name(), s.describe());
        }
        return Ok(());
    }
    let strat = strategy(method)?;
    let frame = load_frame(input, no_header)?;
    let (train, valid, test) = split_chronological(&frame, &SplitSpec::default())?;
    let mut cfg = eff.train.clone();
    apply_rho_dim(&mut cfg, &eff.rho_dim, frame.n_series());
    let hidden = if eff.hidden == 0 { 64 } else { eff.hidden };
    let spec = ModelSpec::window_forecaster(cfg.window, frame.n_series(), hidden);
    let report = strat.fit(&train, &valid, &test, &spec, &cfg)?;

    write_out(&eff.out_dir, "fit_report.json", &report.to_json_stable())?;
    write_out(
        &eff.out_dir,
        "train_curve.csv",
        &autocorr::adjust::FitReport::curve_csv(&report.train_curve),
    )?;
    write_out(
        &eff.out_dir,
        "valid_curve.csv",
        &autocorr::adjust::FitReport::curve_csv(&report.valid_curve),
    )?;
    write_out(
        &eff.out_dir,
        "checkpoint.json",
        &serde_json::to_string_pretty(&report.checkpoint)?,
    )?;
    println!(
        "method={} test_rrmse={:.6} remaining_autocorrelation={:.4} rho={:?}",
        strat.name(),
        report.test_rrmse,
        report.remaining_autocorrelation_mean,
        report.rho
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiagnoseReport<'a> {
    effective_config: &'a Effective,
    per_series: Vec<SeriesDiagnostic>,
    mean_autocorrelation: Option<f64>,
    verdict: String,
}

#[derive(Debug, Serialize)]
struct SeriesDiagnostic {
    name: String,
    autocorrelation: Option<f64>,
    durbin_watson: Option<f64>,
}

fn cmd_diagnose(eff: &Effective, input: &Path, no_header: bool) -> Result<()> {
    let frame = load_frame(input, no_header)?;
    let table = CriticalValueTable::paper_default();
    let mut per_series = Vec::new();
    let mut defined = Vec::new();
    for (i, name) in frame.names().iter().enumerate() {
        let col = frame.column(i);
        let (ac, dw) = match (residual_autocorrelation(&col), durbin_watson(&col)) {
            (Ok(a), Ok(d)) => (Some(a), Some(d)),
            _ => (None, None),
        };
        if let Some(a) = ac {
            defined.push(a);
        }
        match (ac, dw) {
            (Some(a), Some(d)) => println!("{name}: rho_hat={a:.4} durbin_watson={d:.4}"),
            _ => println!("{name}: statistic undefined (zero-variance residuals)"),
        }
        per_series.push(SeriesDiagnostic {
            name: name.clone(),
            autocorrelation: ac,
            durbin_watson: dw,
        });
    }
    let mean = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let verdict = match mean {
        None => "statistic undefined for all series (zero-variance residuals)".to_string(),
        Some(m) => {
            let t99 = table.threshold(0.01).unwrap();
            let t95 = table.threshold(0.05).unwrap();
            let t90 = table.threshold(0.10).unwrap();
            if m >= t99 {
                "adjust recommended at 99%".to_string()
            } else if m >= t95 {
                "adjust recommended at 95%".to_string()
            } else if m >= t90 {
                "adjust suggested at 90%".to_string()
            } else {
                "no adjustment indicated".to_string()
            }
        }
    };
    if let Some(m) = mean {
        println!("mean rho_hat over {} series: {m:.4}", frame.n_series());
    }
    println!("verdict: {verdict}");
    let report = DiagnoseReport {
        effective_config: eff,
        per_series,
        mean_autocorrelation: mean,
        verdict,
    };
    write_out(
        &eff.out_dir,
        "diagnose.json",
        &serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}

fn cmd_gridsearch(eff: &Effective, input: &Path, no_header: bool) -> Result<()> {
    let frame = load_frame(input, no_header)?;
    let (train, valid, _test) = split_chronological(&frame, &SplitSpec::default())?;
    let mut cfg = eff.train.clone();
    apply_rho_dim(&mut cfg, &eff.rho_dim, frame.n_series());
    let hidden = if eff.hidden == 0 { 64 } else { eff.hidden };
    let spec = ModelSpec::window_forecaster(cfg.window, frame.n_series(), hidden);
    let grid = default_rho_grid();
    let result = grid_search_rho(&train, &valid, &spec, &cfg, &grid)?;
    println!("best rho: {}", result.best_rho);
    let mut csv = String::from("rho,valid_rrmse\n");
    for (r, s) in &result.table {
        csv.push_str(&format!("{r},{s}\n"));
    }
    write_out(&eff.out_dir, "grid_table.csv", &csv)?;
    #[derive(Serialize)]
    struct GridOut<'a> {
        effective_config: &'a Effective,
        best_rho: f64,
        table: &'a [(f64, f64)],
    }
    write_out(
        &eff.out_dir,
        "grid_result.json",
        &serde_json::to_string_pretty(&GridOut {
            effective_config: eff,
            best_rho: result.best_rho,
            table: &result.table,
        })?,
    )?;
    Ok(())
}

fn cmd_simulate(eff: &Effective, len: usize, rho: f64, sigma: f64, n_series: usize) -> Result<()> {
    if n_series == 0 {
        return Err(Error::InvalidConfig("n_series must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(eff.seed);
    let mut columns = Vec::with_capacity(n_series);
    for _ in 0..n_series {
        columns.push(simulate_ar1(rho, sigma, len, &mut rng)?);
    }
    let mut flat = Vec::with_capacity(len * n_series);
    for t in 0..len {
        for col in &columns {
            flat.push(col[t]);
        }
    }
    let names = (0..n_series).map(|i| format!("ar1_{i}")).collect();
    let frame = SeriesFrame::new(names, Tensor::new(len, n_series, flat))?;
    fs::create_dir_all(&eff.out_dir)?;
    let path = eff.out_dir.join("simulated.csv");
    save_csv(&frame, &path)?;
    println!("wrote {}", path.display());
    #[derive(Serialize)]
    struct SimOut<'a> {
        effective_config: &'a Effective,
        len: usize,
        rho: f64,
        sigma: f64,
        n_series: usize,
    }
    write_out(
        &eff.out_dir,
        "simulated_config.json",
        &serde_json::to_string_pretty(&SimOut {
            effective_config: eff,
            len,
            rho,
            sigma,
            n_series,
        })?,
    )?;
    Ok(())
}

/// Default desk-scale slice of the benchmark grid: the two headline cells
/// plus smaller cells covering negative and near-zero coefficients.
fn default_cell_slice() -> Vec<DgpConfig> {
    vec![
        DgpConfig::new(400, 6, 0.75, 0.02),
        DgpConfig::new(400, 6, 0.0, 0.02),
        DgpConfig::new(100, 3, 0.75, 0.01),
        DgpConfig::new(100, 3, -0.75, 0.01),
        DgpConfig::new(50, 2, 0.9, 0.04),
        DgpConfig::new(50, 2, 0.15, 0.005),
    ]
}

fn cmd_bench_regression(
    eff: &Effective,
    methods: &str,
    seeds: usize,
    full_grid: bool,
) -> Result<()> {
    let methods = parse_methods(methods)?;
    let hidden = if eff.hidden == 0 {
        REGRESSION_HIDDEN
    } else {
        eff.hidden
    };
    let cells = if full_grid {
        let grid = ExperimentGrid::default();
        grid.validate()?;
        grid.cells()
    } else {
        default_cell_slice()
    };
    let mut all = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        eprintln!(
            "cell {}/{}: T={} N={} rho={} sigma={}",
            i + 1,
            cells.len(),
            cell.t,
            cell.n,
            cell.rho,
            cell.sigma
        );
        let records = run_regression_cell_with_hidden(cell, &methods, seeds, eff.seed, hidden)?;
        all.extend(records);
    }
    let all = stable_records(all);
    write_out(&eff.out_dir, "runs.jsonl", &records_jsonl(&all)?)?;
    let summary = summarize(&all)?;
    #[derive(Serialize)]
    struct SummaryOut<'a> {
        effective_config: &'a Effective,
        summary: &'a bench::Summary,
    }
    write_out(
        &eff.out_dir,
        "summary.json",
        &serde_json::to_string_pretty(&SummaryOut {
            effective_config: eff,
            summary: &summary,
        })?,
    )?;
    write_out(&eff.out_dir, "rho_error.csv", &bench::rho_error_csv(&summary))?;
    for cmp in &summary.comparisons {
        println!(
            "{} {} vs {}: t={:.3} p={:.5} improvement={:.2}%",
            cmp.config_hash,
            cmp.adjusted.as_str(),
            cmp.baseline.as_str(),
            cmp.t_test.t_statistic,
            cmp.t_test.p_value,
            cmp.improvement_pct
        );
    }
    Ok(())
}

fn cmd_bench_forecast(
    eff: &Effective,
    input: &Path,
    methods: &str,
    seeds: usize,
    no_header: bool,
) -> Result<()> {
    let methods = parse_methods(methods)?;
    let frame = load_frame(input, no_header)?;
    let mut cfg = eff.train.clone();
    apply_rho_dim(&mut cfg, &eff.rho_dim, frame.n_series());
    let hidden = if eff.hidden == 0 { 64 } else { eff.hidden };
    let spec = ModelSpec::window_forecaster(cfg.window, frame.n_series(), hidden);
    let records = run_forecast_experiment(&frame, &spec, &cfg, &methods, seeds, eff.seed)?;
    let records = stable_records(records);
    write_out(&eff.out_dir, "runs_forecast.jsonl", &records_jsonl(&records)?)?;
    let summary = summarize(&records)?;
    #[derive(Serialize)]
    struct SummaryOut<'a> {
        effective_config: &'a Effective,
        summary: &'a bench::Summary,
    }
    write_out(
        &eff.out_dir,
        "summary_forecast.json",
        &serde_json::to_string_pretty(&SummaryOut {
            effective_config: eff,
            summary: &summary,
        })?,
    )?;
    for cmp in &summary.comparisons {
        println!(
            "{} vs {}: t={:.3} p={:.5} improvement={:.2}%",
            cmp.adjusted.as_str(),
            cmp.baseline.as_str(),
            cmp.t_test.t_statistic,
            cmp.t_test.p_value,
            cmp.improvement_pct
        );
    }
    Ok(())
}

fn cmd_criticals(eff: &Effective, from: Option<&Path>) -> Result<()> {
    let table = match from {
        None => CriticalValueTable::paper_default(),
        Some(path) => {
            let records = bench::read_records(path)?;
            let samples: Vec<f64> = records
                .iter()
                .filter(|r| r.method == Method::Wo)
                .filter_map(|r| r.remaining_autocorrelation)
                .collect();
            empirical_critical_values(&samples, &[0.10, 0.05, 0.01])?
        }
    };
    for (tail, threshold) in &table.entries {
        println!("tail {:>5.1}% -> threshold {threshold:.4}", tail * 100.0);
    }
    #[derive(Serialize)]
    struct CritOut<'a> {
        effective_config: &'a Effective,
        table: &'a CriticalValueTable,
    }
    write_out(
        &eff.out_dir,
        "criticals.json",
        &serde_json::to_string_pretty(&CritOut {
            effective_config: eff,
            table: &table,
        })?,
    )?;
    Ok(())
}

fn cmd_classical(
    eff: &Effective,
    input: &Path,
    target: Option<&str>,
    estimator: &str,
    max_iters: usize,
    intercept: bool,
    no_header: bool,
) -> Result<()> {
    let frame = load_frame(input, no_header)?;
    if frame.n_series() < 2 {
        return Err(Error::InvalidConfig(
            "classical-fit needs at least one regressor and one target column".into(),
        ));
    }
    let target_idx = match target {
        None => frame.n_series() - 1,
        Some(name) => frame
            .names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no column named `{name}`")))?,
    };
    let y = frame.column(target_idx);
    let t = frame.len();
    let k = frame.n_series() - 1 + usize::from(intercept);
    let mut design = Vec::with_capacity(t * k);
    for r in 0..t {
        if intercept {
            design.push(1.0);
        }
        for c in 0..frame.n_series() {
            if c != target_idx {
                design.push(frame.get(r, c));
            }
        }
    }
    let x = Tensor::new(t, k, design);

    #[derive(Serialize)]
    struct EstimateOut {
        estimator: String,
        beta: Vec<f64>,
        rho: f64,
        iterations: usize,
    }
    let mut results = Vec::new();
    let want = |name: &str| estimator == "all" || estimator == name;
    if !["all", "ols", "co", "pw"].contains(&estimator) {
        return Err(Error::InvalidConfig(format!(
            "unknown estimator `{estimator}` (all, ols, co, pw)"
        )));
    }
    if want("ols") {
        let beta = ols_fit(&x, &y)?;
        results.push(EstimateOut {
            estimator: "ols".into(),
            beta,
            rho: 0.0,
            iterations: 0,
        });
    }
    if want("co") {
        let fit = cochrane_orcutt(&x, &y, max_iters)?;
        results.push(EstimateOut {
            estimator: "co".into(),
            beta: fit.beta,
            rho: fit.rho,
            iterations: fit.iterations,
        });
    }
    if want("pw") {
        let fit = prais_winsten(&x, &y, max_iters)?;
        results.push(EstimateOut {
            estimator: "pw".into(),
            beta: fit.beta,
            rho: fit.rho,
            iterations: fit.iterations,
        });
    }
    for r in &results {
        println!(
            "{}: beta={:?} rho={:.4} iterations={}",
            r.estimator, r.beta, r.rho, r.iterations
        );
    }
    #[derive(Serialize)]
    struct ClassicalOut<'a> {
        effective_config: &'a Effective,
        estimates: &'a [EstimateOut],
    }
    write_out(
        &eff.out_dir,
        "classical.json",
        &serde_json::to_string_pretty(&ClassicalOut {
            effective_config: eff,
            estimates: &results,
        })?,
    )?;
    Ok(())
}

/// Input-shaped problems exit 2; runtime failures exit 1.
fn classify(err: &Error) -> u8 {
    match err {
        Error::EmptyInput(_)
        | Error::Parse { .. }
        | Error::RaggedRow { .. }
        | Error::NonFiniteValue { .. }
        | Error::DuplicateColumn(_)
        | Error::InvalidSplit(_)
        | Error::SplitTooSmall { .. }
        | Error::FrameTooShort { .. }
        | Error::InvalidSpec(_)
        | Error::RhoOutOfRange(_)
        | Error::TooFewSamples { .. }
        | Error::LengthMismatch { .. }
        | Error::InvalidConfig(_)
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
