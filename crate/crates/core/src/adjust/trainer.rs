//! Objective construction and the mini-batch training engine shared by the
//! forecasting pipeline and the regression benchmark.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adjust::{AdjustmentMode, RhoParam, TrainConfig};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::ModelGraph;
use crate::optim::AdamState;
use crate::seeds;
use crate::stats::residual_autocorrelation;

/// Aligned supervised rows: each sample carries its input, the elementwise
/// lag of that input, the target, and the lagged target. Lags that do not
/// exist in the data (the earliest sample) are pre-filled by the caller,
/// typically with the training mean.
#[derive(Debug, Clone)]
pub struct SupervisedData {
    pub x: Tensor,
    pub x_prev: Tensor,
    pub y: Tensor,
    pub y_prev: Tensor,
}

impl SupervisedData {
    pub fn new(x: Tensor, x_prev: Tensor, y: Tensor, y_prev: Tensor) -> Result<Self> {
        let s = x.rows();
        if x_prev.rows() != s || y.rows() != s || y_prev.rows() != s {
            return Err(Error::ShapeMismatch("sample counts differ".into()));
        }
        if x_prev.cols() != x.cols() || y_prev.cols() != y.cols() {
            return Err(Error::ShapeMismatch("lag widths differ".into()));
        }
        if s == 0 {
            return Err(Error::EmptyInput("no supervised samples".into()));
        }
        Ok(SupervisedData { x, x_prev, y, y_prev })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.cols()
    }

    fn gather(&self, idx: &[usize]) -> SupervisedData {
        let pick = |t: &Tensor| {
            let mut data = Vec::with_capacity(idx.len() * t.cols());
            for &i in idx {
                data.extend_from_slice(t.row_slice(i));
            }
            Tensor::new(idx.len(), t.cols(), data)
        };
        SupervisedData {
            x: pick(&self.x),
            x_prev: pick(&self.x_prev),
            y: pick(&self.y),
            y_prev: pick(&self.y_prev),
        }
    }
}

/// Which loss the engine minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Single forward pass on quasi-differenced input against the
    /// quasi-differenced target; the coefficient may be trainable.
    Joint,
    /// Two forward passes, `f(x) - rho (.) f(x_prev)` against the
    /// quasi-differenced target, with a frozen coefficient. The second
    /// pass is skipped entirely when the coefficient is identically 0.
    TwoModel,
}

/// Everything a caller needs after an engine run. The parameter store is
/// left at the best-validation checkpoint.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub train_curve: Vec<f64>,
    pub valid_curve: Vec<f64>,
    /// Effective coefficient at the restored checkpoint.
    pub rho: Vec<f64>,
    /// Coefficient values at the end of each epoch (trainable runs only).
    pub rho_trace: Vec<Vec<f64>>,
}

/// Broadcasts a 1 x L coefficient against a width-`dim` operand: used
/// directly when L is 1 or `dim`, tiled otherwise (windowed inputs store
/// W repeats of the N series, so L must divide `dim`).
fn rho_for_width(tape: &mut Tape, rho_var: Var, rho_len: usize, dim: usize) -> Var {
    if rho_len == 1 || rho_len == dim {
        rho_var
    } else {
        tape.tile(rho_var, dim / rho_len)
    }
}

fn check_rho_width(rho_len: usize, dim: usize, what: &str) -> Result<()> {
    if rho_len != 1 && dim % rho_len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "rho length {rho_len} does not divide {what} width {dim}"
        )));
    }
    Ok(())
}

/// Records the full loss graph for one batch and returns the scalar loss.
fn record_loss(
    tape: &mut Tape,
    store: &ParamStore,
    model: &ModelGraph,
    rho: &RhoParam,
    mode: AdjustmentMode,
    objective: Objective,
    batch: &SupervisedData,
) -> Var {
    let vx = tape.constant(batch.x.clone());
    let vy = tape.constant(batch.y.clone());
    match objective {
        Objective::Joint => {
            let needs_rho = mode.transforms_input() || mode.transforms_output();
            let rho_var = if needs_rho {
                Some(rho.on_tape(tape, store))
            } else {
                None
            };
            let input = if mode.transforms_input() {
                let vxp = tape.constant(batch.x_prev.clone());
                let r = rho_for_width(tape, rho_var.unwrap(), rho.len(), batch.input_dim());
                let prod = tape.mul(r, vxp);
                tape.sub(vx, prod)
            } else {
                vx
            };
            let pred = model.forward(tape, store, input);
            let target = if mode.transforms_output() {
                let vyp = tape.constant(batch.y_prev.clone());
                let r = rho_for_width(tape, rho_var.unwrap(), rho.len(), batch.output_dim());
                let prod = tape.mul(r, vyp);
                tape.sub(vy, prod)
            } else {
                vy
            };
            let diff = tape.sub(pred, target);
            let sq = tape.square(diff);
            tape.mean(sq)
        }
        Objective::TwoModel => {
            let values = rho.values(store);
            let pred_now = model.forward(tape, store, vx);
            let diff = if values.iter().all(|v| *v == 0.0) {
                tape.sub(pred_now, vy)
            } else {
                let rho_var = rho.on_tape(tape, store);
                let r = rho_for_width(tape, rho_var, rho.len(), batch.output_dim());
                let vxp = tape.constant(batch.x_prev.clone());
                let vyp = tape.constant(batch.y_prev.clone());
                let pred_lag = model.forward(tape, store, vxp);
                let scaled_lag = tape.mul(r, pred_lag);
                let pred = tape.sub(pred_now, scaled_lag);
                let scaled_yp = tape.mul(r, vyp);
                let target = tape.sub(vy, scaled_yp);
                tape.sub(pred, target)
            };
            let sq = tape.square(diff);
            tape.mean(sq)
        }
    }
}

/// Loss of the current parameters on `data`, without touching gradients.
pub fn evaluate_loss(
    model: &ModelGraph,
    store: &ParamStore,
    rho: &RhoParam,
    mode: AdjustmentMode,
    objective: Objective,
    data: &SupervisedData,
) -> f64 {
    let mut tape = Tape::new();
    let loss = record_loss(&mut tape, store, model, rho, mode, objective, data);
    tape.value(loss).item()
}

/// Mini-batch training with Adam, per-epoch shuffling, best-validation
/// checkpointing, and optional early stopping.
///
/// Batches never mix epochs; when the batch size covers the whole training
/// set, samples are visited in their natural order (fully deterministic
/// full-batch descent). Validation uses the same transformed objective that
/// is trained.
pub fn fit_supervised(
    model: &ModelGraph,
    store: &mut ParamStore,
    rho: &RhoParam,
    objective: Objective,
    train: &SupervisedData,
    valid: &SupervisedData,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if mode_needs_rho(cfg.mode, objective) {
        check_rho_width(rho.len(), train.input_dim(), "input")?;
        check_rho_width(rho.len(), train.output_dim(), "output")?;
    }
    let s = train.len();
    let mut adam = AdamState::new(store);
    let mut indices: Vec<usize> = (0..s).collect();
    let full_batch = cfg.batch_size >= s;

    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut valid_curve = Vec::with_capacity(cfg.epochs);
    let mut rho_trace = Vec::new();
    let mut best_valid = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_snapshot = store.snapshot();
    let mut since_best = 0usize;
    let mut epochs_run = 0;

    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        if !full_batch {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[cfg.seed, epoch as u64, 1]));
            indices.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in indices.chunks(cfg.batch_size.min(s)) {
            let batch = train.gather(chunk);
            store.zero_grads();
            let mut tape = Tape::new();
            let loss = record_loss(&mut tape, store, model, rho, cfg.mode, objective, &batch);
            tape.backward(loss, store)
                .map_err(|_| Error::TrainDiverged { epoch })?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::TrainDiverged { epoch });
            }
            loss_sum += lv * chunk.len() as f64;
            adam.step(store, cfg.lr_model, cfg.lr_rho);
        }
        train_curve.push(loss_sum / s as f64);

        let vl = evaluate_loss(model, store, rho, cfg.mode, objective, valid);
        if !vl.is_finite() {
            return Err(Error::TrainDiverged { epoch });
        }
        valid_curve.push(vl);
        if rho.is_trainable() {
            rho_trace.push(rho.values(store));
        }

        if epoch >= cfg.skip_first_epochs && vl < best_valid {
            best_valid = vl;
            best_epoch = epoch;
            best_snapshot = store.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if let Some(p) = cfg.early_stop_patience {
                if since_best >= p {
                    break;
                }
            }
        }
    }

    store.restore(&best_snapshot);
    Ok(TrainOutcome {
        epochs_run,
        best_epoch,
        best_valid_loss: best_valid,
        train_curve,
        valid_curve,
        rho: rho.values(store),
        rho_trace,
    })
}

fn mode_needs_rho(mode: AdjustmentMode, objective: Objective) -> bool {
    objective == Objective::TwoModel || mode.transforms_input() || mode.transforms_output()
}

/// Outcome of the alternating procedure.
#[derive(Debug, Clone)]
pub struct MpwOutcome {
    pub rho: Vec<f64>,
    pub outer_iterations: usize,
    pub last: TrainOutcome,
}

pub const MPW_OUTER_TOL: f64 = 1e-3;
pub const MPW_MAX_OUTER: usize = 10;

/// Estimates the coefficient from raw residuals `y - f(x)` on the training
/// split: per-series lag-1 regression, averaged when the coefficient is
/// shared. Clamped away from +-1 like the classical estimators.
fn rho_from_residuals(
    model: &ModelGraph,
    store: &ParamStore,
    data: &SupervisedData,
    rho_len: usize,
) -> Result<Vec<f64>> {
    let pred = model.predict(store, &data.x);
    let dout = data.output_dim();
    let mut per_series = Vec::with_capacity(dout);
    for c in 0..dout {
        let e: Vec<f64> = (0..data.len())
            .map(|r| data.y.get(r, c) - pred.get(r, c))
            .collect();
        per_series.push(residual_autocorrelation(&e)?.clamp(-0.999, 0.999));
    }
    if rho_len == 1 {
        Ok(vec![per_series.iter().sum::<f64>() / dout as f64])
    } else if rho_len == dout {
        Ok(per_series)
    } else {
        Err(Error::ShapeMismatch(format!(
            "rho length {rho_len} vs {dout} output series"
        )))
    }
}

/// Alternating baseline: train the model with a frozen coefficient, then
/// re-estimate the coefficient from raw residuals, until the update is
/// smaller than `tol` or `max_outer` iterations pass; the model is retrained
/// once more at the final coefficient. With a linear model and
/// `max_outer = 1` this is exactly the single-pass Cochrane-Orcutt recipe.
pub fn mpw_fit(
    model: &ModelGraph,
    store: &mut ParamStore,
    train: &SupervisedData,
    valid: &SupervisedData,
    cfg: &TrainConfig,
    rho_len: usize,
    max_outer: usize,
    tol: f64,
) -> Result<MpwOutcome> {
    let mut rho_vals = vec![0.0; rho_len.max(1)];
    let mut outer_iterations = 0;
    for it in 0..max_outer.max(1) {
        outer_iterations = it + 1;
        let rho = RhoParam::frozen(rho_vals.clone())?;
        let mut inner = cfg.clone();
        inner.seed = seeds::mix(&[cfg.seed, it as u64, 2]);
        fit_supervised(model, store, &rho, Objective::TwoModel, train, valid, &inner)?;
        let new_vals = rho_from_residuals(model, store, train, rho_vals.len())?;
        let delta = new_vals
            .iter()
            .zip(&rho_vals)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        rho_vals = new_vals;
        if delta < tol {
            break;
        }
    }
    let rho = RhoParam::frozen(rho_vals.clone())?;
    let mut inner = cfg.clone();
    inner.seed = seeds::mix(&[cfg.seed, outer_iterations as u64, 3]);
    let last = fit_supervised(model, store, &rho, Objective::TwoModel, train, valid, &inner)?;
    Ok(MpwOutcome {
        rho: rho_vals,
        outer_iterations,
        last,
    })
}

/// Quasi-differenced inputs as a plain tensor (prediction-time counterpart
/// of the input side of the joint objective).
pub fn transformed_inputs(data: &SupervisedData, rho: &[f64], mode: AdjustmentMode) -> Tensor {
    if !mode.transforms_input() {
        return data.x.clone();
    }
    let din = data.input_dim();
    let mut out = Vec::with_capacity(data.len() * din);
    for r in 0..data.len() {
        let xr = data.x.row_slice(r);
        let xp = data.x_prev.row_slice(r);
        for c in 0..din {
            let rc = if rho.len() == 1 { rho[0] } else { rho[c % rho.len()] };
            out.push(xr[c] - rc * xp[c]);
        }
    }
    Tensor::new(data.len(), din, out)
}
