//! Quasi-differencing adjustment for first-order autocorrelated errors:
//! the tanh-parameterized coefficient, series transforms, the joint training
//! objective, the naive alternating baseline, and fixed-coefficient grid
//! search.

pub mod forecast;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::series::Preceding;

pub use forecast::{grid_search_rho, joint_train, naive_mpw_train, FitReport, GridSearchResult};
pub use trainer::{
    fit_supervised, mpw_fit, transformed_inputs, Objective, SupervisedData, TrainOutcome,
};

/// Series count at or above which the coefficient becomes a per-series
/// vector instead of a scalar.
pub const VECTOR_RHO_THRESHOLD: usize = 300;

/// Coefficient length under the automatic dimensionality rule.
pub fn auto_rho_len(n_series: usize) -> usize {
    if n_series >= VECTOR_RHO_THRESHOLD {
        n_series
    } else {
        1
    }
}

/// The autocorrelation coefficient of length 1 (shared) or N (per-series).
///
/// Trainable form stores an unconstrained raw vector; the effective
/// coefficient is `tanh(raw)` elementwise, so it always stays in (-1, 1).
/// The raw vector initializes at 0, making the unadjusted objective the
/// training-start point. Frozen form is a plain constant kept out of the
/// parameter store entirely: no gradient flows and the optimizer state is
/// identical to a run without any coefficient.
#[derive(Debug, Clone)]
pub enum RhoParam {
    Trainable { raw_idx: usize, len: usize },
    Frozen(Vec<f64>),
}

impl RhoParam {
    pub fn trainable(store: &mut ParamStore, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidSpec("rho length must be >= 1".into()));
        }
        let raw_idx = store.push("rho.raw", Tensor::zeros(1, len), ParamGroup::Rho);
        Ok(RhoParam::Trainable { raw_idx, len })
    }

    pub fn frozen(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpec("rho length must be >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("frozen rho must be finite".into()));
        }
        Ok(RhoParam::Frozen(values))
    }

    pub fn len(&self) -> usize {
        match self {
            RhoParam::Trainable { len, .. } => *len,
            RhoParam::Frozen(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, RhoParam::Trainable { .. })
    }

    /// Effective coefficient values.
    pub fn values(&self, store: &ParamStore) -> Vec<f64> {
        match self {
            RhoParam::Trainable { raw_idx, .. } => store
                .get(*raw_idx)
                .value
                .data()
                .iter()
                .map(|r| r.tanh())
                .collect(),
            RhoParam::Frozen(v) => v.clone(),
        }
    }

    /// Records the effective coefficient on the tape (1 x len).
    pub fn on_tape(&self, tape: &mut Tape, store: &ParamStore) -> Var {
        match self {
            RhoParam::Trainable { raw_idx, .. } => {
                let raw = tape.param(store, *raw_idx);
                tape.tanh(raw)
            }
            RhoParam::Frozen(v) => tape.constant(Tensor::row(v.clone())),
        }
    }
}

/// Which sides of the supervised pair get quasi-differenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentMode {
    /// No transform anywhere; equivalent to the coefficient frozen at 0.
    None,
    InputOnly,
    OutputOnly,
    #[default]
    Both,
}

impl AdjustmentMode {
    pub fn transforms_input(self) -> bool {
        matches!(self, AdjustmentMode::InputOnly | AdjustmentMode::Both)
    }

    pub fn transforms_output(self) -> bool {
        matches!(self, AdjustmentMode::OutputOnly | AdjustmentMode::Both)
    }
}

/// Training protocol settings for the forecasting pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Early-stopping patience in epochs; `None` disables early stopping
    /// (best-validation selection still applies).
    pub early_stop_patience: Option<usize>,
    pub batch_size: usize,
    pub window: usize,
    pub lr_model: f64,
    pub lr_rho: f64,
    pub seed: u64,
    pub mode: AdjustmentMode,
    /// Coefficient length: explicit, or `None` for the automatic rule
    /// (scalar below [`VECTOR_RHO_THRESHOLD`] series, per-series at or above).
    pub rho_dim: Option<usize>,
    /// Freeze the coefficient at this value instead of training it.
    pub freeze_rho: Option<f64>,
    /// Ignore this many leading epochs when selecting the best-validation
    /// checkpoint.
    pub skip_first_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 750,
            early_stop_patience: Some(25),
            batch_size: 64,
            window: 60,
            lr_model: 3e-3,
            lr_rho: 1e-2,
            seed: 0,
            mode: AdjustmentMode::Both,
            rho_dim: None,
            freeze_rho: None,
            skip_first_epochs: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.window == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch size, and window must be positive".into(),
            ));
        }
        if let Some(p) = self.early_stop_patience {
            if p == 0 || p > self.epochs {
                return Err(Error::InvalidConfig(format!(
                    "patience {p} must be in 1..=epochs"
                )));
            }
        }
        if !(self.lr_model > 0.0 && self.lr_rho > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.rho_dim == Some(0) {
            return Err(Error::InvalidConfig("rho_dim must be >= 1".into()));
        }
        Ok(())
    }
}

fn rho_at(rho: &[f64], series: usize) -> f64 {
    if rho.len() == 1 {
        rho[0]
    } else {
        rho[series]
    }
}

/// Quasi-differences a W x N history block (rows most recent first).
///
/// Output row j is `X_{t-j} - rho (.) X_{t-j-1}`; the missing oldest lag
/// `X_{t-W-1}` comes from `preceding`, or from the training mean vector
/// when the slot is mean-filled.
pub fn transform_window(
    history: &Tensor,
    preceding: &Preceding,
    rho: &[f64],
    mean: &[f64],
) -> Tensor {
    let (w, n) = (history.rows(), history.cols());
    assert!(rho.len() == 1 || rho.len() == n, "rho broadcast mismatch");
    assert_eq!(mean.len(), n);
    let oldest: &[f64] = match preceding {
        Preceding::Value(v) => v,
        Preceding::MeanFill => mean,
    };
    let mut out = Vec::with_capacity(w * n);
    for j in 0..w {
        let cur = history.row_slice(j);
        let lag = if j + 1 < w {
            history.row_slice(j + 1)
        } else {
            oldest
        };
        for c in 0..n {
            out.push(cur[c] - rho_at(rho, c) * lag[c]);
        }
    }
    Tensor::new(w, n, out)
}

/// `x_t - rho (.) x_prev`.
pub fn transform_target(x_t: &[f64], x_prev: &[f64], rho: &[f64]) -> Vec<f64> {
    assert_eq!(x_t.len(), x_prev.len());
    assert!(rho.len() == 1 || rho.len() == x_t.len());
    x_t.iter()
        .zip(x_prev)
        .enumerate()
        .map(|(c, (a, b))| a - rho_at(rho, c) * b)
        .collect()
}

/// Inverse of [`transform_target`]: maps a model output on the transformed
/// scale back to original units, `X̂_t = f(..) + rho (.) X_{t-1}`.
pub fn recover_forecast(model_output: &[f64], x_prev: &[f64], rho: &[f64]) -> Vec<f64> {
    assert_eq!(model_output.len(), x_prev.len());
    assert!(rho.len() == 1 || rho.len() == model_output.len());
    model_output
        .iter()
        .zip(x_prev)
        .enumerate()
        .map(|(c, (a, b))| a + rho_at(rho, c) * b)
        .collect()
}

/// The published fixed-coefficient search grid: +-1.0, +-0.9, and
/// -0.75..=0.75 in steps of 0.15.
pub fn default_rho_grid() -> Vec<f64> {
    let mut grid = vec![-1.0, -0.9];
    for i in 0..11 {
        grid.push(-0.75 + 0.15 * i as f64);
    }
    grid.push(0.9);
    grid.push(1.0);
    grid
}
