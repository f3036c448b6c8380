//! Differentiable model zoo: linear regressor, residual MLP, and the compact
//! windowed forecaster, plus checkpoint serialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    MlpRegressor,
    WindowForecaster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    /// Layers between residual connections.
    pub residual_every: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Linear,
            input_dim,
            output_dim,
            hidden_dim: 0,
            n_layers: 1,
            residual_every: 0,
        }
    }

    /// Six layers with a residual connection every two layers by default.
    pub fn mlp_regressor(input_dim: usize, hidden_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::MlpRegressor,
            input_dim,
            output_dim: 1,
            hidden_dim,
            n_layers: 6,
            residual_every: 2,
        }
    }

    /// Flattened-window residual MLP forecasting all N series one step ahead.
    pub fn window_forecaster(window: usize, n_series: usize, hidden_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::WindowForecaster,
            input_dim: window * n_series,
            output_dim: n_series,
            hidden_dim,
            n_layers: 6,
            residual_every: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidSpec("dims must be >= 1".into()));
        }
        match self.kind {
            ModelKind::Linear => Ok(()),
            _ => {
                if self.hidden_dim == 0 {
                    Err(Error::InvalidSpec("hidden_dim must be >= 1".into()))
                } else if self.n_layers < 3 {
                    Err(Error::InvalidSpec("deep models need >= 3 layers".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// (input, output) dims of each fully-connected layer.
    ///
    /// Deep models project on the first layer, map to the output dim on the
    /// next-to-last, and finish with a square output-sized layer so the skip
    /// pattern below stays identity-shaped throughout.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::Linear => vec![(self.input_dim, self.output_dim)],
            _ => {
                let mut dims = Vec::with_capacity(self.n_layers);
                dims.push((self.input_dim, self.hidden_dim));
                for _ in 2..=self.n_layers - 2 {
                    dims.push((self.hidden_dim, self.hidden_dim));
                }
                dims.push((self.hidden_dim, self.output_dim));
                dims.push((self.output_dim, self.output_dim));
                dims
            }
        }
    }
}

/// A built model: spec plus handles into a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct ModelGraph {
    spec: ModelSpec,
    layers: Vec<LayerHandles>,
}

#[derive(Debug, Clone, Copy)]
struct LayerHandles {
    weight: usize,
    bias: usize,
}

impl ModelGraph {
    /// Initializes parameters uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    pub fn build(spec: ModelSpec, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (li, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Tensor::new(
                fan_in,
                fan_out,
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            );
            let b = Tensor::row((0..fan_out).map(|_| rng.random_range(-bound..bound)).collect());
            let weight = store.push(format!("layer{}.weight", li + 1), w, ParamGroup::Model);
            let bias = store.push(format!("layer{}.bias", li + 1), b, ParamGroup::Model);
            layers.push(LayerHandles { weight, bias });
        }
        Ok(ModelGraph { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// 1-based layer indices that receive an identity skip connection.
    pub fn residual_layers(&self) -> Vec<usize> {
        if self.spec.kind == ModelKind::Linear || self.spec.residual_every == 0 {
            return Vec::new();
        }
        let dims = self.spec.layer_dims();
        (1..=self.spec.n_layers)
            .filter(|k| k % self.spec.residual_every == 0 && dims[k - 1].0 == dims[k - 1].1)
            .collect()
    }

    /// Records the forward pass for a batch (rows = samples).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, input: Var) -> Var {
        assert_eq!(
            tape.value(input).cols(),
            self.spec.input_dim,
            "input dim mismatch"
        );
        if self.spec.kind == ModelKind::Linear {
            let h = self.affine(tape, store, input, 0);
            return h;
        }
        let residual_at = self.residual_layers();
        let n = self.layers.len();
        let mut act = input;
        for (li, _) in self.layers.iter().enumerate() {
            let layer_no = li + 1;
            let z = self.affine(tape, store, act, li);
            // no activation once the width has dropped to the output dim: a
            // rectifier on that scalar path can die for every sample at once
            let mut out = if layer_no + 1 < n { tape.relu(z) } else { z };
            if residual_at.contains(&layer_no) {
                out = tape.add(out, act);
            }
            act = out;
        }
        act
    }

    fn affine(&self, tape: &mut Tape, store: &ParamStore, x: Var, li: usize) -> Var {
        let w = tape.param(store, self.layers[li].weight);
        let b = tape.param(store, self.layers[li].bias);
        let xw = tape.matmul(x, w);
        tape.add(xw, b)
    }

    /// Forward pass outside training; no gradients kept.
    pub fn predict(&self, store: &ParamStore, input: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let y = self.forward(&mut tape, store, x);
        tape.value(y).clone()
    }

    pub fn param_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

/// Flat, versioned checkpoint of spec + parameters + build seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub seed: u64,
    pub params: Vec<CheckpointParam>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn capture(model: &ModelGraph, store: &ParamStore, seed: u64) -> Self {
        let params = store
            .iter()
            .map(|p| CheckpointParam {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            spec: model.spec().clone(),
            seed,
            params,
        }
    }
}
