//! Autocorrelation-aware training for differentiable time-series models.
//!
//! The library learns a first-order error autocorrelation coefficient jointly
//! with model parameters via a tanh reparameterization, and also provides the
//! classical linear counterparts (Cochrane-Orcutt, Prais-Winsten), residual
//! diagnostics, and a Monte Carlo benchmark harness.

pub mod adjust;
pub mod autodiff;
pub mod bench;
pub mod classical;
pub mod error;
pub mod method;
pub mod models;
pub mod optim;
pub mod seeds;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
