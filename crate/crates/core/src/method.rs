//! Strategy registry: the unadjusted, alternating, and jointly-adjusted
//! training methods behind one trait object, selectable by name.

use crate::adjust::trainer::MPW_MAX_OUTER;
use crate::adjust::{joint_train, naive_mpw_train, AdjustmentMode, FitReport, TrainConfig};
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::series::SeriesFrame;

/// A named way of fitting a forecaster to a train/valid/test triple.
pub trait TrainingStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// One-line human description for `--help` style listings.
    fn describe(&self) -> &'static str;

    /// Fits on the splits and reports test metrics. Implementations may
    /// override the adjustment mode in `cfg` when it defines the method.
    fn fit(
        &self,
        train: &SeriesFrame,
        valid: &SeriesFrame,
        test: &SeriesFrame,
        spec: &ModelSpec,
        cfg: &TrainConfig,
    ) -> Result<FitReport>;
}

/// Plain training: no transformation, coefficient pinned at zero.
struct Unadjusted;

impl TrainingStrategy for Unadjusted {
    fn name(&self) -> &'static str {
        "wo"
    }

    fn describe(&self) -> &'static str {
        "standard training without autocorrelation adjustment"
    }

    fn fit(
        &self,
        train: &SeriesFrame,
        valid: &SeriesFrame,
        test: &SeriesFrame,
        spec: &ModelSpec,
        cfg: &TrainConfig,
    ) -> Result<FitReport> {
        let mut cfg = cfg.clone();
        cfg.mode = AdjustmentMode::None;
        cfg.freeze_rho = None;
        joint_train(train, valid, test, spec, &cfg)
    }
}

/// Alternating baseline: coordinate descent between the model and the
/// coefficient, re-estimated from residuals each outer iteration.
struct Alternating;

impl TrainingStrategy for Alternating {
    fn name(&self) -> &'static str {
        "mpw"
    }

    fn describe(&self) -> &'static str {
        "alternating baseline: retrain at a frozen coefficient, then re-estimate it from residuals"
    }

    fn fit(
        &self,
        train: &SeriesFrame,
        valid: &SeriesFrame,
        test: &SeriesFrame,
        spec: &ModelSpec,
        cfg: &TrainConfig,
    ) -> Result<FitReport> {
        let mut cfg = cfg.clone();
        if cfg.mode == AdjustmentMode::None {
            cfg.mode = AdjustmentMode::Both;
        }
        naive_mpw_train(train, valid, test, spec, &cfg, MPW_MAX_OUTER)
    }
}

/// The joint method: coefficient learned by gradient descent together with
/// the model parameters on the quasi-differenced objective.
struct Joint;

impl TrainingStrategy for Joint {
    fn name(&self) -> &'static str {
        "w"
    }

    fn describe(&self) -> &'static str {
        "joint training of the model and a tanh-parameterized autocorrelation coefficient"
    }

    fn fit(
        &self,
        train: &SeriesFrame,
        valid: &SeriesFrame,
        test: &SeriesFrame,
        spec: &ModelSpec,
        cfg: &TrainConfig,
    ) -> Result<FitReport> {
        let mut cfg = cfg.clone();
        if cfg.mode == AdjustmentMode::None {
            cfg.mode = AdjustmentMode::Both;
        }
        joint_train(train, valid, test, spec, &cfg)
    }
}

static STRATEGIES: [&dyn TrainingStrategy; 3] = [&Unadjusted, &Alternating, &Joint];

/// All registered strategies in a stable order.
pub fn registry() -> &'static [&'static dyn TrainingStrategy] {
    &STRATEGIES
}

/// Looks a strategy up by its registered name.
pub fn strategy(name: &str) -> Result<&'static dyn TrainingStrategy> {
    STRATEGIES
        .iter()
        .copied()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = STRATEGIES.iter().map(|s| s.name()).collect();
            Error::InvalidConfig(format!(
                "unknown method `{name}` (known: {})",
                known.join(", ")
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_complete() {
        let names: Vec<&str> = registry().iter().map(|s| s.name()).collect();
        assert_eq!(names, vec!["wo", "mpw", "w"]);
        for n in &names {
            assert_eq!(strategy(n).unwrap().name(), *n);
            assert!(!strategy(n).unwrap().describe().is_empty());
        }
    }

    #[test]
    fn unknown_name_is_rejected_with_listing() {
        let msg = match strategy("nope") {
            Ok(_) => panic!("unknown name accepted"),
            Err(e) => e.to_string(),
        };
        assert!(msg.contains("nope") && msg.contains("wo") && msg.contains("mpw"));
    }
}
