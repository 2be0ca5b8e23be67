//! Estimators for per-step error, regret, error accumulation and their
//! uncertainty.
//!
//! Step-`t` terms always average over the sequences still active at `t`
//! (not yet past eos); a step that nobody reaches ends the curve.

mod accumulation;
mod eps;
mod identity;
mod regret;
pub mod report;
mod stats;

pub use accumulation::{acc_err, bound_diagnostic, excess_acc_err, BoundDiagnostic, BoundPosition};
pub use eps::{estimate_eps, estimate_eps_after, PerStepErrorSeries};
pub use identity::{perplexity_identity_check, IdentityCheck};
pub use regret::{estimate_regret, run_rollouts, RegretCurve};
pub use report::{ExposureReport, ReportMetadata, ReportRow};
pub use stats::{pearson, sample_std, std_error};

use crate::lm::ProbabilityFloor;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub seed: u64,
    pub workers: usize,
    pub bootstrap_resamples: usize,
    pub floor: ProbabilityFloor,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            floor: ProbabilityFloor::off(),
        }
    }
}

impl EstimatorOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}
