//! Monte Carlo estimators and statistical checks of the asymptotic laws.
//!
//! Every experiment splits its paths into equal replication batches. Path `i`
//! of batch `b` has global index `b * per_batch + i`, and batches are reduced
//! in index order, so results do not depend on how many threads ran them.

pub mod clt;
pub mod conditional;
pub mod ensemble;
pub mod extinction;
pub mod invariance;
pub mod pathwise;
pub mod report;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian_limit::GaussianError;
use crate::offspring::OffspringDistribution;
use crate::process::ProcessError;

pub use ensemble::BatchPlan;
pub use report::{Entry, ExperimentReport, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no tau group holds {min_bin} paths (largest has {largest})")]
    InsufficientBinMass { min_bin: usize, largest: usize },
    #[error("no path lands in {window}; nearest populated: {nearest}")]
    EmptyConditioningSet { window: String, nearest: String },
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Acceptance bands and multipliers. None of them are hard-coded elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Estimates within this many standard errors of the target pass.
    pub se_multiplier: f64,
    /// Relative band for `median(τ_K / log K)` against `c`.
    pub median_rel_tol: f64,
    /// Band for the conditional-moment ratios given a population size.
    pub ratio_band: [f64; 2],
    /// Band for the ratios conditional on the extinction time.
    pub tau_ratio_band: [f64; 2],
    /// Bound on `|A - B| / |A|` in the invariance check.
    pub invariance_rel_tol: f64,
    /// Required separation, in standard errors, between the covariance modes.
    pub separation_min_se: f64,
    /// Smallest acceptable goodness-of-fit p-value.
    pub p_value_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            se_multiplier: 4.0,
            median_rel_tol: 0.05,
            ratio_band: [0.85, 1.15],
            tau_ratio_band: [0.8, 1.25],
            invariance_rel_tol: 0.1,
            separation_min_se: 5.0,
            p_value_min: 0.001,
        }
    }
}

/// Settings shared by all Monte Carlo experiments.
#[derive(Debug, Clone)]
pub struct Common {
    pub dist: OffspringDistribution,
    pub plan: BatchPlan,
    pub seed: u64,
    /// Extinction cap as a multiple of `⌈log K / (-log 𝔪)⌉`.
    pub cap_multiplier: f64,
    pub tolerances: Tolerances,
}

impl Common {
    pub fn m(&self) -> f64 {
        self.dist.mean()
    }

    pub fn cap(&self, k: u64) -> u32 {
        crate::process::default_extinction_cap(k, self.m(), self.cap_multiplier)
    }

    /// The randomness source for the sub-run at population `k`.
    pub fn source(&self, k: u64) -> crate::rng::RandomnessSource {
        crate::rng::RandomnessSource::new(self.seed).derive(k)
    }

    pub(crate) fn require_subcritical(&self) -> Result<f64, EstimatorError> {
        let m = self.m();
        if !(m > 0.0 && m < 1.0) {
            return Err(EstimatorError::Config(format!("offspring mean {m} must lie in (0, 1)")));
        }
        Ok(m)
    }
}

/// `K=<k>` label used in statistic names.
pub(crate) fn klabel(k: u64) -> String {
    format!("K={k}")
}

/// True when the sequence never increases.
pub(crate) fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

/// Largest increase between consecutive values, 0 for a nonincreasing sequence.
pub(crate) fn largest_increase(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Adds a trend entry asserting `|x - target|` is nonincreasing across `ks`.
pub(crate) fn push_trend(report: &mut ExperimentReport, name: &str, deviations: &[f64]) {
    if deviations.len() < 2 {
        return;
    }
    report.push(
        Entry::new(name, largest_increase(deviations))
            .target(0.0)
            .verdict(Verdict::from_bool(nonincreasing(deviations))),
    );
}
