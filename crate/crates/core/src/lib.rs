//! Subcritical Galton-Watson branching processes with a large initial
//! population: simulation, the truncated and shifted auxiliary processes on
//! shared randomness, their stopping times and Gaussian limits, and Monte Carlo
//! estimators for the asymptotic laws of population size before extinction.

pub mod estimators;
pub mod gaussian_limit;
pub mod harness;
pub mod offspring;
pub mod process;
pub mod rng;
pub mod stopping;

pub use estimators::{Common, Entry, EstimatorError, ExperimentReport, Tolerances, Verdict};
pub use gaussian_limit::{CovarianceMode, GaussianError, ThetaCovariance};
pub use harness::{run, validate, Diagnostic, ExperimentConfig, ExperimentKind, HarnessError, RunOutput, Severity};
pub use offspring::{DistributionError, DistributionSpec, OffspringDistribution, SumMode};
pub use process::{
    simulate_coupled, simulate_path, CoupledPaths, LevelPaths, PathRecord, ProcessError, Sampling, StopRule,
};
pub use rng::{DrawHandle, RandomnessSource, Stream};
pub use stopping::{extinction_time, hitting_time, LimitOracle, StoppingError};
