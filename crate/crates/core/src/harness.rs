//! Experiment configuration, validation, dispatch and persistence.
//!
//! A run is fully determined by its configuration: the report carries a
//! snapshot of every setting that can influence results (the worker count,
//! output directory and plot flag are left out), and the run directory is named
//! after a hash of that snapshot.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimators::clt::clt_covariance_check;
use crate::estimators::conditional::{conditional_moment_check, conditional_on_tau_check, ConditionalParams};
use crate::estimators::extinction::extinction_scaling;
use crate::estimators::invariance::{invariance_check, InvarianceParams};
use crate::estimators::pathwise::{coupled_check, simulate_summary, CoupledParams};
use crate::estimators::{BatchPlan, Common, Entry, EstimatorError, ExperimentReport, Tolerances, Verdict};
use crate::gaussian_limit::{matrix_csv, min_eigenvalue, CovarianceMode, ThetaCovariance, PSD_TOLERANCE};
use crate::offspring::{DistributionSpec, OffspringDistribution};
use crate::process::{simulate_coupled, simulate_path, Sampling, StopRule, TrajectoryWriter};
use crate::stopping::{LimitOracle, BOUNDARY_GAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Coupled,
    ExtinctionScaling,
    CltCheck,
    ConditionalMoments,
    ConditionalOnTau,
    Invariance,
    GaussianCov,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Simulate,
        ExperimentKind::Coupled,
        ExperimentKind::ExtinctionScaling,
        ExperimentKind::CltCheck,
        ExperimentKind::ConditionalMoments,
        ExperimentKind::ConditionalOnTau,
        ExperimentKind::Invariance,
        ExperimentKind::GaussianCov,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Coupled => "coupled",
            ExperimentKind::ExtinctionScaling => "extinction-scaling",
            ExperimentKind::CltCheck => "clt-check",
            ExperimentKind::ConditionalMoments => "conditional-moments",
            ExperimentKind::ConditionalOnTau => "conditional-on-tau",
            ExperimentKind::Invariance => "invariance",
            ExperimentKind::GaussianCov => "gaussian-cov",
        }
    }
}

/// A single population size or a list of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KValues {
    One(u64),
    Many(Vec<u64>),
}

impl KValues {
    pub fn list(&self) -> Vec<u64> {
        match self {
            KValues::One(k) => vec![*k],
            KValues::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingChoice {
    #[default]
    Closure,
    Individual,
}

fn default_paths() -> u64 {
    30_000
}
fn default_batches() -> usize {
    30
}
fn default_min_bin() -> usize {
    50
}
fn default_window() -> f64 {
    0.01
}
fn default_cap_multiplier() -> f64 {
    10.0
}
fn is_false(b: &bool) -> bool {
    !*b
}

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<KValues>,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Required; there is no entropy-seeded default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<u32>>,
    /// Offspring mean for `gaussian-cov` when no distribution is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    /// Truncation level for `gaussian-cov`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CovarianceMode>,
    /// Fixed horizon for `coupled`; otherwise paths run to extinction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    /// Generations reported by `simulate` (default 8).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<u32>,
    #[serde(default)]
    pub sampling: SamplingChoice,
    #[serde(default = "default_min_bin")]
    pub min_bin: usize,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub fixed_time_index: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_high_moment: bool,
    /// Run even when a level sits on a `𝔪^l = a` boundary.
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_boundary: bool,
    #[serde(default = "default_cap_multiplier")]
    pub cap_multiplier: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Number of leading paths whose trajectories are dumped (`simulate`, `coupled`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub plot_data: bool,
}

impl ExperimentConfig {
    /// A configuration of the given kind with every optional field unset.
    pub fn new(kind: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "kind": kind })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Every setting that can change results, as canonical JSON.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            for key in ["out", "workers", "plot_data"] {
                map.remove(key);
            }
        }
        v
    }

    /// First 12 hex digits of the SHA-256 of the snapshot.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.snapshot().to_string().as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    /// Directory name `<kind>-<hash>`.
    pub fn run_name(&self) -> String {
        format!("{}-{}", self.kind.as_str(), self.hash())
    }

    fn ks(&self) -> Vec<u64> {
        self.k.as_ref().map(KValues::list).unwrap_or_default()
    }

    fn single_k(&self) -> Option<u64> {
        self.ks().first().copied()
    }

    fn sampling(&self) -> Sampling {
        match self.sampling {
            SamplingChoice::Closure => Sampling::Closure,
            SamplingChoice::Individual => Sampling::Individual,
        }
    }

    /// Offspring mean: from `m` for `gaussian-cov`, else from the distribution.
    fn mean(&self) -> Option<f64> {
        self.m.or_else(|| {
            self.distribution
                .clone()
                .and_then(|d| OffspringDistribution::new(d).ok())
                .map(|d| d.mean())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Every invariant violation and boundary warning in `cfg`.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    use ExperimentKind as K;
    let mut out = Vec::new();
    let mut err = |m: String| {
        out.push(Diagnostic {
            severity: Severity::Error,
            message: m,
        })
    };
    if cfg.seed.is_none() {
        err("seed is required; runs are never seeded from entropy".into());
    }
    if cfg.kind != K::GaussianCov {
        if cfg.batches < crate::estimators::ensemble::MIN_BATCHES {
            err(format!(
                "batches must be at least {}",
                crate::estimators::ensemble::MIN_BATCHES
            ));
        }
        if cfg.paths == 0 || cfg.batches == 0 || !cfg.paths.is_multiple_of(cfg.batches as u64) {
            err(format!(
                "paths ({}) must be a positive multiple of batches ({})",
                cfg.paths, cfg.batches
            ));
        }
        match &cfg.distribution {
            None => err("distribution is required".into()),
            Some(spec) => {
                if let Err(e) = OffspringDistribution::new(spec.clone()) {
                    err(format!("distribution: {e}"));
                }
            }
        }
        let ks = cfg.ks();
        if ks.is_empty() {
            err("k is required".into());
        }
        if ks.contains(&0) {
            err("K must be positive".into());
        }
        if cfg.kind == K::ExtinctionScaling && ks.iter().any(|&k| k < 10) {
            err("extinction-scaling needs every K >= 10".into());
        }
        if matches!(cfg.kind, K::Simulate | K::Coupled | K::CltCheck) && ks.len() > 1 {
            err(format!("{} takes a single K", cfg.kind.as_str()));
        }
    }
    if cfg.cap_multiplier.is_nan() || cfg.cap_multiplier < 1.0 {
        err("cap_multiplier must be at least 1".into());
    }
    if cfg.workers == Some(0) {
        err("workers must be at least 1".into());
    }
    let in_unit = |u: f64| u > 0.0 && u < 1.0;
    for (name, u) in [("u1", cfg.u1), ("u2", cfg.u2)] {
        if let Some(u) = u {
            if !in_unit(u) {
                err(format!("{name} must lie in (0, 1)"));
            }
        }
    }
    if let (Some(u1), Some(u2)) = (cfg.u1, cfg.u2) {
        if u1 >= u2 {
            err("u1 < u2 required".into());
        }
    }
    let needs_u = match cfg.kind {
        K::ConditionalMoments | K::Invariance => &["u1", "u2"][..],
        K::ConditionalOnTau => &["u1"][..],
        _ => &[][..],
    };
    for name in needs_u {
        let present = if *name == "u1" {
            cfg.u1.is_some()
        } else {
            cfg.u2.is_some()
        };
        if !present {
            err(format!("{name} is required for {}", cfg.kind.as_str()));
        }
    }
    if let Some(l) = cfg.l {
        if l == 0 {
            err("l must be positive".into());
        } else if l > crate::estimators::conditional::MAX_MOMENT_ORDER && !cfg.allow_high_moment {
            err(format!("l = {l} exceeds 3; set allow_high_moment to override"));
        }
    }
    if cfg.kind == K::Invariance {
        match &cfg.epsilons {
            None => err("epsilons are required for invariance".into()),
            Some(e) if e.is_empty() || e.iter().any(|x| x.abs() > 0.2) => {
                err("epsilons must satisfy |eps| <= 0.2".into())
            }
            _ => {}
        }
        if !(cfg.window > 0.0 && cfg.window < 1.0) {
            err("window must lie in (0, 1)".into());
        }
    }
    if let Some(levels) = &cfg.levels {
        if levels.iter().any(|a| !(0.0..1.0).contains(a)) {
            err("levels must lie in [0, 1)".into());
        }
        if levels.windows(2).any(|w| w[0] > w[1]) {
            err("levels must be sorted".into());
        }
    }
    if matches!(cfg.kind, K::Coupled) && cfg.levels.as_ref().is_none_or(Vec::is_empty) {
        err("levels are required for coupled".into());
    }
    if matches!(cfg.kind, K::CltCheck | K::GaussianCov) {
        match &cfg.indices {
            None => err("indices are required".into()),
            Some(ix) if ix.is_empty() || ix[0] == 0 || ix.windows(2).any(|w| w[0] >= w[1]) => {
                err("indices must be sorted, distinct and positive".into())
            }
            Some(ix) if cfg.kind == K::CltCheck && ix.len() < 2 => err("clt-check needs at least two indices".into()),
            _ => {}
        }
    }
    if let Some(a) = cfg.a {
        if !(0.0..1.0).contains(&a) {
            err("a must lie in [0, 1)".into());
        }
    }
    if cfg.min_bin == 0 {
        err("min_bin must be positive".into());
    }
    let m = cfg.mean();
    match (cfg.kind, m) {
        (K::GaussianCov, None) => err("gaussian-cov needs m or a distribution".into()),
        (K::Simulate, _) | (_, None) => {}
        (_, Some(m)) if !(m > 0.0 && m < 1.0) => err(format!("offspring mean {m} must lie in (0, 1)")),
        _ => {}
    }

    // boundary warnings
    if let Some(oracle) = m.and_then(|m| LimitOracle::new(m).ok()) {
        let levels = cfg.levels.clone().unwrap_or_default().into_iter().chain(cfg.a);
        for a in levels.filter(|&a| a > 0.0) {
            if let Ok((l, gap)) = oracle.boundary_gap(a) {
                if gap < BOUNDARY_GAP {
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        message: format!("level a = {a} is within {gap:.1e} of m^{l}; ell(a) is fragile there"),
                    });
                }
            }
        }
    }
    if cfg.l.is_some_and(|l| l > 3) && cfg.allow_high_moment {
        out.push(Diagnostic {
            severity: Severity::Warning,
            message: "moment orders above 3 need very large samples".into(),
        });
    }
    out
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    /// Run directory, when an output root was configured.
    pub dir: Option<PathBuf>,
    /// Machine-readable result for standard output (the matrix for `gaussian-cov`).
    pub stdout: Option<String>,
    pub warnings: Vec<Diagnostic>,
}

impl RunOutput {
    /// Process exit status: 0 iff no verdict failed.
    pub fn exit_code(&self) -> i32 {
        if self.report.all_pass() {
            0
        } else {
            1
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Validates, runs on a pool of `workers` threads, and persists the outputs.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let diags = validate(cfg);
    let mut errors: Vec<String> = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message.clone())
        .collect();
    let warnings: Vec<Diagnostic> = diags.into_iter().filter(|d| d.severity == Severity::Warning).collect();
    if !cfg.allow_boundary {
        errors.extend(
            warnings
                .iter()
                .filter(|w| w.message.contains("ell(a) is fragile"))
                .map(|w| format!("{} (set allow_boundary to override)", w.message)),
        );
    }
    if !errors.is_empty() {
        return Err(HarnessError::Config(errors));
    }
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(1))
        .build()
        .map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
    let (mut report, stdout) = pool.install(|| dispatch(cfg))?;
    report.config = cfg.snapshot();
    let wall = started.elapsed().as_secs_f64();

    let dir = match &cfg.out {
        None => None,
        Some(root) => {
            let dir = root.join(cfg.run_name());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            write_file(&dir.join("report.json"), &report.to_json())?;
            write_file(&dir.join("report.csv"), &report.to_csv())?;
            let mut files = vec!["report.json", "report.csv"];
            if cfg.plot_data {
                write_file(&dir.join("plot.csv"), &report.plot_csv())?;
                files.push("plot.csv");
            }
            if let Some(s) = &stdout {
                write_file(&dir.join("matrix.csv"), s)?;
                files.push("matrix.csv");
            }
            if cfg.trajectories.is_some_and(|n| n > 0) {
                pool.install(|| write_trajectories(cfg, &dir.join("trajectories.csv")))?;
                files.push("trajectories.csv");
            }
            let manifest = serde_json::json!({
                "schema_version": crate::estimators::report::SCHEMA_VERSION,
                "tool": "branchlab",
                "version": env!("CARGO_PKG_VERSION"),
                "config": cfg,
                "config_hash": cfg.hash(),
                "files": files,
                "wall_time_seconds": wall,
                "warnings": warnings,
            });
            let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            text.push('\n');
            write_file(&dir.join("manifest.json"), &text)?;
            Some(dir)
        }
    };
    Ok(RunOutput {
        report,
        dir,
        stdout,
        warnings,
    })
}

fn common(cfg: &ExperimentConfig) -> Result<Common, HarnessError> {
    let spec = cfg
        .distribution
        .clone()
        .ok_or_else(|| HarnessError::Config(vec!["distribution is required".into()]))?;
    let dist = OffspringDistribution::new(spec).map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
    Ok(Common {
        dist,
        plan: BatchPlan::new(cfg.paths, cfg.batches)?,
        seed: cfg.seed.expect("validated"),
        cap_multiplier: cfg.cap_multiplier,
        tolerances: cfg.tolerances.clone(),
    })
}

fn conditional_params(cfg: &ExperimentConfig) -> ConditionalParams {
    ConditionalParams {
        u1: cfg.u1.unwrap_or(f64::NAN),
        u2: cfg.u2.unwrap_or(f64::NAN),
        l: cfg.l.unwrap_or(1),
        ks: cfg.ks(),
        min_bin: cfg.min_bin,
        fixed_time_index: cfg.fixed_time_index,
        allow_high_moment: cfg.allow_high_moment,
    }
}

fn dispatch(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Option<String>), HarnessError> {
    use ExperimentKind as K;
    if cfg.kind == K::GaussianCov {
        return gaussian_cov(cfg).map(|(r, s)| (r, Some(s)));
    }
    let c = common(cfg)?;
    let k = cfg.single_k().unwrap_or(0);
    let report = match cfg.kind {
        K::Simulate => simulate_summary(k, cfg.generations.unwrap_or(8), cfg.sampling(), &c)?,
        K::Coupled => coupled_check(
            &CoupledParams {
                k,
                levels: cfg.levels.clone().unwrap_or_default(),
                horizon: cfg.horizon,
            },
            &c,
        )?,
        K::ExtinctionScaling => extinction_scaling(&cfg.ks(), &c)?,
        K::CltCheck => clt_covariance_check(k, cfg.indices.as_deref().unwrap_or(&[]), &c)?,
        K::ConditionalMoments => conditional_moment_check(&conditional_params(cfg), &c)?,
        K::ConditionalOnTau => conditional_on_tau_check(&conditional_params(cfg), &c)?,
        K::Invariance => invariance_check(
            &InvarianceParams {
                u1: cfg.u1.unwrap_or(f64::NAN),
                u2: cfg.u2.unwrap_or(f64::NAN),
                l: cfg.l.unwrap_or(1),
                epsilons: cfg.epsilons.clone().unwrap_or_default(),
                ks: cfg.ks(),
                window: cfg.window,
            },
            &c,
        )?,
        K::GaussianCov => unreachable!("handled above"),
    };
    Ok((report, None))
}

/// The θ covariance matrix and a report of its entries and PSD status.
fn gaussian_cov(cfg: &ExperimentConfig) -> Result<(ExperimentReport, String), HarnessError> {
    let m = cfg.mean().expect("validated");
    let mode = cfg.mode.unwrap_or_default();
    let theta = ThetaCovariance::new(m, cfg.a.unwrap_or(0.0), mode).map_err(EstimatorError::from)?;
    let indices = cfg.indices.clone().unwrap_or_default();
    let mat = theta
        .covariance_matrix_unchecked(&indices)
        .map_err(EstimatorError::from)?;
    let mut report = ExperimentReport::new("gaussian-cov", 0, 0);
    for (p, &i) in indices.iter().enumerate() {
        for (q, &j) in indices.iter().enumerate().skip(p) {
            report.push(Entry::new(format!("cov[{i},{j}]"), mat[(p, q)]));
        }
    }
    let min_eig = min_eigenvalue(&mat);
    let max_eig = -min_eigenvalue(&(-&mat));
    report.push(
        Entry::new("min_eigenvalue", min_eig)
            .target(0.0)
            .verdict(Verdict::from_bool(min_eig >= -PSD_TOLERANCE * max_eig)),
    );
    report.note(format!(
        "mode = {}",
        serde_json::to_value(mode).expect("mode").as_str().unwrap_or("")
    ));
    Ok((report, matrix_csv(&mat)))
}

/// Dumps the leading `trajectories` paths of a `simulate` or `coupled` run.
fn write_trajectories(cfg: &ExperimentConfig, path: &Path) -> Result<(), HarnessError> {
    let c = common(cfg)?;
    let k = cfg.single_k().unwrap_or(0);
    let n = cfg.trajectories.unwrap_or(0).min(cfg.paths);
    let src = c.source(k);
    let file = fs::File::create(path).map_err(io_err(path))?;
    match cfg.kind {
        ExperimentKind::Simulate => {
            let mut w = TrajectoryWriter::new(BufWriter::new(file), &[]).map_err(io_err(path))?;
            let stop = StopRule::UntilExtinction {
                cap: c.cap(k).max(cfg.generations.unwrap_or(8)),
            };
            for i in 0..n {
                let rec = simulate_path(k, &c.dist, &src, i, stop, cfg.sampling());
                w.write_path(i, &rec).map_err(io_err(path))?;
            }
            w.into_inner().flush().map_err(io_err(path))?;
        }
        ExperimentKind::Coupled => {
            let levels = cfg.levels.clone().unwrap_or_default();
            let mut w = TrajectoryWriter::new(BufWriter::new(file), &levels).map_err(io_err(path))?;
            let stop = match cfg.horizon {
                Some(h) => StopRule::FixedHorizon(h),
                None => StopRule::UntilExtinction { cap: c.cap(k) },
            };
            for i in 0..n {
                let cp = simulate_coupled(k, &c.dist, &levels, &src, i, stop).map_err(EstimatorError::from)?;
                w.write_coupled(i, &cp).map_err(io_err(path))?;
            }
            w.into_inner().flush().map_err(io_err(path))?;
        }
        _ => {
            return Err(HarnessError::Config(vec![
                "trajectories are only available for simulate and coupled".into(),
            ]))
        }
    }
    Ok(())
}
