//! Conditional moments of the population before extinction.
//!
//! Paths are first grouped by their exact extinction time `τ`. Within a group,
//! the conditioning on a population size is realized by sorting on it and
//! cutting quantile bins of at least `min_bin` paths; a group too small for
//! one full bin becomes a single bin of its own. Groups are never dropped,
//! since the group-mass-weighted aggregate is biased without them.
//!
//! All estimators accept weighted samples so that an exactly enumerated
//! ensemble can be pushed through the same code as Monte Carlo paths.

use std::collections::BTreeMap;

use super::stats::jackknife;
use super::{klabel, Common, Entry, EstimatorError, ExperimentReport, Verdict};
use crate::offspring::OffspringDistribution;
use crate::process::{run_path, snap_to_integer, Sampling, StopRule};
use crate::rng::RandomnessSource;
use crate::stopping::LimitOracle;

/// Moment orders above this need an explicit override.
pub const MAX_MOMENT_ORDER: u32 = 3;

/// What one path contributes: its extinction time, two observation times and
/// the population at each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub tau: u32,
    pub s1: u32,
    pub s2: u32,
    pub x1: u64,
    pub x2: u64,
    pub weight: f64,
}

/// How observation times are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexRule {
    /// `s_i = ⌊u_i τ⌋` with the path's own `τ`.
    Realized { u1: f64, u2: f64 },
    /// Fixed times, e.g. `⌊u_i c log K⌋`, for sensitivity analysis.
    Fixed { s1: u32, s2: u32 },
}

impl IndexRule {
    /// The fixed-time alternative at population `k`.
    pub fn fixed_at(u1: f64, u2: f64, m: f64, k: u64) -> Self {
        let t = LimitOracle::new(m).expect("subcritical mean").mean_time_scale(k);
        IndexRule::Fixed {
            s1: snap_to_integer(u1 * t).floor() as u32,
            s2: snap_to_integer(u2 * t).floor() as u32,
        }
    }

    fn times(self, tau: u32) -> (u32, u32) {
        match self {
            IndexRule::Realized { u1, u2 } => ((u1 * tau as f64).floor() as u32, (u2 * tau as f64).floor() as u32),
            IndexRule::Fixed { s1, s2 } => (s1, s2),
        }
    }
}

/// Builds a sample from a full trajectory ending in extinction at `sizes.len() - 1`.
pub fn sample_from_sizes(sizes: &[u64], rule: IndexRule, weight: f64) -> PathSample {
    let tau = (sizes.len() - 1) as u32;
    let (s1, s2) = rule.times(tau);
    let at = |s: u32| sizes.get(s as usize).copied().unwrap_or(0);
    PathSample {
        tau,
        s1,
        s2,
        x1: at(s1),
        x2: at(s2),
        weight,
    }
}

/// Simulates one path to extinction and reduces it to a [`PathSample`].
/// Returns `None` when the cap is hit first.
pub fn simulate_sample(
    k: u64,
    dist: &OffspringDistribution,
    src: &RandomnessSource,
    path: u64,
    rule: IndexRule,
    cap: u32,
) -> Option<PathSample> {
    let mut sizes = Vec::with_capacity(64);
    let out = run_path(
        k,
        dist,
        src,
        path,
        StopRule::UntilExtinction { cap },
        Sampling::Closure,
        |_, x| sizes.push(x),
    );
    out.extinct.then(|| sample_from_sizes(&sizes, rule, 1.0))
}

fn pow(x: u64, l: u32) -> f64 {
    (x as f64).powi(l as i32)
}

/// Weighted mean of `x1^l`.
pub fn marginal_moment(samples: &[PathSample], l: u32) -> f64 {
    let (num, den) = samples
        .iter()
        .fold((0.0, 0.0), |(n, d), s| (n + s.weight * pow(s.x1, l), d + s.weight));
    num / den
}

fn groups(samples: &[PathSample]) -> BTreeMap<u32, Vec<&PathSample>> {
    let mut g: BTreeMap<u32, Vec<&PathSample>> = BTreeMap::new();
    for s in samples {
        g.entry(s.tau).or_default().push(s);
    }
    g
}

/// Conditional moment of `X_{s1}` given one value of `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGroup {
    pub tau: u32,
    pub count: usize,
    pub mass: f64,
    /// Weighted mean of `X_{s1}^l` in the group.
    pub moment: f64,
    /// `K^l 𝔪^{l s1}`.
    pub target: f64,
    pub ratio: f64,
}

/// `E[X_{s1}^l | τ]` per `τ` group against `K^l 𝔪^{l s1}`. Every sample in a
/// group shares `s1` under either index rule.
pub fn tau_group_ratios(samples: &[PathSample], l: u32, k: u64, m: f64) -> Vec<TauGroup> {
    groups(samples)
        .into_iter()
        .map(|(tau, members)| {
            let mass: f64 = members.iter().map(|s| s.weight).sum();
            let moment = members.iter().map(|s| s.weight * pow(s.x1, l)).sum::<f64>() / mass;
            let target = pow(k, l) * m.powi((l * members[0].s1) as i32);
            TauGroup {
                tau,
                count: members.len(),
                mass,
                moment,
                target,
                ratio: moment / target,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    /// Predict `X_{s1}` from `X_{s2}`.
    Forward,
    /// Predict `X_{s2}` from `X_{s1}`.
    Reverse,
}

impl Direction {
    fn split(self, s: &PathSample) -> (u64, u64) {
        match self {
            Direction::Forward => (s.x2, s.x1),
            Direction::Reverse => (s.x1, s.x2),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Equal-count bins of at least this many paths.
    Quantile { min_bin: usize },
    /// One bin per distinct predictor value; exact for enumerated ensembles.
    ExactValue,
}

/// One conditioning cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub tau: u32,
    pub count: usize,
    pub mass: f64,
    /// Weighted mean of `predictor^l`.
    pub predictor: f64,
    /// Weighted mean of `response^l`.
    pub response: f64,
    /// `response / (predictor · factor)`.
    pub ratio: f64,
}

/// `Ê𝔪^{l(s_response - s_predictor)}` over all samples.
pub fn expectation_factor(samples: &[PathSample], l: u32, m: f64, dir: Direction) -> f64 {
    let (num, den) = samples.iter().fold((0.0, 0.0), |(n, d), s| {
        let e = match dir {
            Direction::Forward => s.s1 as i32 - s.s2 as i32,
            Direction::Reverse => s.s2 as i32 - s.s1 as i32,
        };
        (n + s.weight * m.powi(l as i32 * e), d + s.weight)
    });
    num / den
}

fn chunk_sizes(n: usize, bins: usize) -> impl Iterator<Item = usize> {
    (0..bins).map(move |b| n / bins + usize::from(b < n % bins))
}

/// Binned ratios of `E[response^l | τ, predictor]` to `predictor^l · factor`.
pub fn binned_ratios(samples: &[PathSample], l: u32, dir: Direction, binning: Binning, factor: f64) -> Vec<Bin> {
    let mut out = Vec::new();
    for (tau, mut members) in groups(samples) {
        // stable: ties keep sample order
        members.sort_by_key(|s| dir.split(s).0);
        let cells: Vec<&[&PathSample]> = match binning {
            Binning::Quantile { min_bin } => {
                let bins = (members.len() / min_bin.max(1)).max(1);
                let mut rest = &members[..];
                chunk_sizes(members.len(), bins)
                    .map(|size| {
                        let (head, tail) = rest.split_at(size);
                        rest = tail;
                        head
                    })
                    .collect()
            }
            Binning::ExactValue => members.chunk_by(|a, b| dir.split(a).0 == dir.split(b).0).collect(),
        };
        for cell in cells {
            let mass: f64 = cell.iter().map(|s| s.weight).sum();
            let (mut pred, mut resp) = (0.0, 0.0);
            for s in cell {
                let (p, r) = dir.split(s);
                pred += s.weight * pow(p, l);
                resp += s.weight * pow(r, l);
            }
            let (predictor, response) = (pred / mass, resp / mass);
            out.push(Bin {
                tau,
                count: cell.len(),
                mass,
                predictor,
                response,
                ratio: response / (predictor * factor),
            });
        }
    }
    out
}

/// Mass-weighted mean of finite ratios.
pub fn aggregate(cells: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = cells
        .into_iter()
        .filter(|(_, r)| r.is_finite())
        .fold((0.0, 0.0), |(n, d), (mass, r)| (n + mass * r, d + mass));
    num / den
}

/// The `τ` value carrying the most mass.
fn dominant_tau(samples: &[PathSample]) -> Option<u32> {
    let mut mass: BTreeMap<u32, f64> = BTreeMap::new();
    for s in samples {
        *mass.entry(s.tau).or_default() += s.weight;
    }
    mass.into_iter()
        .fold(None, |best: Option<(u32, f64)>, (t, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((t, w)),
        })
        .map(|(t, _)| t)
}

/// Parameters of the conditional-moment experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalParams {
    pub u1: f64,
    pub u2: f64,
    pub l: u32,
    pub ks: Vec<u64>,
    pub min_bin: usize,
    /// Observe at `⌊u c log K⌋` instead of `⌊u τ⌋`.
    pub fixed_time_index: bool,
    pub allow_high_moment: bool,
}

impl ConditionalParams {
    fn validate(&self, need_u2: bool) -> Result<(), EstimatorError> {
        let ok_u = |u: f64| u > 0.0 && u < 1.0;
        if !ok_u(self.u1) || (need_u2 && (!ok_u(self.u2) || self.u1 >= self.u2)) {
            return Err(EstimatorError::Config(format!(
                "0 < u1 < u2 < 1 required, got u1 = {}, u2 = {}",
                self.u1, self.u2
            )));
        }
        if self.l == 0 || (self.l > MAX_MOMENT_ORDER && !self.allow_high_moment) {
            return Err(EstimatorError::Config(format!(
                "moment order l = {} must lie in 1..={MAX_MOMENT_ORDER} without the override",
                self.l
            )));
        }
        if self.ks.is_empty() || self.min_bin == 0 {
            return Err(EstimatorError::Config("need at least one K and min_bin >= 1".into()));
        }
        Ok(())
    }

    fn rule(&self, m: f64, k: u64) -> IndexRule {
        if self.fixed_time_index {
            IndexRule::fixed_at(self.u1, self.u2, m, k)
        } else {
            IndexRule::Realized {
                u1: self.u1,
                u2: self.u2,
            }
        }
    }
}

/// Simulated samples at population `k`, by batch, plus the count of paths
/// dropped for hitting the cap.
pub fn collect_samples(k: u64, rule: IndexRule, common: &Common) -> (Vec<Vec<PathSample>>, u64) {
    let src = common.source(k);
    let cap = common.cap(k);
    let dist = &common.dist;
    let raw = common
        .plan
        .map_paths(|path| simulate_sample(k, dist, &src, path, rule, cap));
    let dropped = raw.iter().flatten().filter(|s| s.is_none()).count() as u64;
    (
        raw.into_iter().map(|b| b.into_iter().flatten().collect()).collect(),
        dropped,
    )
}

/// All samples except batch `skip`.
pub(crate) fn pooled(batches: &[Vec<PathSample>], skip: Option<usize>) -> Vec<PathSample> {
    batches
        .iter()
        .enumerate()
        .filter(|(b, _)| Some(*b) != skip)
        .flat_map(|(_, v)| v.iter().copied())
        .collect()
}

fn check_bin_mass(samples: &[PathSample], min_bin: usize) -> Result<(), EstimatorError> {
    let largest = groups(samples).values().map(Vec::len).max().unwrap_or(0);
    if largest < min_bin {
        return Err(EstimatorError::InsufficientBinMass { min_bin, largest });
    }
    Ok(())
}

/// Binned aggregate ratio for one direction, Ê factor included.
pub fn directional_ratio(samples: &[PathSample], l: u32, m: f64, dir: Direction, binning: Binning) -> f64 {
    let factor = expectation_factor(samples, l, m, dir);
    aggregate(
        binned_ratios(samples, l, dir, binning, factor)
            .iter()
            .map(|b| (b.mass, b.ratio)),
    )
}

fn push_band(report: &mut ExperimentReport, name: String, est: super::stats::Estimate, band: [f64; 2]) {
    report.push(
        Entry::new(name, est.value)
            .stderr(est.stderr)
            .target(1.0)
            .ratio_within(band[0], band[1]),
    );
}

fn push_closer(report: &mut ExperimentReport, name: &str, ratios: &[f64]) {
    if ratios.len() < 2 {
        return;
    }
    let (first, last) = ((ratios[0] - 1.0).abs(), (ratios[ratios.len() - 1] - 1.0).abs());
    report.push(
        Entry::new(name, last)
            .target(first)
            .verdict(Verdict::from_bool(last < first)),
    );
}

/// Given one population size, the other's conditional `l`-th moment against
/// `X^l · Ê𝔪^{l(s_other - s_this)}`, in both directions.
pub fn conditional_moment_check(p: &ConditionalParams, common: &Common) -> Result<ExperimentReport, EstimatorError> {
    let m = common.require_subcritical()?;
    p.validate(true)?;
    let band = common.tolerances.ratio_band;
    let binning = Binning::Quantile { min_bin: p.min_bin };
    let mut report = ExperimentReport::new(
        "conditional-moments",
        common.plan.batches(),
        common.plan.paths() * p.ks.len() as u64,
    );
    report.note("E m^{l(s1-s2)} is estimated over all paths, not per bin");
    let mut series: BTreeMap<Direction, Vec<f64>> = BTreeMap::new();
    for &k in &p.ks {
        let (batches, dropped) = collect_samples(k, p.rule(m, k), common);
        if dropped > 0 {
            report.note(format!("{}: {dropped} paths hit the cap and were dropped", klabel(k)));
        }
        let all = pooled(&batches, None);
        check_bin_mass(&all, p.min_bin)?;
        for dir in [Direction::Forward, Direction::Reverse] {
            let est = jackknife(batches.len(), |skip| {
                directional_ratio(&pooled(&batches, skip), p.l, m, dir, binning)
            });
            push_band(&mut report, format!("{}_ratio[{}]", dir.name(), klabel(k)), est, band);
            report.plot_point(format!("{}_ratio", dir.name()), k as f64, est.value);
            series.entry(dir).or_default().push(est.value);
            report.push(Entry::new(
                format!("{}_factor[{}]", dir.name(), klabel(k)),
                expectation_factor(&all, p.l, m, dir),
            ));
        }
        if let Some(t) = dominant_tau(&all) {
            let group: Vec<PathSample> = all.iter().copied().filter(|s| s.tau == t).collect();
            let r = directional_ratio(&group, p.l, m, Direction::Forward, binning);
            report.push(Entry::new(format!("dominant_tau_forward_ratio[{},tau={t}]", klabel(k)), r).target(1.0));
        }
    }
    for (dir, ratios) in &series {
        push_closer(&mut report, &format!("{}_closer_at_largest_K", dir.name()), ratios);
    }
    Ok(report)
}

/// `E[X_{⌊u1 τ⌋}^l | τ]` against `K^l 𝔪^{l⌊u1 τ⌋}`, aggregated over `τ` groups.
pub fn conditional_on_tau_check(p: &ConditionalParams, common: &Common) -> Result<ExperimentReport, EstimatorError> {
    let m = common.require_subcritical()?;
    p.validate(false)?;
    let band = common.tolerances.tau_ratio_band;
    let rule_u2 = ConditionalParams { u2: p.u1, ..p.clone() };
    let mut report = ExperimentReport::new(
        "conditional-on-tau",
        common.plan.batches(),
        common.plan.paths() * p.ks.len() as u64,
    );
    let mut ratios = Vec::new();
    for &k in &p.ks {
        let (batches, dropped) = collect_samples(k, rule_u2.rule(m, k), common);
        if dropped > 0 {
            report.note(format!("{}: {dropped} paths hit the cap and were dropped", klabel(k)));
        }
        let all = pooled(&batches, None);
        check_bin_mass(&all, p.min_bin)?;
        let est = jackknife(batches.len(), |skip| {
            let g = tau_group_ratios(&pooled(&batches, skip), p.l, k, m);
            aggregate(g.iter().map(|g| (g.mass, g.ratio)))
        });
        push_band(&mut report, format!("tau_group_ratio[{}]", klabel(k)), est, band);
        report.plot_point("tau_group_ratio", k as f64, est.value);
        ratios.push(est.value);

        let g = tau_group_ratios(&all, p.l, k, m);
        if let Some(d) = g
            .iter()
            .max_by(|a, b| a.mass.total_cmp(&b.mass).then(b.tau.cmp(&a.tau)))
        {
            report.push(Entry::new(format!("dominant_tau_ratio[{},tau={}]", klabel(k), d.tau), d.ratio).target(1.0));
        }
        // marginalizing the groups must give back the overall moment
        let total: f64 = g.iter().map(|g| g.mass).sum();
        let marginal = g.iter().map(|g| g.mass * g.moment).sum::<f64>() / total;
        let overall = marginal_moment(&all, p.l);
        report.push(
            Entry::new(format!("marginal_moment_identity[{}]", klabel(k)), marginal)
                .target(overall)
                .verdict(Verdict::from_bool((marginal - overall).abs() <= 1e-9 * overall.abs())),
        );
    }
    push_closer(&mut report, "tau_group_closer_at_largest_K", &ratios);
    Ok(report)
}
