//! Invariance of the conditional log-moment under a relative deviation `1 + ε`,
//! whether the deviation is put on a population size or on the extinction time.
//!
//! For each `ε`:
//! * `A` is `log E[X_{⌊u1 τ⌋}^l]` over paths whose `X_{⌊u2 τ⌋}` lies within a
//!   relative window `w` of `⌊(1+ε) K 𝔪^{u2 t_K}⌋`;
//! * `B` is `log E[X_{⌊u1 τ⌋}^l]` over paths with `τ = ⌈(1+ε) c log K⌉`, i.e.
//!   `τ = -⌊(1+ε) log K / log 𝔪⌋`;
//! * both share the asymptote `l log(K + Kε) - l u1 log K`.

use super::conditional::{collect_samples, pooled, IndexRule, PathSample};
use super::stats::jackknife;
use super::{klabel, Common, Entry, EstimatorError, ExperimentReport, Verdict};
use crate::process::snap_to_integer;
use crate::stopping::LimitOracle;

/// Largest `|ε|` accepted.
pub const MAX_EPSILON: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceParams {
    pub u1: f64,
    pub u2: f64,
    pub l: u32,
    pub epsilons: Vec<f64>,
    pub ks: Vec<u64>,
    /// Relative half-width of the population window for `A`.
    pub window: f64,
}

/// `l log(K(1+ε)) - l u1 log K`.
pub fn invariance_target(l: u32, u1: f64, eps: f64, k: u64) -> f64 {
    let (lf, log_k) = (l as f64, (k as f64).ln());
    lf * ((k as f64) * (1.0 + eps)).ln() - lf * u1 * log_k
}

/// Integer range of `X_{⌊u2 τ⌋}` values conditioned on for `A`.
pub fn population_window(eps: f64, u2: f64, window: f64, m: f64, k: u64) -> (u64, u64) {
    let t_k = LimitOracle::new(m).expect("subcritical mean").mean_time_scale(k);
    let center = snap_to_integer((1.0 + eps) * k as f64 * m.powf(u2 * t_k)).floor();
    (
        (center * (1.0 - window)).floor() as u64,
        (center * (1.0 + window)).ceil() as u64,
    )
}

/// The extinction time conditioned on for `B`.
pub fn tau_window(eps: f64, m: f64, k: u64) -> u32 {
    let c_log_k = LimitOracle::new(m).expect("subcritical mean").mean_time_scale(k);
    snap_to_integer((1.0 + eps) * c_log_k).ceil() as u32
}

fn log_moment<'a>(samples: impl Iterator<Item = &'a PathSample>, l: u32) -> Option<f64> {
    let (num, den) = samples.fold((0.0, 0.0), |(n, d), s| {
        (n + s.weight * (s.x1 as f64).powi(l as i32), d + s.weight)
    });
    (den > 0.0).then(|| (num / den).ln())
}

fn nearest_population(all: &[PathSample], lo: u64, hi: u64) -> String {
    let mid = (lo + hi) / 2;
    all.iter()
        .min_by_key(|s| s.x2.abs_diff(mid))
        .map(|s| format!("X_(u2 tau) = {}", s.x2))
        .unwrap_or_else(|| "none".into())
}

fn nearest_tau(all: &[PathSample], tau: u32) -> String {
    all.iter()
        .min_by_key(|s| s.tau.abs_diff(tau))
        .map(|s| format!("tau = {}", s.tau))
        .unwrap_or_else(|| "none".into())
}

pub fn invariance_check(p: &InvarianceParams, common: &Common) -> Result<ExperimentReport, EstimatorError> {
    let m = common.require_subcritical()?;
    if !(p.u1 > 0.0 && p.u1 < p.u2 && p.u2 < 1.0) {
        return Err(EstimatorError::Config(format!(
            "0 < u1 < u2 < 1 required, got {} and {}",
            p.u1, p.u2
        )));
    }
    if p.epsilons.is_empty() || p.epsilons.iter().any(|e| e.abs() > MAX_EPSILON) {
        return Err(EstimatorError::Config(format!(
            "epsilons must be nonempty with |eps| <= {MAX_EPSILON}"
        )));
    }
    if p.l == 0 || p.ks.is_empty() || !(p.window > 0.0 && p.window < 1.0) {
        return Err(EstimatorError::Config(
            "need l >= 1, at least one K and a window in (0, 1)".into(),
        ));
    }
    let tol = common.tolerances.invariance_rel_tol;
    let mut report = ExperimentReport::new(
        "invariance",
        common.plan.batches(),
        common.plan.paths() * p.ks.len() as u64,
    );
    report.note("B conditions on tau = ceil((1+eps) c log K)");

    let k0 = p.ks[0];
    for &eps in &p.epsilons {
        let t = invariance_target(p.l, p.u1, eps, k0);
        if eps == 0.0 {
            let closed = p.l as f64 * (1.0 - p.u1) * (k0 as f64).ln();
            report.push(
                Entry::new(format!("target_at_zero[{}]", klabel(k0)), t)
                    .target(closed)
                    .verdict(Verdict::from_bool((t - closed).abs() <= 1e-12 * closed.abs())),
            );
        } else if eps > 0.0 && p.epsilons.contains(&-eps) {
            let d = t - invariance_target(p.l, p.u1, -eps, k0);
            let closed = p.l as f64 * ((1.0 + eps) / (1.0 - eps)).ln();
            report.push(
                Entry::new(format!("target_antisymmetry[eps={eps}]"), d)
                    .target(closed)
                    .verdict(Verdict::from_bool((d - closed).abs() <= 1e-12 * closed.abs().max(1.0))),
            );
        }
    }

    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); p.epsilons.len()];
    for &k in &p.ks {
        let (batches, dropped) = collect_samples(k, IndexRule::Realized { u1: p.u1, u2: p.u2 }, common);
        if dropped > 0 {
            report.note(format!("{}: {dropped} paths hit the cap and were dropped", klabel(k)));
        }
        let all = pooled(&batches, None);
        for (e, &eps) in p.epsilons.iter().enumerate() {
            let (lo, hi) = population_window(eps, p.u2, p.window, m, k);
            let tau = tau_window(eps, m, k);
            let a_of = |v: &[PathSample]| log_moment(v.iter().filter(|s| (lo..=hi).contains(&s.x2)), p.l);
            let b_of = |v: &[PathSample]| log_moment(v.iter().filter(|s| s.tau == tau), p.l);
            if a_of(&all).is_none() {
                return Err(EstimatorError::EmptyConditioningSet {
                    window: format!("X_(u2 tau) in [{lo}, {hi}] at eps = {eps}, {}", klabel(k)),
                    nearest: nearest_population(&all, lo, hi),
                });
            }
            if b_of(&all).is_none() {
                return Err(EstimatorError::EmptyConditioningSet {
                    window: format!("tau = {tau} at eps = {eps}, {}", klabel(k)),
                    nearest: nearest_tau(&all, tau),
                });
            }
            let nan = f64::NAN;
            let stat = |skip: Option<usize>, f: &dyn Fn(&[PathSample]) -> Option<f64>| {
                f(&pooled(&batches, skip)).unwrap_or(nan)
            };
            let a = jackknife(batches.len(), |skip| stat(skip, &a_of));
            let b = jackknife(batches.len(), |skip| stat(skip, &b_of));
            let gap = jackknife(batches.len(), |skip| {
                let (a, b) = (stat(skip, &a_of), stat(skip, &b_of));
                (a - b).abs() / a.abs()
            });
            let target = invariance_target(p.l, p.u1, eps, k);
            let tag = format!("eps={eps},{}", klabel(k));
            report.push(Entry::new(format!("A[{tag}]"), a.value).stderr(a.stderr).target(target));
            report.push(Entry::new(format!("B[{tag}]"), b.value).stderr(b.stderr).target(target));
            report.push(
                Entry::new(format!("relative_gap[{tag}]"), gap.value)
                    .stderr(gap.stderr)
                    .target(tol)
                    .verdict(Verdict::from_bool(gap.value <= tol)),
            );
            report.plot_point(format!("relative_gap_eps={eps}"), k as f64, gap.value);
            gaps[e].push(gap.value);
        }
    }
    if p.ks.len() >= 2 {
        for (e, &eps) in p.epsilons.iter().enumerate() {
            let g = &gaps[e];
            report.push(
                Entry::new(format!("relative_gap_trend[eps={eps}]"), super::largest_increase(g))
                    .target(0.0)
                    .verdict(Verdict::from_bool(super::nonincreasing(g))),
            );
        }
    }
    Ok(report)
}
