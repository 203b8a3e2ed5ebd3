//! Path-level summaries: the mean law `E X_n = K𝔪^n` for plain paths, and
//! exact pathwise checks on coupled truncated and shifted processes.

use super::stats::{batch_estimate, median};
use super::{Common, Entry, EstimatorError, ExperimentReport, Verdict};
use crate::process::{run_path, simulate_coupled, CoupledPaths, Sampling, StopRule};
use crate::stopping::LimitOracle;

/// Mean population per generation and the extinction-time distribution.
pub fn simulate_summary(
    k: u64,
    generations: u32,
    sampling: Sampling,
    common: &Common,
) -> Result<ExperimentReport, EstimatorError> {
    let m = common.m();
    if !(0.0..1.0).contains(&m) {
        return Err(EstimatorError::Config(format!("offspring mean {m} must lie in [0, 1)")));
    }
    let src = common.source(k);
    let cap = common.cap(k).max(generations);
    let dist = &common.dist;
    let g = generations as usize;
    let per_path = common.plan.map_paths(|path| {
        let mut sizes = vec![0u64; g + 1];
        let out = run_path(
            k,
            dist,
            &src,
            path,
            StopRule::UntilExtinction { cap },
            sampling,
            |n, x| {
                if (n as usize) <= g {
                    sizes[n as usize] = x;
                }
            },
        );
        (sizes, out.generations, out.extinct)
    });

    let mut report = ExperimentReport::new("simulate", common.plan.batches(), common.plan.paths());
    let tol = &common.tolerances;
    for n in 1..=g {
        let means: Vec<f64> = per_path
            .iter()
            .map(|b| b.iter().map(|(s, _, _)| s[n] as f64).sum::<f64>() / b.len() as f64)
            .collect();
        let est = batch_estimate(&means);
        report.push(
            Entry::new(format!("mean_X[n={n}]"), est.value)
                .stderr(est.stderr)
                .target(k as f64 * m.powi(n as i32))
                .within_se(tol.se_multiplier),
        );
    }
    for n in 0..=g {
        let frac: Vec<f64> = per_path
            .iter()
            .map(|b| b.iter().filter(|(_, t, e)| *e && (*t as usize) <= n).count() as f64 / b.len() as f64)
            .collect();
        let est = batch_estimate(&frac);
        report.push(Entry::new(format!("extinct_by[n={n}]"), est.value).stderr(est.stderr));
    }
    let mut taus: Vec<f64> = per_path.iter().flatten().map(|(_, t, _)| *t as f64).collect();
    report.push(Entry::new("median_tau", median(&mut taus)));
    let exceeded = per_path.iter().flatten().filter(|(_, _, e)| !e).count();
    report.push(Entry::new("horizon_exceeded", exceeded as f64));
    Ok(report)
}

/// Parameters of the coupled-process check.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledParams {
    pub k: u64,
    pub levels: Vec<f64>,
    /// Fixed horizon; `None` runs each path until the base process dies out.
    pub horizon: Option<u32>,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    lower: Vec<u64>,
    upper: Vec<u64>,
    identity: Vec<u64>,
    indicator: Vec<u64>,
    decoupling: Vec<u64>,
    absorbing: u64,
    hit_ell: Vec<u64>,
    /// Per level and generation: (indicator ones, observations).
    freq: Vec<Vec<(u64, u64)>>,
    /// Per level and generation: sum of `Y_n / K`.
    shifted: Vec<Vec<f64>>,
    paths: u64,
}

impl Tally {
    fn new(levels: usize, gens: usize) -> Self {
        Self {
            lower: vec![0; levels],
            upper: vec![0; levels],
            identity: vec![0; levels],
            indicator: vec![0; levels],
            decoupling: vec![0; levels.saturating_sub(1)],
            hit_ell: vec![0; levels],
            freq: vec![vec![(0, 0); gens]; levels],
            shifted: vec![vec![0.0; gens + 1]; levels],
            ..Self::default()
        }
    }

    fn add(&mut self, c: &CoupledPaths, ells: &[Option<u32>]) {
        self.paths += 1;
        let k = c.initial_size as f64;
        for w in c.base.windows(2) {
            self.absorbing += (w[0] == 0 && w[1] != 0) as u64;
        }
        for (i, l) in c.levels.iter().enumerate() {
            for n in 0..=c.horizon as usize {
                let (x, xa, y) = (c.base[n], l.truncated[n], l.shifted[n]);
                self.lower[i] += (y > x) as u64;
                self.upper[i] += (x > xa) as u64;
                self.identity[i] += (y + l.floor != xa || xa < l.floor) as u64;
                if n > 0 {
                    self.indicator[i] += ((l.indicators[n - 1] == 1) != (y > 0)) as u64;
                }
                if let Some(s) = self.shifted[i].get_mut(n) {
                    *s += y as f64 / k;
                }
            }
            for (n, &ind) in l.indicators.iter().enumerate() {
                if let Some(f) = self.freq[i].get_mut(n) {
                    f.0 += ind as u64;
                    f.1 += 1;
                }
            }
            if let Some(ell) = ells[i] {
                let hit = c.base.iter().position(|&x| x <= l.floor);
                self.hit_ell[i] += (hit == Some(ell as usize)) as u64;
            }
        }
        // a lower level agrees with the next one up until the base process
        // first reaches the higher floor
        for i in 0..c.levels.len().saturating_sub(1) {
            let (lo, hi) = (&c.levels[i], &c.levels[i + 1]);
            let until = c.base.iter().position(|&x| x <= hi.floor).unwrap_or(c.base.len());
            self.decoupling[i] += (0..until).filter(|&n| lo.truncated[n] != hi.truncated[n]).count() as u64;
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.lower, &o.lower);
        add(&mut self.upper, &o.upper);
        add(&mut self.identity, &o.identity);
        add(&mut self.indicator, &o.indicator);
        add(&mut self.decoupling, &o.decoupling);
        add(&mut self.hit_ell, &o.hit_ell);
        self.absorbing += o.absorbing;
        self.paths += o.paths;
        for (a, b) in self.freq.iter_mut().zip(&o.freq) {
            a.iter_mut().zip(b).for_each(|(x, y)| {
                x.0 += y.0;
                x.1 += y.1
            });
        }
        for (a, b) in self.shifted.iter_mut().zip(&o.shifted) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

fn level_name(a: f64) -> String {
    format!("a={a:.4}")
}

/// Counts every violation of the pathwise relations between `X`, `X^(a)` and
/// `Y^(a)`, and reports the limit behaviour of `I^(a)`, `Y^(a)/K` and `τ_{a,K}`.
/// Counts plus per-level shifted-process means by generation for one batch.
type BatchTally = (Tally, Vec<Vec<f64>>);

pub fn coupled_check(p: &CoupledParams, common: &Common) -> Result<ExperimentReport, EstimatorError> {
    let m = common.require_subcritical()?;
    let oracle = LimitOracle::new(m).expect("subcritical mean");
    let ells: Vec<Option<u32>> = p
        .levels
        .iter()
        .map(|&a| (a > 0.0).then(|| oracle.ell(a).ok()).flatten())
        .collect();
    let gens = ells.iter().flatten().max().map_or(4, |l| l + 2) as usize;
    let stop = match p.horizon {
        Some(h) => StopRule::FixedHorizon(h),
        None => StopRule::UntilExtinction { cap: common.cap(p.k) },
    };
    let src = common.source(p.k);
    let dist = &common.dist;
    let levels = &p.levels;
    let batches: Vec<Result<BatchTally, EstimatorError>> = common.plan.map(|_, range| {
        let mut t = Tally::new(levels.len(), gens);
        for path in range {
            let c = simulate_coupled(p.k, dist, levels, &src, path, stop)?;
            t.add(&c, &ells);
        }
        let means = t
            .shifted
            .iter()
            .map(|v| v.iter().map(|s| s / t.paths as f64).collect())
            .collect();
        Ok((t, means))
    });
    let mut total = Tally::new(levels.len(), gens);
    let mut shifted_means = Vec::new();
    for b in batches {
        let (t, means) = b?;
        total = total.merge(t);
        shifted_means.push(means);
    }

    let mut report = ExperimentReport::new("coupled", common.plan.batches(), common.plan.paths());
    let zero = |name: String, count: u64| {
        Entry::new(name, count as f64)
            .target(0.0)
            .verdict(Verdict::from_bool(count == 0))
    };
    report.push(zero("absorbing_violations".into(), total.absorbing));
    for (i, &a) in levels.iter().enumerate() {
        let ln = level_name(a);
        report.push(zero(format!("upper_sandwich_violations[{ln}]"), total.upper[i]));
        report.push(zero(format!("lower_sandwich_violations[{ln}]"), total.lower[i]));
        report.push(zero(format!("shift_identity_violations[{ln}]"), total.identity[i]));
        report.push(zero(format!("indicator_mismatches[{ln}]"), total.indicator[i]));
        if let Some(ell) = ells[i] {
            report.push(
                Entry::new(
                    format!("P(tau_aK=ell)[{ln},ell={ell}]"),
                    total.hit_ell[i] as f64 / total.paths as f64,
                )
                .target(1.0),
            );
        }
        for (n, &(ones, seen)) in total.freq[i].iter().enumerate() {
            if seen > 0 {
                report.push(
                    Entry::new(format!("indicator_freq[{ln},n={n}]"), ones as f64 / seen as f64)
                        .target(oracle.chi(n as u32, a) as f64),
                );
            }
        }
        for n in 0..=gens {
            let est = batch_estimate(&shifted_means.iter().map(|b| b[i][n]).collect::<Vec<_>>());
            let limit = (m.powi(n as i32) - a).max(0.0);
            report.push(
                Entry::new(format!("mean_Y_over_K[{ln},n={n}]"), est.value)
                    .stderr(est.stderr)
                    .target(limit),
            );
        }
    }
    for i in 0..levels.len().saturating_sub(1) {
        report.push(zero(
            format!(
                "pre_decoupling_violations[{}<{}]",
                level_name(levels[i]),
                level_name(levels[i + 1])
            ),
            total.decoupling[i],
        ));
    }
    if total.lower.iter().any(|&v| v > 0) {
        report.note("the lower half of the sandwich holds pathwise only for offspring laws on {0, 1}");
    }
    Ok(report)
}
