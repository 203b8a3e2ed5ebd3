//! Exact oracles for bernoulli(m) offspring, where one generation thins each
//! individual independently: `X_{n+1} | X_n = x ~ binomial(x, m)` and
//! `X_n | X_0 = K ~ binomial(K, m^n)`.
#![allow(dead_code)]

use branchlab_core::estimators::conditional::{
    binned_ratios, directional_ratio, expectation_factor, sample_from_sizes, tau_group_ratios, Binning, Direction,
    IndexRule, PathSample,
};
use statrs::function::factorial::ln_binomial;

pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return f64::from(u8::from(k == 0));
    }
    if p == 1.0 {
        return f64::from(u8::from(k == n));
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// `P(X_n = y | X_0 = x)`.
pub fn transition(x: u64, y: u64, m: f64, n: u32) -> f64 {
    binomial_pmf(x, m.powi(n as i32), y)
}

/// `P(τ ≤ n | X_0 = k) = (1 - m^n)^k`.
pub fn extinction_cdf(k: u64, m: f64, n: u32) -> f64 {
    (1.0 - m.powi(n as i32)).powf(k as f64)
}

/// `P(τ = r | X_0 = y)`.
pub fn extinction_pmf(y: u64, m: f64, r: u32) -> f64 {
    if r == 0 {
        return f64::from(u8::from(y == 0));
    }
    extinction_cdf(y, m, r) - extinction_cdf(y, m, r - 1)
}

/// Smallest `n` with `(1 - m^n)^k >= 1/2`.
pub fn median_extinction_time(k: u64, m: f64) -> u32 {
    (0..).find(|&n| extinction_cdf(k, m, n) >= 0.5).unwrap()
}

/// `K E[m^τ]` by summing the exact law of `τ`.
pub fn k_e_m_tau(k: u64, m: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 1;
    loop {
        let p = extinction_cdf(k, m, n) - extinction_cdf(k, m, n - 1);
        total += m.powi(n as i32) * p;
        // P(τ > n) <= K m^n
        if k as f64 * m.powi(n as i32) < 1e-18 {
            break;
        }
        n += 1;
    }
    k as f64 * total
}

/// Every trajectory from `k` that dies out within `horizon` generations,
/// with its probability.
pub fn enumerate_paths(k: u64, m: f64, horizon: u32) -> Vec<(Vec<u64>, f64)> {
    fn walk(sizes: &mut Vec<u64>, prob: f64, m: f64, horizon: u32, out: &mut Vec<(Vec<u64>, f64)>) {
        let x = *sizes.last().unwrap();
        if x == 0 {
            out.push((sizes.clone(), prob));
            return;
        }
        if sizes.len() as u32 > horizon {
            return;
        }
        for y in 0..=x {
            sizes.push(y);
            walk(sizes, prob * binomial_pmf(x, m, y), m, horizon, out);
            sizes.pop();
        }
    }
    let mut out = Vec::new();
    walk(&mut vec![k], 1.0, m, horizon, &mut out);
    out
}

/// Enumerated trajectories as weighted samples.
pub fn enumerated_samples(k: u64, m: f64, horizon: u32, u1: f64, u2: f64) -> Vec<PathSample> {
    enumerate_paths(k, m, horizon)
        .into_iter()
        .map(|(sizes, p)| sample_from_sizes(&sizes, IndexRule::Realized { u1, u2 }, p))
        .collect()
}

fn times(t: u32, u1: f64, u2: f64) -> (u32, u32) {
    ((u1 * t as f64).floor() as u32, (u2 * t as f64).floor() as u32)
}

fn powl(x: u64, l: u32) -> f64 {
    (x as f64).powi(l as i32)
}

/// `P(τ = t, X_{s2} = y)`.
pub fn joint_tau_forward_predictor(k: u64, m: f64, t: u32, y: u64, u1: f64, u2: f64) -> f64 {
    let (_, s2) = times(t, u1, u2);
    transition(k, y, m, s2) * extinction_pmf(y, m, t - s2)
}

/// `E[X_{s1}^l | τ = t, X_{s2} = y]`, by Bayes over `X_{s1}`.
pub fn forward_moment(k: u64, m: f64, t: u32, y: u64, l: u32, u1: f64, u2: f64) -> f64 {
    let (s1, s2) = times(t, u1, u2);
    let (mut num, mut den) = (0.0, 0.0);
    for x in y..=k {
        let w = transition(k, x, m, s1) * transition(x, y, m, s2 - s1);
        num += w * powl(x, l);
        den += w;
    }
    num / den
}

/// `E[X_{s2}^l | τ = t, X_{s1} = x]`; the future after `s2` only enters through `P(τ = t | X_{s2})`.
pub fn reverse_moment(m: f64, t: u32, x: u64, l: u32, u1: f64, u2: f64) -> f64 {
    let (s1, s2) = times(t, u1, u2);
    let (mut num, mut den) = (0.0, 0.0);
    for y in 0..=x {
        let w = transition(x, y, m, s2 - s1) * extinction_pmf(y, m, t - s2);
        num += w * powl(y, l);
        den += w;
    }
    num / den
}

/// `P(τ = t, X_{s1} = x)`.
pub fn joint_tau_reverse_predictor(k: u64, m: f64, t: u32, x: u64, u1: f64, u2: f64) -> f64 {
    let (s1, _) = times(t, u1, u2);
    transition(k, x, m, s1) * extinction_pmf(x, m, t - s1)
}

/// `E[X_{s1}^l | τ = t]`.
pub fn tau_moment(k: u64, m: f64, t: u32, l: u32, u1: f64) -> f64 {
    let s1 = (u1 * t as f64).floor() as u32;
    let (mut num, mut den) = (0.0, 0.0);
    for x in 0..=k {
        let w = transition(k, x, m, s1) * extinction_pmf(x, m, t - s1);
        num += w * powl(x, l);
        den += w;
    }
    num / den
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Largest relative disagreement between the estimator pipeline run on the
/// enumerated ensemble and the Bayes-formula oracle.
pub fn pipeline_vs_oracle(k: u64, m: f64, horizon: u32, l: u32, u1: f64, u2: f64) -> f64 {
    let samples = enumerated_samples(k, m, horizon, u1, u2);
    let p_total = extinction_cdf(k, m, horizon);
    let mut worst: f64 = 0.0;

    // total mass and the exchange factor
    let mass: f64 = samples.iter().map(|s| s.weight).sum();
    worst = worst.max(rel(mass, p_total));
    let factor_oracle = |dir: Direction| {
        (1..=horizon)
            .map(|t| {
                let (s1, s2) = times(t, u1, u2);
                let e = match dir {
                    Direction::Forward => s1 as i32 - s2 as i32,
                    Direction::Reverse => s2 as i32 - s1 as i32,
                };
                (extinction_cdf(k, m, t) - extinction_cdf(k, m, t - 1)) * m.powi(l as i32 * e)
            })
            .sum::<f64>()
            / p_total
    };

    for dir in [Direction::Forward, Direction::Reverse] {
        let factor = expectation_factor(&samples, l, m, dir);
        worst = worst.max(rel(factor, factor_oracle(dir)));
        let bins = binned_ratios(&samples, l, dir, Binning::ExactValue, factor);
        let mut agg = (0.0, 0.0);
        for b in &bins {
            let v = b.predictor.powf(1.0 / l as f64).round() as u64;
            let (p, moment) = match dir {
                Direction::Forward => (
                    joint_tau_forward_predictor(k, m, b.tau, v, u1, u2),
                    forward_moment(k, m, b.tau, v, l, u1, u2),
                ),
                Direction::Reverse => (
                    joint_tau_reverse_predictor(k, m, b.tau, v, u1, u2),
                    reverse_moment(m, b.tau, v, l, u1, u2),
                ),
            };
            worst = worst.max(rel(b.mass, p)).max(rel(b.response, moment));
            let ratio = moment / (powl(v, l) * factor_oracle(dir));
            if ratio.is_finite() {
                agg.0 += p * ratio;
                agg.1 += p;
            }
        }
        let piped = directional_ratio(&samples, l, m, dir, Binning::ExactValue);
        worst = worst.max(rel(piped, agg.0 / agg.1));
    }

    for g in tau_group_ratios(&samples, l, k, m) {
        let p = extinction_cdf(k, m, g.tau) - extinction_cdf(k, m, g.tau - 1);
        worst = worst
            .max(rel(g.mass, p))
            .max(rel(g.moment, tau_moment(k, m, g.tau, l, u1)));
    }
    worst
}

/// A quick configuration of each experiment kind.
pub fn small_configs() -> Vec<branchlab_core::ExperimentConfig> {
    [
        r#"{"kind":"simulate","distribution":{"kind":"bernoulli","p":0.5},"k":1000,"paths":300,"seed":1,"trajectories":3}"#,
        r#"{"kind":"coupled","distribution":{"kind":"bernoulli","p":0.5},"k":500,"paths":300,"seed":2,"levels":[0.1,0.3]}"#,
        r#"{"kind":"extinction-scaling","distribution":{"kind":"bernoulli","p":0.5},"k":[100,1000],"paths":300,"seed":3}"#,
        r#"{"kind":"clt-check","distribution":{"kind":"poisson","lambda":0.5},"k":10000,"indices":[1,2],"paths":600,"seed":4}"#,
        r#"{"kind":"conditional-moments","distribution":{"kind":"poisson","lambda":0.7},"k":[1000,10000],
            "u1":0.3,"u2":0.6,"l":1,"paths":600,"min_bin":10,"seed":5}"#,
        r#"{"kind":"conditional-on-tau","distribution":{"kind":"poisson","lambda":0.7},"k":[1000,10000],
            "u1":0.3,"u2":0.6,"l":2,"paths":600,"min_bin":10,"seed":6}"#,
        r#"{"kind":"invariance","distribution":{"kind":"poisson","lambda":0.7},"k":[10000],"u1":0.3,"u2":0.6,
            "epsilons":[-0.05,0.0,0.05],"window":0.2,"paths":3000,"seed":7}"#,
        r#"{"kind":"gaussian-cov","m":0.5,"indices":[1,2,3],"seed":8}"#,
    ]
    .iter()
    .map(|s| branchlab_core::ExperimentConfig::from_json(s).unwrap())
    .collect()
}
