//! The Galton-Watson process `X_n`, the truncated process `X_n^(a)` and the
//! shifted process `Y_n^(a) = X_n^(a) - ⌊aK⌋`, driven by shared indexed draws.
//!
//! All per-individual draws come from [`RandomnessSource::individuals`], so the
//! `j`-th individual of generation `n` has the same offspring count in every
//! process that reads it. Whole-generation closure sampling reads a separate
//! stream and is only used for uncoupled paths.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::offspring::{OffspringDistribution, SumMode};
use crate::rng::{IndexedWords, RandomnessSource, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("current size {current} is below the floor {floor}")]
    PreconditionViolated { current: u64, floor: u64 },
    #[error("truncation levels must be sorted and lie in [0, 1): {0:?}")]
    InvalidLevels(Vec<f64>),
}

/// Rounds `x` to the nearest integer when it lies within 1e-9 (relative) of
/// it, so that decimal inputs land on the integer they name: 0.29 * 100 is
/// 28.999999999999996 in binary.
pub fn snap_to_integer(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `⌊aK⌋`, with the product snapped by [`snap_to_integer`].
pub fn floor_level(a: f64, k: u64) -> u64 {
    snap_to_integer(a * k as f64).floor() as u64
}

/// Default extinction cap: `multiplier * ⌈log K / (-log 𝔪)⌉`, at least `multiplier`.
pub fn default_extinction_cap(k: u64, m: f64, multiplier: f64) -> u32 {
    let scale = if k <= 1 || m <= 0.0 {
        1.0
    } else {
        ((k as f64).ln() / -m.ln()).ceil().max(1.0)
    };
    (multiplier * scale).ceil().min(u32::MAX as f64) as u32
}

/// When a simulation stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Run until the (base) process hits zero, giving up after `cap` generations.
    UntilExtinction { cap: u32 },
    /// Run exactly this many generations (stopping early at extinction for
    /// uncoupled paths).
    FixedHorizon(u32),
}

impl StopRule {
    fn limit(self) -> u32 {
        match self {
            StopRule::UntilExtinction { cap } => cap,
            StopRule::FixedHorizon(h) => h,
        }
    }
}

/// How uncoupled paths draw each generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Closed-form progeny sums where the family has them, O(1) per generation.
    #[default]
    Closure,
    /// One draw per individual from the indexed stream.
    Individual,
}

/// One realized trajectory `X_0 = K, X_1, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathRecord {
    pub initial_size: u64,
    pub sizes: Vec<u64>,
    pub extinct: bool,
    pub extinction_time: Option<u32>,
    /// The extinction cap was hit before the path died out.
    pub horizon_exceeded: bool,
}

impl PathRecord {
    /// Wraps a hand-written trajectory; it is extinct iff it contains a zero,
    /// and is cut after the first zero.
    pub fn from_sizes(mut sizes: Vec<u64>) -> Self {
        assert!(!sizes.is_empty(), "a path has at least X_0");
        let first_zero = sizes.iter().position(|&x| x == 0);
        if let Some(t) = first_zero {
            sizes.truncate(t + 1);
        }
        Self {
            initial_size: sizes[0],
            sizes,
            extinct: first_zero.is_some(),
            extinction_time: first_zero.map(|t| t as u32),
            horizon_exceeded: false,
        }
    }

    /// `X_n`, which is 0 after extinction and unknown past a cut-off horizon.
    pub fn size_at(&self, n: usize) -> Option<u64> {
        match self.sizes.get(n) {
            Some(&x) => Some(x),
            None if self.extinct => Some(0),
            None => None,
        }
    }

    /// Number of simulated generations.
    pub fn generations(&self) -> u32 {
        (self.sizes.len() - 1) as u32
    }
}

/// Summary returned by [`run_path`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathOutcome {
    pub generations: u32,
    pub extinct: bool,
    pub extinction_time: Option<u32>,
}

#[inline]
fn progeny(dist: &OffspringDistribution, words: &IndexedWords, count: u64) -> u64 {
    (1..=count).map(|j| dist.from_bits(words.word(j))).sum()
}

/// `X_{n+1} = Σ_{j=1}^{X_n} ξ_{n,j}` from the per-individual stream.
pub fn step(current: u64, dist: &OffspringDistribution, src: &RandomnessSource, path: u64, n: u32) -> u64 {
    if current == 0 {
        return 0;
    }
    progeny(dist, &src.individuals(path, n as u64), current)
}

/// Next generation drawn from the closure stream; not coupled to [`step`].
pub fn step_closure(current: u64, dist: &OffspringDistribution, src: &RandomnessSource, path: u64, n: u32) -> u64 {
    if current == 0 {
        return 0;
    }
    let mut h = src.handle(path, n as u64, Stream::Closure);
    dist.sample_sum(current, &mut h, SumMode::Closure)
}

/// `X_{n+1}^(a) = max{⌊aK⌋, Σ_{j=1}^{X_n^(a)} ξ_{n,j}}` on the same draws as [`step`].
pub fn step_truncated(
    current: u64,
    a: f64,
    k: u64,
    dist: &OffspringDistribution,
    src: &RandomnessSource,
    path: u64,
    n: u32,
) -> Result<u64, ProcessError> {
    let floor = floor_level(a, k);
    if current < floor {
        return Err(ProcessError::PreconditionViolated { current, floor });
    }
    Ok(floor.max(step(current, dist, src, path, n)))
}

/// Simulates one path, reporting every generation `(n, X_n)` to `visit`,
/// starting with `(0, K)`. Stops at the first zero or at the rule's limit.
pub fn run_path(
    k: u64,
    dist: &OffspringDistribution,
    src: &RandomnessSource,
    path: u64,
    stop: StopRule,
    sampling: Sampling,
    mut visit: impl FnMut(u32, u64),
) -> PathOutcome {
    let limit = stop.limit();
    let closure = sampling == Sampling::Closure && dist.has_closure();
    let mut x = k;
    visit(0, x);
    let mut n = 0u32;
    while x > 0 && n < limit {
        x = if closure {
            step_closure(x, dist, src, path, n)
        } else {
            step(x, dist, src, path, n)
        };
        n += 1;
        visit(n, x);
    }
    PathOutcome {
        generations: n,
        extinct: x == 0,
        extinction_time: (x == 0).then_some(n),
    }
}

/// Full trajectory of one path.
pub fn simulate_path(
    k: u64,
    dist: &OffspringDistribution,
    src: &RandomnessSource,
    path: u64,
    stop: StopRule,
    sampling: Sampling,
) -> PathRecord {
    let mut sizes = Vec::with_capacity(32);
    let out = run_path(k, dist, src, path, stop, sampling, |_, x| sizes.push(x));
    PathRecord {
        initial_size: k,
        sizes,
        extinct: out.extinct,
        extinction_time: out.extinction_time,
        horizon_exceeded: !out.extinct && matches!(stop, StopRule::UntilExtinction { .. }),
    }
}

/// `X^(a)`, `Y^(a)` and `I^(a)` for one truncation level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPaths {
    pub a: f64,
    /// `⌊aK⌋`.
    pub floor: u64,
    pub truncated: Vec<u64>,
    pub shifted: Vec<u64>,
    /// `I_n^(a)` for `n = 0 .. horizon - 1`.
    pub indicators: Vec<u8>,
}

/// Jointly realized base and truncated processes on one set of draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPaths {
    pub initial_size: u64,
    /// `X_n` for every simulated generation (zeros after extinction).
    pub base: Vec<u64>,
    pub levels: Vec<LevelPaths>,
    /// Number of simulated generations.
    pub horizon: u32,
}

impl CoupledPaths {
    /// The base process as an ordinary path record.
    pub fn base_record(&self) -> PathRecord {
        let mut rec = PathRecord::from_sizes(self.base.clone());
        rec.initial_size = self.initial_size;
        rec
    }
}

/// `S(c) = Σ_{j<=c} ξ_j` for every requested count, in one pass over the draws.
fn prefix_sums(dist: &OffspringDistribution, words: &IndexedWords, counts: &[u64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_unstable_by_key(|&i| counts[i]);
    let mut out = vec![0u64; counts.len()];
    let (mut j, mut sum) = (0u64, 0u64);
    for i in order {
        let target = counts[i];
        while j < target {
            j += 1;
            sum += dist.from_bits(words.word(j));
        }
        out[i] = sum;
    }
    out
}

/// Simulates `X`, and `X^(a)`, `Y^(a)`, `I^(a)` for every level, all reading
/// the same `ξ_{n,j}`. Under [`StopRule::UntilExtinction`] the run ends at the
/// generation where the base process first hits zero.
pub fn simulate_coupled(
    k: u64,
    dist: &OffspringDistribution,
    levels: &[f64],
    src: &RandomnessSource,
    path: u64,
    stop: StopRule,
) -> Result<CoupledPaths, ProcessError> {
    if levels.iter().any(|a| !(0.0..1.0).contains(a)) || levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(ProcessError::InvalidLevels(levels.to_vec()));
    }
    let floors: Vec<u64> = levels.iter().map(|&a| floor_level(a, k)).collect();
    let mut base = vec![k];
    let mut lv: Vec<LevelPaths> = levels
        .iter()
        .zip(&floors)
        .map(|(&a, &floor)| LevelPaths {
            a,
            floor,
            truncated: vec![k],
            shifted: vec![k - floor],
            indicators: Vec::new(),
        })
        .collect();
    let limit = stop.limit();
    let until_extinct = matches!(stop, StopRule::UntilExtinction { .. });
    let mut counts = Vec::with_capacity(1 + 2 * levels.len());
    let mut n = 0u32;
    while n < limit && !(until_extinct && *base.last().unwrap() == 0) {
        let x = *base.last().unwrap();
        counts.clear();
        counts.push(x);
        for (l, &f) in lv.iter().zip(&floors) {
            counts.push(*l.truncated.last().unwrap());
            counts.push(f);
        }
        let sums = prefix_sums(dist, &src.individuals(path, n as u64), &counts);
        base.push(sums[0]);
        for (i, l) in lv.iter_mut().enumerate() {
            let (sa, sf, f) = (sums[1 + 2 * i], sums[2 + 2 * i], floors[i]);
            let next = f.max(sa);
            l.truncated.push(next);
            l.shifted.push(next - f);
            // Σ_{j<=Y_n} ξ'_{n,j} against Σ_{j<=⌊aK⌋} (1 - ξ_{n,j})
            let shifted_progeny = sa as i128 - sf as i128;
            let deficit = f as i128 - sf as i128;
            l.indicators.push((shifted_progeny > deficit) as u8);
        }
        n += 1;
    }
    Ok(CoupledPaths {
        initial_size: k,
        base,
        levels: lv,
        horizon: n,
    })
}

/// Writes trajectories as `path,n,X[,Xa_<a>,Ya_<a>,I_<a>]...`. The indicator
/// column is empty on the last generation, where `I_n` is undefined.
pub struct TrajectoryWriter<W: Write> {
    out: W,
    levels: Vec<f64>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, levels: &[f64]) -> io::Result<Self> {
        write!(out, "path,n,X")?;
        for a in levels {
            write!(out, ",Xa_{a:.4},Ya_{a:.4},I_{a:.4}")?;
        }
        writeln!(out)?;
        Ok(Self {
            out,
            levels: levels.to_vec(),
        })
    }

    pub fn write_path(&mut self, path: u64, rec: &PathRecord) -> io::Result<()> {
        debug_assert!(self.levels.is_empty());
        for (n, x) in rec.sizes.iter().enumerate() {
            writeln!(self.out, "{path},{n},{x}")?;
        }
        Ok(())
    }

    pub fn write_coupled(&mut self, path: u64, c: &CoupledPaths) -> io::Result<()> {
        debug_assert_eq!(self.levels.len(), c.levels.len());
        for n in 0..=c.horizon as usize {
            write!(self.out, "{path},{n},{}", c.base[n])?;
            for l in &c.levels {
                write!(self.out, ",{},{},", l.truncated[n], l.shifted[n])?;
                if let Some(i) = l.indicators.get(n) {
                    write!(self.out, "{i}")?;
                }
            }
            writeln!(self.out)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::DistributionSpec;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn bern(p: f64) -> OffspringDistribution {
        OffspringDistribution::new(DistributionSpec::Bernoulli { p }).unwrap()
    }

    fn poisson(lambda: f64) -> OffspringDistribution {
        OffspringDistribution::new(DistributionSpec::Poisson { lambda }).unwrap()
    }

    fn point_mass_zero() -> OffspringDistribution {
        let table: BTreeMap<u64, f64> = [(0, 1.0)].into_iter().collect();
        OffspringDistribution::new(DistributionSpec::Pmf { table }).unwrap()
    }

    #[test]
    fn floor_level_snaps_decimal_products() {
        assert_eq!(floor_level(0.29, 100), 29);
        assert_eq!(floor_level(0.1, 100), 10);
        assert_eq!(floor_level(0.25, 10), 2);
        assert_eq!(floor_level(0.0, 1_000_000), 0);
        assert_eq!(floor_level(0.999, 1000), 999);
    }

    #[test]
    fn default_cap() {
        // log(1e4)/-log(0.5) = 13.29 -> 14 -> 140
        assert_eq!(default_extinction_cap(10_000, 0.5, 10.0), 140);
        assert_eq!(default_extinction_cap(1, 0.5, 10.0), 10);
        assert_eq!(default_extinction_cap(5, 0.0, 10.0), 10);
    }

    #[test]
    fn step_examples() {
        let src = RandomnessSource::new(1);
        assert_eq!(step(0, &poisson(0.7), &src, 0, 0), 0);
        assert_eq!(step(100, &point_mass_zero(), &src, 0, 0), 0);
        let dz = point_mass_zero();
        assert_eq!(step_truncated(100, 0.25, 100, &dz, &src, 0, 0), Ok(25));
        assert_eq!(
            step_truncated(10, 0.25, 100, &dz, &src, 0, 0),
            Err(ProcessError::PreconditionViolated { current: 10, floor: 25 })
        );
    }

    #[test]
    fn truncated_at_zero_level_is_step() {
        let src = RandomnessSource::new(2);
        let d = poisson(0.7);
        for path in 0..50 {
            for n in 0..5 {
                assert_eq!(
                    step_truncated(137, 0.0, 137, &d, &src, path, n).unwrap(),
                    step(137, &d, &src, path, n)
                );
            }
        }
    }

    #[test]
    fn simulate_path_examples() {
        let src = RandomnessSource::new(3);
        let rec = simulate_path(
            0,
            &bern(0.5),
            &src,
            0,
            StopRule::UntilExtinction { cap: 10 },
            Sampling::Closure,
        );
        assert_eq!(rec.sizes, vec![0]);
        assert_eq!(rec.extinction_time, Some(0));
        let rec = simulate_path(
            5,
            &point_mass_zero(),
            &src,
            0,
            StopRule::UntilExtinction { cap: 10 },
            Sampling::Closure,
        );
        assert_eq!(rec.sizes, vec![5, 0]);
        assert_eq!(rec.extinction_time, Some(1));
        let sticky =
            OffspringDistribution::with_supercritical_override(DistributionSpec::Bernoulli { p: 1.0 }).unwrap();
        let rec = simulate_path(
            5,
            &sticky,
            &src,
            0,
            StopRule::UntilExtinction { cap: 4 },
            Sampling::Closure,
        );
        assert_eq!(rec.sizes, vec![5; 5]);
        assert!(!rec.extinct && rec.horizon_exceeded);
        assert_eq!(rec.size_at(9), None);
        let rec = simulate_path(5, &sticky, &src, 0, StopRule::FixedHorizon(4), Sampling::Closure);
        assert!(!rec.horizon_exceeded);
    }

    #[test]
    fn closure_and_individual_paths_are_deterministic() {
        let src = RandomnessSource::new(4);
        let d = poisson(0.7);
        for sampling in [Sampling::Closure, Sampling::Individual] {
            let a = simulate_path(1000, &d, &src, 9, StopRule::UntilExtinction { cap: 500 }, sampling);
            let b = simulate_path(1000, &d, &src, 9, StopRule::UntilExtinction { cap: 500 }, sampling);
            assert_eq!(a, b);
            assert!(a.extinct);
        }
    }

    #[test]
    fn coupled_single_zero_level_is_base() {
        let src = RandomnessSource::new(5);
        let d = poisson(0.6);
        let c = simulate_coupled(200, &d, &[0.0], &src, 3, StopRule::UntilExtinction { cap: 1000 }).unwrap();
        assert_eq!(c.levels[0].truncated, c.base);
        assert_eq!(c.levels[0].shifted, c.base);
        let rec = c.base_record();
        assert!(rec.extinct);
        assert_eq!(rec.extinction_time, Some(c.horizon));
        // the base equals an individually sampled uncoupled path
        let solo = simulate_path(
            200,
            &d,
            &src,
            3,
            StopRule::UntilExtinction { cap: 1000 },
            Sampling::Individual,
        );
        assert_eq!(solo, rec);
    }

    #[test]
    fn coupled_rejects_bad_levels() {
        let src = RandomnessSource::new(5);
        let d = bern(0.5);
        assert!(simulate_coupled(10, &d, &[0.5, 0.2], &src, 0, StopRule::FixedHorizon(3)).is_err());
        assert!(simulate_coupled(10, &d, &[1.0], &src, 0, StopRule::FixedHorizon(3)).is_err());
    }

    #[test]
    fn lower_sandwich_needs_unit_offspring() {
        // With two or more children per individual, individuals beyond X_n can
        // push X^(a) - X past ⌊aK⌋, so Y^(a) <= X is not pathwise for poisson.
        let src = RandomnessSource::new(6);
        let d = poisson(0.7);
        let mut violations = 0;
        for path in 0..2000 {
            let c = simulate_coupled(10, &d, &[0.5], &src, path, StopRule::FixedHorizon(12)).unwrap();
            let l = &c.levels[0];
            for n in 0..=c.horizon as usize {
                assert!(c.base[n] <= l.truncated[n]);
                if l.shifted[n] > c.base[n] {
                    violations += 1;
                }
            }
        }
        assert!(violations > 0);
    }

    #[test]
    fn trajectory_csv_layout() {
        let src = RandomnessSource::new(7);
        let c = simulate_coupled(4, &point_mass_zero(), &[0.5], &src, 0, StopRule::FixedHorizon(1)).unwrap();
        let mut w = TrajectoryWriter::new(Vec::new(), &[0.5]).unwrap();
        w.write_coupled(0, &c).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, "path,n,X,Xa_0.5000,Ya_0.5000,I_0.5000\n0,0,4,4,2,0\n0,1,0,2,0,\n");
    }

    fn check_coupled(c: &CoupledPaths) -> Result<(), TestCaseError> {
        let k = c.initial_size;
        for (i, l) in c.levels.iter().enumerate() {
            let ell_hit = c.base.iter().position(|&x| x <= l.floor).unwrap_or(c.base.len());
            for n in 0..=c.horizon as usize {
                prop_assert_eq!(l.shifted[n] + l.floor, l.truncated[n]);
                prop_assert!(l.truncated[n] >= l.floor);
                prop_assert!(l.shifted[n] <= c.base[n] && c.base[n] <= l.truncated[n]);
                if l.a == 0.0 {
                    prop_assert_eq!(l.truncated[n], c.base[n]);
                }
                if n > 0 {
                    prop_assert_eq!(l.indicators[n - 1] == 1, l.shifted[n] > 0);
                    if c.base[n - 1] == 0 {
                        prop_assert_eq!(c.base[n], 0);
                    }
                }
            }
            // a2 < a1 coincide before τ_{a1,K}
            for l2 in &c.levels[..i] {
                for n in 0..ell_hit.min(c.base.len()) {
                    prop_assert_eq!(l.truncated[n], l2.truncated[n]);
                }
            }
            let _ = k;
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bernoulli_coupling_invariants(seed in any::<u64>(), k in 1u64..400, p in 0.05f64..0.95,
                                         mut levels in proptest::collection::vec(0.0f64..0.99, 1..4)) {
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let src = RandomnessSource::new(seed);
            let c = simulate_coupled(k, &bern(p), &levels, &src, 0, StopRule::UntilExtinction { cap: 10_000 }).unwrap();
            check_coupled(&c)?;
        }

        #[test]
        fn upper_sandwich_any_law(seed in any::<u64>(), k in 1u64..300, lambda in 0.1f64..0.95, a in 0.0f64..0.99) {
            let src = RandomnessSource::new(seed);
            let c = simulate_coupled(k, &poisson(lambda), &[a], &src, 0, StopRule::FixedHorizon(20)).unwrap();
            let l = &c.levels[0];
            for n in 0..=c.horizon as usize {
                prop_assert!(c.base[n] <= l.truncated[n]);
                prop_assert_eq!(l.shifted[n] + l.floor, l.truncated[n]);
            }
        }
    }
}
