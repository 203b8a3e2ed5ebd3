//! Stopping times of realized paths and their deterministic limits.

use thiserror::Error;

use crate::process::{floor_level, PathRecord};

/// Pairs closer than this are treated as sitting on a `𝔪^l = a` boundary.
pub const BOUNDARY_GAP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoppingError {
    #[error("path was truncated at generation {generations} before extinction")]
    NotExtinct { generations: usize },
    #[error("path never reaches level {level} within {generations} generations")]
    NeverHit { level: u64, generations: usize },
    #[error("level a = {0} must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("offspring mean m = {0} must lie in (0, 1)")]
    InvalidMean(f64),
}

/// `τ_K`: index of the first zero of an extinct path.
pub fn extinction_time(path: &PathRecord) -> Result<u32, StoppingError> {
    match path.sizes.iter().position(|&x| x == 0) {
        Some(t) => Ok(t as u32),
        None => Err(StoppingError::NotExtinct {
            generations: path.sizes.len().saturating_sub(1),
        }),
    }
}

/// `τ_{a,K} = inf{l : X_l <= ⌊aK⌋}`.
pub fn hitting_time(path: &PathRecord, a: f64, k: u64) -> Result<u32, StoppingError> {
    let level = floor_level(a, k);
    path.sizes
        .iter()
        .position(|&x| x <= level)
        .map(|t| t as u32)
        .ok_or(StoppingError::NeverHit {
            level,
            generations: path.sizes.len().saturating_sub(1),
        })
}

/// Double-double accumulator; keeps `𝔪^l` accurate to ~1e-30 relative even
/// for `l` in the thousands, where plain repeated `f64` products drift.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn mul(self, m: f64) -> Dd {
        let p = self.0 * m;
        let e = self.0.mul_add(m, -p);
        let lo = self.1.mul_add(m, e);
        let hi = p + lo;
        Dd(hi, lo - (hi - p))
    }

    /// `self <= a`, with a relative slack of [`EQUALITY_SLACK`] so that decimal
    /// inputs such as `𝔪 = 0.8, a = 0.64` land on the boundary they name.
    fn at_most(self, a: f64) -> bool {
        (self.0 - a) + self.1 <= EQUALITY_SLACK * a
    }
}

/// Relative tolerance under which `𝔪^l` and `a` count as equal.
pub const EQUALITY_SLACK: f64 = 1e-12;

fn power(m: f64, l: u32) -> Dd {
    (0..l).fold(Dd(1.0, 0.0), |acc, _| acc.mul(m))
}

/// Deterministic limit objects for a fixed offspring mean `𝔪 ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOracle {
    m: f64,
}

impl LimitOracle {
    pub fn new(m: f64) -> Result<Self, StoppingError> {
        if !(m > 0.0 && m < 1.0) {
            return Err(StoppingError::InvalidMean(m));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `𝔪^n` by repeated multiplication.
    pub fn power(&self, n: u32) -> f64 {
        let p = power(self.m, n);
        p.0 + p.1
    }

    /// `ℓ(a) = min{l : 𝔪^l <= a}`; always at least 1 since `a < 1 = 𝔪^0`.
    pub fn ell(&self, a: f64) -> Result<u32, StoppingError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(StoppingError::InvalidLevel(a));
        }
        let guess = (a.ln() / self.m.ln()).ceil().max(0.0) as u32;
        let mut l = guess.saturating_sub(1);
        // the float guess is off by at most one either way
        while !power(self.m, l).at_most(a) {
            l += 1;
        }
        while l > 0 && power(self.m, l - 1).at_most(a) {
            l -= 1;
        }
        Ok(l)
    }

    /// `χ_{n+1}(𝔪, a) = 1{𝔪^{n+1} > a}`.
    pub fn chi(&self, n: u32, a: f64) -> u8 {
        !power(self.m, n + 1).at_most(a) as u8
    }

    /// `c = -1 / log 𝔪`.
    pub fn limit_constant(&self) -> f64 {
        -1.0 / self.m.ln()
    }

    /// `t_K = -log K / log 𝔪`.
    pub fn mean_time_scale(&self, k: u64) -> f64 {
        self.limit_constant() * (k as f64).ln()
    }

    /// Smallest `|𝔪^l - a|` over `l <= ℓ(a) + 1`, with the `l` attaining it.
    pub fn boundary_gap(&self, a: f64) -> Result<(u32, f64), StoppingError> {
        let ell = self.ell(a)?;
        Ok((0..=ell + 1)
            .map(|l| (l, (self.power(l) - a).abs()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best }))
    }

    /// True when `a` sits within [`BOUNDARY_GAP`] of some `𝔪^l`.
    pub fn near_boundary(&self, a: f64) -> bool {
        self.boundary_gap(a).map(|(_, g)| g < BOUNDARY_GAP).unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(sizes: &[u64]) -> PathRecord {
        PathRecord::from_sizes(sizes.to_vec())
    }

    #[test]
    fn extinction_time_examples() {
        assert_eq!(extinction_time(&record(&[5, 2, 0])), Ok(2));
        assert_eq!(extinction_time(&record(&[0])), Ok(0));
        assert_eq!(
            extinction_time(&record(&[5, 4, 3])),
            Err(StoppingError::NotExtinct { generations: 2 })
        );
    }

    #[test]
    fn hitting_time_examples() {
        let p = record(&[100, 30, 9, 0]);
        assert_eq!(hitting_time(&p, 0.1, 100), Ok(2));
        assert_eq!(hitting_time(&p, 0.0, 100), extinction_time(&p));
        assert!(matches!(
            hitting_time(&record(&[100, 50]), 0.1, 100),
            Err(StoppingError::NeverHit { level: 10, .. })
        ));
    }

    #[test]
    fn ell_examples() {
        let o = LimitOracle::new(0.5).unwrap();
        assert_eq!(o.ell(0.1), Ok(4));
        assert_eq!(o.ell(0.99), Ok(1));
        assert_eq!(o.ell(0.25), Ok(2));
        assert_eq!(o.ell(0.0), Err(StoppingError::InvalidLevel(0.0)));
        assert_eq!(o.ell(1.0), Err(StoppingError::InvalidLevel(1.0)));
    }

    #[test]
    fn ell_exact_boundaries() {
        // as binary doubles 0.1^3 > 0.001 and 0.8^2 > 0.64; the decimal boundary wins
        let o = LimitOracle::new(0.1).unwrap();
        assert_eq!(o.ell(0.001), Ok(3));
        let o = LimitOracle::new(0.8).unwrap();
        assert_eq!(o.ell(0.64), Ok(2));
        assert_eq!(o.ell(0.512), Ok(3));
    }

    #[test]
    fn chi_examples() {
        let o = LimitOracle::new(0.5).unwrap();
        assert_eq!(o.chi(0, 0.4), 1);
        assert_eq!(o.chi(3, 0.4), 0);
        for n in 0..200 {
            assert_eq!(o.chi(n, 0.0), 1);
        }
    }

    #[test]
    fn limit_constant_examples() {
        assert!((LimitOracle::new(0.5).unwrap().limit_constant() - std::f64::consts::LOG2_E).abs() < 1e-12);
        assert!((LimitOracle::new((-1.0f64).exp()).unwrap().limit_constant() - 1.0).abs() < 1e-12);
        assert!((LimitOracle::new(0.8).unwrap().limit_constant() - 4.481_420_117_724_551).abs() < 1e-9);
    }

    #[test]
    fn mean_time_scale_examples() {
        let o = LimitOracle::new(0.5).unwrap();
        assert_eq!(o.mean_time_scale(1), 0.0);
        assert!((o.mean_time_scale(1024) - 10.0).abs() < 1e-12);
        assert!(LimitOracle::new(1.0).is_err());
        assert!(LimitOracle::new(0.0).is_err());
    }

    #[test]
    fn boundary_detection() {
        let o = LimitOracle::new(0.5).unwrap();
        assert!(o.near_boundary(0.25));
        assert!(!o.near_boundary(0.1));
    }

    #[test]
    fn chi_agrees_with_ell_on_grid() {
        for mi in 1..20 {
            let o = LimitOracle::new(mi as f64 / 20.0).unwrap();
            for ai in 1..40 {
                let a = ai as f64 / 40.0;
                let ell = o.ell(a).unwrap();
                for n in 0..=64u32 {
                    assert_eq!(o.chi(n, a) == 1, n + 1 < ell, "m={} a={a} n={n}", o.m());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn ell_is_minimal(m in 0.01f64..0.99, a in 0.001f64..0.999) {
            let o = LimitOracle::new(m).unwrap();
            let l = o.ell(a).unwrap();
            prop_assert!(l >= 1);
            prop_assert!(power(m, l).at_most(a));
            prop_assert!(!power(m, l - 1).at_most(a));
        }

        #[test]
        fn ell_monotone(m in 0.05f64..0.95, a1 in 0.001f64..0.999, a2 in 0.001f64..0.999, dm in 0.0f64..0.04) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let o = LimitOracle::new(m).unwrap();
            prop_assert!(o.ell(hi).unwrap() <= o.ell(lo).unwrap());
            let o2 = LimitOracle::new(m + dm).unwrap();
            prop_assert!(o2.ell(lo).unwrap() >= o.ell(lo).unwrap());
        }

        #[test]
        fn hitting_time_nonincreasing_in_level(sizes in proptest::collection::vec(0u64..200, 1..30), a1 in 0.0f64..0.99, a2 in 0.0f64..0.99) {
            let mut sizes = sizes;
            sizes[0] = 200;
            sizes.push(0);
            let p = record(&sizes);
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            prop_assert!(hitting_time(&p, hi, 200).unwrap() <= hitting_time(&p, lo, 200).unwrap());
        }

        #[test]
        fn time_scale_identity(m in 0.01f64..0.99, k in 2u64..1_000_000) {
            let o = LimitOracle::new(m).unwrap();
            prop_assert!((o.mean_time_scale(k) / (k as f64).ln() - o.limit_constant()).abs() < 1e-9 * o.limit_constant());
        }
    }
}
