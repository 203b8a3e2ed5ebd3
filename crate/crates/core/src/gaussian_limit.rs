//! The Gaussian limit sequence `θ_j` of standardized population sizes
//! `(X_j - K𝔪^j) / (𝔖√K)`, and its truncated variant at level `a`.
//!
//! Two cross-covariances are offered. [`CovarianceMode::Paper`] adds a cross
//! term: `cov(θ_j, θ_{j+n}) = 𝔪^n var(θ_j) + n𝔪^{j+n-1}` (for `a > 0` the
//! extra term becomes `Σ_{i=1}^n 𝔪^{i-1}(𝔪^{j+n-i} - a)`).
//! [`CovarianceMode::Martingale`] drops the extra term, which is what
//! `E(X_{j+n} | X_j) = 𝔪^n X_j` and the autoregression
//! `θ_{j+1} = 𝔪θ_j + ζ_j √(𝔪^j - a)` give. Neither is assumed correct here.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stopping::LimitOracle;

/// Eigenvalues down to `-PSD_TOLERANCE * λ_max` still count as nonnegative.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("index {index} is outside the validity range 1..={max} for a = {a}")]
    OutOfValidityRange { index: u32, max: u32, a: f64 },
    #[error("indices must be distinct, sorted and positive: {0:?}")]
    InvalidIndices(Vec<u32>),
    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },
    #[error("invalid parameters: m = {m}, a = {a}")]
    InvalidParameters { m: f64, a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Paper,
    #[default]
    Martingale,
}

/// Covariance structure of `θ` for offspring mean `m` and truncation level `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCovariance {
    m: f64,
    a: f64,
    mode: CovarianceMode,
    /// Largest usable index; `None` when `a = 0`.
    max_index: Option<u32>,
}

impl ThetaCovariance {
    pub fn new(m: f64, a: f64, mode: CovarianceMode) -> Result<Self, GaussianError> {
        let oracle = LimitOracle::new(m).map_err(|_| GaussianError::InvalidParameters { m, a })?;
        if !(0.0..1.0).contains(&a) {
            return Err(GaussianError::InvalidParameters { m, a });
        }
        let max_index = if a > 0.0 {
            Some(oracle.ell(a).expect("a checked above") - 1)
        } else {
            None
        };
        Ok(Self { m, a, mode, max_index })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn mode(&self) -> CovarianceMode {
        self.mode
    }

    /// `ℓ(a) - 1` for `a > 0`.
    pub fn max_index(&self) -> Option<u32> {
        self.max_index
    }

    fn check(&self, index: u32) -> Result<(), GaussianError> {
        match self.max_index {
            Some(max) if index > max || index == 0 => Err(GaussianError::OutOfValidityRange { index, max, a: self.a }),
            None if index == 0 => Err(GaussianError::OutOfValidityRange {
                index,
                max: u32::MAX,
                a: self.a,
            }),
            _ => Ok(()),
        }
    }

    /// `var(θ_j)` from `var(θ_1) = 1`, `var(θ_{j+1}) = 𝔪² var(θ_j) + 𝔪^j - a`.
    pub fn theta_variance(&self, j: u32) -> Result<f64, GaussianError> {
        self.check(j)?;
        let (mut var, mut mj) = (1.0, 1.0);
        for _ in 1..j {
            mj *= self.m;
            var = self.m * self.m * var + mj - self.a;
        }
        Ok(var)
    }

    /// `cov(θ_j, θ_{j+n})` under the configured mode.
    pub fn theta_covariance(&self, j: u32, n: u32) -> Result<f64, GaussianError> {
        self.check(j + n)?;
        let var = self.theta_variance(j)?;
        let base = self.m.powi(n as i32) * var;
        Ok(match self.mode {
            CovarianceMode::Martingale => base,
            CovarianceMode::Paper => base + self.paper_excess(j, n),
        })
    }

    /// Paper-mode minus martingale-mode covariance: `Σ_{i=1}^n 𝔪^{i-1}(𝔪^{j+n-i} - a)`,
    /// which is `n𝔪^{j+n-1}` when `a = 0`.
    pub fn paper_excess(&self, j: u32, n: u32) -> f64 {
        (1..=n)
            .map(|i| self.m.powi(i as i32 - 1) * (self.m.powi((j + n - i) as i32) - self.a))
            .sum()
    }

    /// Covariance matrix over sorted, distinct indices, without the PSD check.
    pub fn covariance_matrix_unchecked(&self, indices: &[u32]) -> Result<DMatrix<f64>, GaussianError> {
        if indices.is_empty() || indices[0] == 0 || indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GaussianError::InvalidIndices(indices.to_vec()));
        }
        let d = indices.len();
        let mut out = DMatrix::zeros(d, d);
        for p in 0..d {
            for q in p..d {
                let v = self.theta_covariance(indices[p], indices[q] - indices[p])?;
                out[(p, q)] = v;
                out[(q, p)] = v;
            }
        }
        Ok(out)
    }

    /// Covariance matrix, rejected when it is not positive semidefinite.
    pub fn covariance_matrix(&self, indices: &[u32]) -> Result<DMatrix<f64>, GaussianError> {
        let mat = self.covariance_matrix_unchecked(indices)?;
        let eig = SymmetricEigen::new(mat.clone()).eigenvalues;
        let min_eigenvalue = eig.iter().fold(f64::INFINITY, |acc, v| acc.min(*v));
        let max_eigenvalue = eig.iter().fold(0.0f64, |acc, v| acc.max(*v));
        if min_eigenvalue < -PSD_TOLERANCE * max_eigenvalue {
            return Err(GaussianError::NotPositiveSemiDefinite { min_eigenvalue });
        }
        Ok(mat)
    }

    /// One draw of `(θ_1, ..., θ_horizon)` by the autoregression
    /// `θ_{j+1} = 𝔪θ_j + ζ_j √(𝔪^j - a)`.
    pub fn sample_theta<R: RngCore + ?Sized>(&self, horizon: u32, rng: &mut R) -> Result<Vec<f64>, GaussianError> {
        self.check(horizon.max(1))?;
        let mut out = Vec::with_capacity(horizon as usize);
        let mut theta: f64 = StandardNormal.sample(rng);
        let mut mj = 1.0;
        for _ in 0..horizon {
            out.push(theta);
            mj *= self.m;
            let zeta: f64 = StandardNormal.sample(rng);
            theta = self.m * theta + zeta * (mj - self.a).max(0.0).sqrt();
        }
        Ok(out)
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(mat.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(*v))
}

/// Matrix as CSV rows, full precision.
pub fn matrix_csv(mat: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..mat.nrows() {
        let row: Vec<String> = (0..mat.ncols()).map(|c| format!("{:?}", mat[(r, c)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DrawHandle;
    use proptest::prelude::*;

    fn cov(m: f64, a: f64, mode: CovarianceMode) -> ThetaCovariance {
        ThetaCovariance::new(m, a, mode).unwrap()
    }

    #[test]
    fn variance_examples() {
        let c = cov(0.5, 0.0, CovarianceMode::Paper);
        assert_eq!(c.theta_variance(1).unwrap(), 1.0);
        assert_eq!(c.theta_variance(2).unwrap(), 0.75);
        assert!(c.theta_variance(0).is_err());
    }

    #[test]
    fn variance_matches_unrolled_form() {
        for m in [0.3, 0.5, 0.8] {
            let c = cov(m, 0.0, CovarianceMode::Martingale);
            for j in 1..=50u32 {
                let closed = m.powi(j as i32 - 1) * (1.0 - m.powi(j as i32)) / (1.0 - m);
                assert!((c.theta_variance(j).unwrap() - closed).abs() < 1e-12, "m={m} j={j}");
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let paper = cov(0.5, 0.0, CovarianceMode::Paper);
        let mart = cov(0.5, 0.0, CovarianceMode::Martingale);
        assert_eq!(paper.theta_covariance(1, 1).unwrap(), 1.0);
        assert_eq!(mart.theta_covariance(1, 1).unwrap(), 0.5);
        assert_eq!(paper.theta_covariance(3, 0).unwrap(), paper.theta_variance(3).unwrap());
    }

    #[test]
    fn modes_differ_by_excess_term() {
        for m in [0.3, 0.5, 0.8] {
            let p = cov(m, 0.0, CovarianceMode::Paper);
            let q = cov(m, 0.0, CovarianceMode::Martingale);
            for j in 1..8 {
                for n in 0..8 {
                    let d = p.theta_covariance(j, n).unwrap() - q.theta_covariance(j, n).unwrap();
                    let expected = n as f64 * m.powi((j + n) as i32 - 1);
                    assert!((d - expected).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn truncated_validity_range() {
        // 𝔪 = 0.5, a = 0.1: ℓ = 4, so indices 1..=3 are usable
        let c = cov(0.5, 0.1, CovarianceMode::Martingale);
        assert_eq!(c.max_index(), Some(3));
        assert!(c.theta_variance(3).is_ok());
        assert!(matches!(
            c.theta_variance(4),
            Err(GaussianError::OutOfValidityRange { .. })
        ));
        assert!(c.theta_covariance(2, 2).is_err());
        // var(θ_2) = 0.25 + 0.5 - 0.1
        assert!((c.theta_variance(2).unwrap() - 0.65).abs() < 1e-15);
    }

    #[test]
    fn matrices() {
        let c = cov(0.5, 0.0, CovarianceMode::Paper);
        assert_eq!(c.covariance_matrix(&[1]).unwrap(), DMatrix::from_element(1, 1, 1.0));
        assert!(c.covariance_matrix(&[2, 1]).is_err());
        let idx: Vec<u32> = (1..=10).collect();
        for m in [0.3, 0.5, 0.8] {
            assert!(cov(m, 0.0, CovarianceMode::Martingale).covariance_matrix(&idx).is_ok());
            assert!(matches!(
                cov(m, 0.0, CovarianceMode::Paper).covariance_matrix(&idx),
                Err(GaussianError::NotPositiveSemiDefinite { .. })
            ));
        }
    }

    #[test]
    fn csv_output() {
        let c = cov(0.5, 0.0, CovarianceMode::Martingale);
        let m = c.covariance_matrix(&[1, 2]).unwrap();
        assert_eq!(matrix_csv(&m), "1.0,0.5\n0.5,0.75\n");
    }

    #[test]
    fn sampler_second_moments() {
        let m = 0.5;
        let c = cov(m, 0.0, CovarianceMode::Martingale);
        let mut rng = DrawHandle::from_key(11);
        let n = 1_000_000;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        let (mut s1, mut s2) = (0.0, 0.0);
        let (mut q22, mut q12) = (0.0, 0.0);
        for _ in 0..n {
            let t = c.sample_theta(2, &mut rng).unwrap();
            s1 += t[0];
            s2 += t[1];
            s11 += t[0] * t[0];
            s22 += t[1] * t[1];
            s12 += t[0] * t[1];
            q22 += t[1].powi(4);
            q12 += (t[0] * t[1]).powi(2);
        }
        let nf = n as f64;
        let var2 = s22 / nf - (s2 / nf).powi(2);
        let cov12 = s12 / nf - s1 * s2 / nf / nf;
        let se_var2 = ((q22 / nf - (s22 / nf).powi(2)) / nf).sqrt();
        let se_cov12 = ((q12 / nf - (s12 / nf).powi(2)) / nf).sqrt();
        assert!((var2 - (m * m + m)).abs() < 4.0 * se_var2, "var2 {var2}");
        assert!((cov12 - m).abs() < 4.0 * se_cov12, "cov12 {cov12}");
        assert!((s11 / nf - 1.0).abs() < 0.01);
    }

    #[test]
    fn martingale_covariance_by_enumeration() {
        // bernoulli(𝔪) offspring, K = 3, two generations: exact cov(X_1, X_2)
        // over all 2^3 * 2^{X_1} outcomes, standardized by 𝔖²K.
        let (m, k) = (0.5f64, 3u32);
        let (mut e1, mut e2, mut e12) = (0.0, 0.0, 0.0);
        for first in 0u32..(1 << k) {
            let x1 = first.count_ones();
            let p1 = m.powi(x1 as i32) * (1.0 - m).powi((k - x1) as i32);
            for second in 0u32..(1 << x1) {
                let x2 = second.count_ones();
                let p = p1 * m.powi(x2 as i32) * (1.0 - m).powi((x1 - x2) as i32);
                e1 += p * x1 as f64;
                e2 += p * x2 as f64;
                e12 += p * (x1 * x2) as f64;
            }
        }
        let sigma2 = m * (1.0 - m);
        let exact = (e12 - e1 * e2) / (sigma2 * k as f64);
        let c = cov(m, 0.0, CovarianceMode::Martingale);
        assert!((exact - c.theta_covariance(1, 1).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn variances_positive_and_vanishing(m in 0.05f64..0.95) {
            let c = cov(m, 0.0, CovarianceMode::Paper);
            for j in 1..60 {
                prop_assert!(c.theta_variance(j).unwrap() > 0.0);
            }
            prop_assert!(c.theta_variance(400).unwrap() < 1e-6);
        }

        #[test]
        fn martingale_matrix_is_psd(m in 0.05f64..0.95, d in 1u32..10) {
            let idx: Vec<u32> = (1..=d).collect();
            prop_assert!(cov(m, 0.0, CovarianceMode::Martingale).covariance_matrix(&idx).is_ok());
        }
    }
}
