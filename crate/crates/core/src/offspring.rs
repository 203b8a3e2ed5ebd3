//! Offspring laws `ξ` and exact sampling of `n`-fold progeny sums.
//!
//! Geometric convention: support `{0, 1, 2, ...}` with `P(k) = (1 - p) p^k`,
//! mean `p / (1 - p)` and variance `p / (1 - p)^2`.

use std::collections::BTreeMap;

use rand::RngCore;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{unit_f64, DrawHandle};

/// Tolerance on the total mass of an explicit probability table.
pub const PMF_TOLERANCE: f64 = 1e-12;

/// JSON descriptor of an offspring law, e.g. `{"kind":"poisson","lambda":0.7}`
/// or `{"kind":"pmf","table":{"0":0.6,"1":0.4}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSpec {
    Bernoulli {
        p: f64,
    },
    Poisson {
        lambda: f64,
    },
    Geometric {
        p: f64,
    },
    Binomial {
        n: u64,
        p: f64,
    },
    Pmf {
        #[serde(with = "table_keys")]
        table: BTreeMap<u64, f64>,
    },
}

/// JSON object keys are strings; tables are keyed by offspring count.
mod table_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(table: &BTreeMap<u64, f64>, s: S) -> Result<S::Ok, S::Error> {
        table.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("table key {k:?} is not a nonnegative integer")))
            })
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("probability table sums to {total}, not 1")]
    NonNormalizedPmf { total: f64 },
    #[error("offspring mean {mean} >= 1; the process is not subcritical")]
    SupercriticalWithoutOverride { mean: f64 },
}

/// How an `n`-fold sum is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SumMode {
    /// Use the closed-form law of the sum when the family has one.
    #[default]
    Closure,
    /// Always add `n` individual draws.
    Direct,
}

#[derive(Debug, Clone)]
enum Law {
    Bernoulli {
        p: f64,
    },
    Poisson {
        lambda: f64,
        p0: f64,
    },
    Geometric {
        p: f64,
        ln_p: f64,
    },
    /// Cumulative table; index = offspring count.
    Table {
        cdf: Vec<f64>,
    },
}

/// An immutable offspring law with its analytic mean `𝔪` and variance `𝔖²`.
#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    spec: DistributionSpec,
    law: Law,
    mean: f64,
    variance: f64,
}

fn check_probability(name: &'static str, p: f64) -> Result<(), DistributionError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(DistributionError::InvalidParameter {
            name,
            value: p,
            reason: "must lie in [0, 1]",
        });
    }
    Ok(())
}

fn table_moments(pmf: &[f64]) -> (f64, f64) {
    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let var = pmf.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(2) * p).sum();
    (mean, var)
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    // log-space coefficients keep large n stable
    let ln_fact = |k: u64| statrs::function::factorial::ln_factorial(k);
    (0..=n)
        .map(|k| {
            if p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if k == n { 1.0 } else { 0.0 };
            }
            let ln = ln_fact(n) - ln_fact(k) - ln_fact(n - k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
            ln.exp()
        })
        .collect()
}

impl OffspringDistribution {
    /// Builds a subcritical law; a mean `>= 1` is rejected.
    pub fn new(spec: DistributionSpec) -> Result<Self, DistributionError> {
        Self::build(spec, false)
    }

    /// Builds a law without the subcriticality check.
    pub fn with_supercritical_override(spec: DistributionSpec) -> Result<Self, DistributionError> {
        Self::build(spec, true)
    }

    fn build(spec: DistributionSpec, allow_supercritical: bool) -> Result<Self, DistributionError> {
        let (law, mean, variance) = match &spec {
            &DistributionSpec::Bernoulli { p } => {
                check_probability("p", p)?;
                (Law::Bernoulli { p }, p, p * (1.0 - p))
            }
            &DistributionSpec::Poisson { lambda } => {
                if !lambda.is_finite() || lambda <= 0.0 {
                    return Err(DistributionError::InvalidParameter {
                        name: "lambda",
                        value: lambda,
                        reason: "must be positive and finite",
                    });
                }
                (
                    Law::Poisson {
                        lambda,
                        p0: (-lambda).exp(),
                    },
                    lambda,
                    lambda,
                )
            }
            &DistributionSpec::Geometric { p } => {
                check_probability("p", p)?;
                if p >= 1.0 {
                    return Err(DistributionError::InvalidParameter {
                        name: "p",
                        value: p,
                        reason: "geometric requires p < 1",
                    });
                }
                let q = 1.0 - p;
                (Law::Geometric { p, ln_p: p.ln() }, p / q, p / (q * q))
            }
            &DistributionSpec::Binomial { n, p } => {
                check_probability("p", p)?;
                let pmf = binomial_pmf(n, p);
                let (tm, tv) = table_moments(&pmf);
                let (mean, var) = (n as f64 * p, n as f64 * p * (1.0 - p));
                if (tm - mean).abs() > 1e-9 * mean.max(1.0) || (tv - var).abs() > 1e-9 * var.max(1.0) {
                    return Err(DistributionError::InvalidParameter {
                        name: "n",
                        value: n as f64,
                        reason: "binomial table moments do not match the analytic values",
                    });
                }
                (Law::Table { cdf: cumulative(&pmf) }, mean, var)
            }
            DistributionSpec::Pmf { table } => {
                if table.is_empty() {
                    return Err(DistributionError::NonNormalizedPmf { total: 0.0 });
                }
                if let Some(&p) = table.values().find(|&&p| !p.is_finite() || p < 0.0) {
                    return Err(DistributionError::InvalidParameter {
                        name: "table",
                        value: p,
                        reason: "probabilities must be nonnegative",
                    });
                }
                let total: f64 = table.values().sum();
                if (total - 1.0).abs() > PMF_TOLERANCE {
                    return Err(DistributionError::NonNormalizedPmf { total });
                }
                let max_k = *table.keys().next_back().unwrap();
                if max_k > 1 << 20 {
                    return Err(DistributionError::InvalidParameter {
                        name: "table",
                        value: max_k as f64,
                        reason: "support too large for a dense table",
                    });
                }
                let mut pmf = vec![0.0; max_k as usize + 1];
                for (&k, &p) in table {
                    pmf[k as usize] = p;
                }
                let (mean, var) = table_moments(&pmf);
                (Law::Table { cdf: cumulative(&pmf) }, mean, var)
            }
        };
        if mean >= 1.0 && !allow_supercritical {
            return Err(DistributionError::SupercriticalWithoutOverride { mean });
        }
        Ok(Self {
            spec,
            law,
            mean,
            variance,
        })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    /// `𝔪 = Eξ`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `𝔖² = var ξ`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// True when `n`-fold sums have a closed-form sampler.
    pub fn has_closure(&self) -> bool {
        !matches!(self.spec, DistributionSpec::Pmf { .. })
    }

    /// `P(ξ = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        match &self.law {
            Law::Bernoulli { p } => match k {
                0 => 1.0 - p,
                1 => *p,
                _ => 0.0,
            },
            Law::Poisson { lambda, .. } => {
                (k as f64 * lambda.ln() - lambda - statrs::function::factorial::ln_factorial(k)).exp()
            }
            Law::Geometric { p, .. } => (1.0 - p) * p.powf(k as f64),
            Law::Table { cdf } => match cdf.get(k as usize) {
                Some(c) if k == 0 => *c,
                Some(c) => c - cdf[k as usize - 1],
                None => 0.0,
            },
        }
    }

    /// One offspring count from 64 random bits, by inversion of the CDF.
    #[inline]
    pub fn from_bits(&self, bits: u64) -> u64 {
        let u = unit_f64(bits);
        match &self.law {
            Law::Bernoulli { p } => (u < *p) as u64,
            Law::Poisson { lambda, p0 } => {
                if *lambda > 30.0 {
                    let mut h = DrawHandle::from_key(bits);
                    return Poisson::new(*lambda).expect("validated lambda").sample(&mut h) as u64;
                }
                let (mut k, mut term, mut cum) = (0u64, *p0, *p0);
                while u >= cum {
                    k += 1;
                    term *= lambda / k as f64;
                    let next = cum + term;
                    if next == cum {
                        break;
                    }
                    cum = next;
                }
                k
            }
            Law::Geometric { p, ln_p } => {
                if *p == 0.0 {
                    return 0;
                }
                // 1 - u lies in (0, 1], so the log is finite
                ((1.0 - u).ln() / ln_p).floor() as u64
            }
            Law::Table { cdf } => {
                let k = cdf.partition_point(|&c| c <= u);
                k.min(cdf.len() - 1) as u64
            }
        }
    }

    /// One draw of `ξ`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        self.from_bits(rng.next_u64())
    }

    /// A draw distributed as the sum of `n` independent copies of `ξ`.
    pub fn sample_sum<R: RngCore + ?Sized>(&self, n: u64, rng: &mut R, mode: SumMode) -> u64 {
        if n == 0 {
            return 0;
        }
        if mode == SumMode::Direct || !self.has_closure() {
            return (0..n).map(|_| self.sample(rng)).sum();
        }
        match self.spec {
            DistributionSpec::Bernoulli { p } => binomial(n, p, rng),
            DistributionSpec::Binomial { n: trials, p } => binomial(n * trials, p, rng),
            DistributionSpec::Poisson { lambda } => poisson(n as f64 * lambda, rng),
            DistributionSpec::Geometric { p } => {
                if p == 0.0 {
                    return 0;
                }
                // NegBin(n, p) as a gamma-mixed Poisson
                let rate = Gamma::new(n as f64, p / (1.0 - p))
                    .expect("positive shape and scale")
                    .sample(rng);
                poisson(rate, rng)
            }
            DistributionSpec::Pmf { .. } => unreachable!("no closure for tables"),
        }
    }
}

fn binomial<R: RngCore + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    Binomial::new(n, p).expect("validated p").sample(rng)
}

fn poisson<R: RngCore + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("finite rate").sample(rng) as u64
}
