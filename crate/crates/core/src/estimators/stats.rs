//! Small statistical toolkit: batch standard errors, the delete-one-batch
//! jackknife, medians, and goodness-of-fit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Point estimate with a Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean of per-batch values with standard error `sd / √B`.
pub fn batch_estimate(batch_values: &[f64]) -> Estimate {
    let b = batch_values.len() as f64;
    Estimate {
        value: mean(batch_values),
        stderr: if batch_values.len() > 1 {
            (sample_variance(batch_values) / b).sqrt()
        } else {
            f64::NAN
        },
    }
}

/// Delete-one-batch jackknife. `stat(None)` is the full-sample statistic and
/// `stat(Some(b))` the statistic with batch `b` left out.
pub fn jackknife(batches: usize, stat: impl Fn(Option<usize>) -> f64) -> Estimate {
    let full = stat(None);
    let leave: Vec<f64> = (0..batches).map(|b| stat(Some(b))).collect();
    let bf = batches as f64;
    let avg = mean(&leave);
    let ss: f64 = leave.iter().map(|v| (v - avg).powi(2)).sum();
    Estimate {
        value: full,
        stderr: ((bf - 1.0) / bf * ss).sqrt(),
    }
}

/// Median, averaging the two middle values for even counts. Sorts in place.
pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty sample");
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square goodness of fit of integer counts `observed[k]` against
/// probabilities `probs[k]`. Adjacent cells are merged left to right until each
/// expects at least `min_expected`; any remainder joins the last cell. Mass
/// missing from `probs` is placed in the last cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> GofResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    let missing = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    for (i, (&obs, &p)) in observed.iter().zip(probs).enumerate() {
        o += obs as f64;
        e += nf * p;
        if i + 1 == probs.len() {
            e += nf * missing;
        }
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(statistic)
    };
    GofResult {
        statistic,
        dof,
        p_value,
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} exp(-2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction). Conservative for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> GofResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    GofResult {
        statistic: d,
        dof: 0,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    }
}

/// Anderson-Darling test of normality with estimated mean and variance.
/// Returns the small-sample adjusted statistic `A*²` and its approximate
/// p-value (D'Agostino and Stephens, 1986).
pub fn anderson_darling_normal(xs: &[f64]) -> GofResult {
    let n = xs.len();
    let nf = n as f64;
    let mu = mean(xs);
    let sd = sample_variance(xs).sqrt();
    let mut z: Vec<f64> = xs.iter().map(|x| (x - mu) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut s = 0.0;
    for i in 0..n {
        let lo = normal.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let hi = normal.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2 * i + 1) as f64 * (lo.ln() + (1.0 - hi).ln());
    }
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p_value = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    GofResult {
        statistic: a,
        dof: 0,
        p_value: p_value.clamp(0.0, 1.0),
    }
}
