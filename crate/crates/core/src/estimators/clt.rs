//! Finite-dimensional check of the Gaussian limit of `(X_j - K𝔪^j) / (𝔖√K)`,
//! including which cross-covariance formula the simulation supports.

use super::stats::{anderson_darling_normal, batch_estimate, Estimate};
use super::{klabel, Common, Entry, EstimatorError, ExperimentReport, Verdict};
use crate::gaussian_limit::{CovarianceMode, ThetaCovariance};
use crate::process::{run_path, Sampling, StopRule};

/// Mean vector and row-major `d × d` covariance of one batch.
type Moments = (Vec<f64>, Vec<f64>);

fn batch_moments(z: &[Vec<f64>], d: usize) -> Moments {
    let n = z.len() as f64;
    let mut mu = vec![0.0; d];
    for row in z {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for row in z {
        for p in 0..d {
            for q in 0..d {
                cov[p * d + q] += (row[p] - mu[p]) * (row[q] - mu[q]) / (n - 1.0);
            }
        }
    }
    (mu, cov)
}

pub fn clt_covariance_check(k: u64, indices: &[u32], common: &Common) -> Result<ExperimentReport, EstimatorError> {
    let m = common.require_subcritical()?;
    if indices.len() < 2 || indices[0] == 0 || indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EstimatorError::Config(format!(
            "need at least two sorted, distinct, positive indices, got {indices:?}"
        )));
    }
    let d = indices.len();
    let horizon = *indices.last().expect("nonempty");
    let sigma = common.dist.std_dev();
    let sqrt_k = (k as f64).sqrt();
    let centers: Vec<f64> = indices.iter().map(|&i| k as f64 * m.powi(i as i32)).collect();
    let src = common.source(k);
    let dist = &common.dist;

    let z: Vec<Vec<Vec<f64>>> = common.plan.map_paths(|path| {
        let mut sizes = vec![0u64; horizon as usize + 1];
        run_path(
            k,
            dist,
            &src,
            path,
            StopRule::FixedHorizon(horizon),
            Sampling::Closure,
            |n, x| sizes[n as usize] = x,
        );
        indices
            .iter()
            .zip(&centers)
            .map(|(&i, c)| (sizes[i as usize] as f64 - c) / (sigma * sqrt_k))
            .collect()
    });
    let moments: Vec<Moments> = z.iter().map(|b| batch_moments(b, d)).collect();
    let est = |f: &dyn Fn(&Moments) -> f64| -> Estimate { batch_estimate(&moments.iter().map(f).collect::<Vec<_>>()) };

    let tol = &common.tolerances;
    let paper = ThetaCovariance::new(m, 0.0, CovarianceMode::Paper)?;
    let mart = ThetaCovariance::new(m, 0.0, CovarianceMode::Martingale)?;
    let mut report = ExperimentReport::new("clt-check", common.plan.batches(), common.plan.paths());
    report.note(format!("{}; standardized by sigma = {sigma}", klabel(k)));

    for (p, &i) in indices.iter().enumerate() {
        let mean = est(&|(mu, _)| mu[p]);
        report.push(
            Entry::new(format!("mean_theta[{i}]"), mean.value)
                .stderr(mean.stderr)
                .target(0.0)
                .within_se(tol.se_multiplier),
        );
    }
    for (p, &i) in indices.iter().enumerate() {
        let var = est(&|(_, c)| c[p * d + p]);
        report.push(
            Entry::new(format!("var_theta[{i}]"), var.value)
                .stderr(var.stderr)
                .target(mart.theta_variance(i)?)
                .within_se(tol.se_multiplier),
        );
    }

    let mut worst = [
        (CovarianceMode::Paper, 0.0f64, 0.0f64),
        (CovarianceMode::Martingale, 0.0, 0.0),
    ];
    let mut separation = None;
    for p in 0..d {
        for q in p + 1..d {
            let (i, j) = (indices[p], indices[q]);
            let c = est(&|(_, c)| c[p * d + q]);
            for (slot, theta) in worst.iter_mut().zip([&paper, &mart]) {
                let target = theta.theta_covariance(i, j - i)?;
                let zscore = (c.value - target) / c.stderr;
                slot.1 = slot.1.max(zscore.abs());
                slot.2 += zscore * zscore;
                let mode = mode_name(slot.0);
                report.push(
                    Entry::new(format!("cov_theta[{i},{j}]|{mode}"), c.value)
                        .stderr(c.stderr)
                        .target(target),
                );
            }
            if separation.is_none() {
                let gap = (paper.theta_covariance(i, j - i)? - mart.theta_covariance(i, j - i)?).abs();
                separation = Some((i, j, gap / c.stderr));
            }
        }
    }
    for (mode, max_z, chi2) in worst {
        report.push(Entry::new(format!("max_abs_z|{}", mode_name(mode)), max_z));
        report.push(Entry::new(format!("sum_sq_z|{}", mode_name(mode)), chi2));
    }
    let winner = if worst[1].2 <= worst[0].2 { worst[1] } else { worst[0] };
    report.note(format!("winning covariance mode: {}", mode_name(winner.0)));
    report.push(
        Entry::new(format!("winner_fits|{}", mode_name(winner.0)), winner.1)
            .target(tol.se_multiplier)
            .verdict(Verdict::from_bool(winner.1 <= tol.se_multiplier)),
    );
    if let Some((i, j, sep)) = separation {
        report.push(
            Entry::new(format!("mode_separation_se[{i},{j}]"), sep)
                .target(tol.separation_min_se)
                .verdict(Verdict::from_bool(sep >= tol.separation_min_se)),
        );
    }

    for p in [0, d - 1] {
        let column: Vec<f64> = z.iter().flatten().map(|row| row[p]).collect();
        let ad = anderson_darling_normal(&column);
        report.push(Entry::new(format!("anderson_darling_p[{}]", indices[p]), ad.p_value).target(tol.p_value_min));
    }
    Ok(report)
}

fn mode_name(mode: CovarianceMode) -> &'static str {
    match mode {
        CovarianceMode::Paper => "paper",
        CovarianceMode::Martingale => "martingale",
    }
}
