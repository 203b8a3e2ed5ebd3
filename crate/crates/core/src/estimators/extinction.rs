//! Growth of the extinction time: `τ_K / log K` against `c = -1/log 𝔪`, and
//! the scaled quantity `K·E𝔪^{τ_K}`.

use super::stats::{batch_estimate, median};
use super::{klabel, push_trend, Common, Entry, EstimatorError, ExperimentReport};
use crate::process::{run_path, Sampling, StopRule};
use crate::stopping::LimitOracle;

/// Extinction times of all paths at population `k`, grouped by batch, and the
/// number of paths that hit the cap (counted at the cap).
pub fn extinction_times(k: u64, common: &Common) -> (Vec<Vec<u32>>, u64) {
    let src = common.source(k);
    let cap = common.cap(k);
    let dist = &common.dist;
    let taus = common.plan.map_paths(|path| {
        let out = run_path(
            k,
            dist,
            &src,
            path,
            StopRule::UntilExtinction { cap },
            Sampling::Closure,
            |_, _| {},
        );
        (out.generations, out.extinct)
    });
    let exceeded = taus.iter().flatten().filter(|(_, extinct)| !extinct).count() as u64;
    (
        taus.into_iter()
            .map(|b| b.into_iter().map(|(t, _)| t).collect())
            .collect(),
        exceeded,
    )
}

pub fn extinction_scaling(ks: &[u64], common: &Common) -> Result<ExperimentReport, EstimatorError> {
    let m = common.require_subcritical()?;
    if ks.is_empty() || ks.iter().any(|&k| k < 10) {
        return Err(EstimatorError::Config("every K must be at least 10".into()));
    }
    let oracle = LimitOracle::new(m).expect("subcritical mean");
    let c = oracle.limit_constant();
    let tol = &common.tolerances;
    let mut report = ExperimentReport::new(
        "extinction-scaling",
        common.plan.batches(),
        common.plan.paths() * ks.len() as u64,
    );
    let (mut median_dev, mut scaled_dev) = (Vec::new(), Vec::new());
    for &k in ks {
        let log_k = (k as f64).ln();
        let (taus, exceeded) = extinction_times(k, common);
        if exceeded > 0 {
            report.note(format!(
                "{}: {exceeded} paths reached the cap and count at the cap",
                klabel(k)
            ));
        }
        let mut all: Vec<f64> = taus.iter().flatten().map(|&t| t as f64 / log_k).collect();
        let batch_medians: Vec<f64> = taus
            .iter()
            .map(|b| median(&mut b.iter().map(|&t| t as f64 / log_k).collect::<Vec<_>>()))
            .collect();
        let med = median(&mut all);
        let med_se = batch_estimate(&batch_medians).stderr;
        let mean = batch_estimate(
            &taus
                .iter()
                .map(|b| b.iter().map(|&t| t as f64).sum::<f64>() / (b.len() as f64 * log_k))
                .collect::<Vec<_>>(),
        );
        let scaled = batch_estimate(
            &taus
                .iter()
                .map(|b| k as f64 * b.iter().map(|&t| m.powi(t as i32)).sum::<f64>() / b.len() as f64)
                .collect::<Vec<_>>(),
        );
        let label = klabel(k);
        report.push(
            Entry::new(format!("median_tau_over_logK[{label}]"), med)
                .stderr(med_se)
                .target(c)
                .relative_within(tol.median_rel_tol),
        );
        report.push(
            Entry::new(format!("mean_tau_over_logK[{label}]"), mean.value)
                .stderr(mean.stderr)
                .target(c),
        );
        report.push(
            Entry::new(format!("K_E_m_tau[{label}]"), scaled.value)
                .stderr(scaled.stderr)
                .target(1.0),
        );
        report.plot_point("median_tau_over_logK_ratio", k as f64, med / c);
        report.plot_point("K_E_m_tau", k as f64, scaled.value);
        median_dev.push((med / c - 1.0).abs());
        scaled_dev.push((scaled.value - 1.0).abs());
    }
    push_trend(&mut report, "median_deviation_trend", &median_dev);
    push_trend(&mut report, "K_E_m_tau_deviation_trend", &scaled_dev);
    Ok(report)
}
