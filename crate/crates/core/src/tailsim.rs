//! Monte Carlo tail probabilities and barrier inversion under the fitted
//! marginal scale mixture.

use std::io::Write;

use rayon::slice::ParallelSliceMut;
use serde::{Deserialize, Serialize};

use crate::diagnostics::quantile7;
use crate::remixfit::{simulate_marginal, MixedGGModel, PopulationParams};

pub const MIN_DRAWS: usize = 100_000;
pub const DEFAULT_DRAWS: usize = 10_000_000;
/// Expected tail count needed before a quantile is reported.
pub const MIN_TAIL_COUNT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TailError {
    #[error("n_draws must be at least {MIN_DRAWS}, got {0}")]
    TooFewDraws(usize),
    #[error("threshold {0} is not a positive number of seconds")]
    BadThreshold(f64),
    #[error("target tail probability {0} is outside (0, 1)")]
    BadTarget(f64),
    #[error("insufficient draws for target probability {target}: {n_draws} draws give an expected tail count below {MIN_TAIL_COUNT}")]
    InsufficientDraws { target: f64, n_draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub threshold: f64,
    pub p_hat: f64,
    pub mc_standard_error: f64,
    /// `round(1 / p_hat)`; absent when `p_hat` is zero.
    pub one_in: Option<u64>,
    /// No draw fell below the threshold; `p_hat` holds the 95% upper bound
    /// `3 / n_draws` instead.
    pub upper_bound_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub target_tail_prob: f64,
    /// Rounded to milliseconds.
    pub barrier_seconds: f64,
    /// Unrounded empirical quantile.
    pub raw_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub thresholds_evaluated: Vec<ThresholdEstimate>,
    pub barriers: Vec<Barrier>,
    pub n_draws: usize,
    pub seed: u64,
    pub model: PopulationParams,
}

/// Marginal draws sorted ascending.
fn sorted_draws(params: &PopulationParams, n_draws: usize, seed: u64) -> Vec<f64> {
    let mut draws = simulate_marginal(params, n_draws, seed);
    draws.par_sort_unstable_by(f64::total_cmp);
    draws
}

fn estimate(sorted: &[f64], t: f64) -> ThresholdEstimate {
    let n = sorted.len() as f64;
    let below = sorted.partition_point(|&y| y < t);
    if below == 0 {
        return ThresholdEstimate {
            threshold: t,
            p_hat: 3.0 / n,
            mc_standard_error: 0.0,
            one_in: None,
            upper_bound_only: true,
        };
    }
    let p = below as f64 / n;
    ThresholdEstimate {
        threshold: t,
        p_hat: p,
        mc_standard_error: (p * (1.0 - p) / n).sqrt(),
        one_in: Some((1.0 / p).round() as u64),
        upper_bound_only: false,
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), TailError> {
    match thresholds.iter().find(|t| !(**t > 0.0)) {
        Some(&t) => Err(TailError::BadThreshold(t)),
        None => Ok(()),
    }
}

fn check_target(target: f64, n_draws: usize) -> Result<(), TailError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(TailError::BadTarget(target));
    }
    if (n_draws as f64) * target.min(1.0 - target) < MIN_TAIL_COUNT {
        return Err(TailError::InsufficientDraws { target, n_draws });
    }
    Ok(())
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn barrier(sorted: &[f64], target: f64) -> Barrier {
    let raw = quantile7(sorted, target);
    Barrier {
        target_tail_prob: target,
        barrier_seconds: round_ms(raw),
        raw_quantile: raw,
    }
}

/// `P(Y < t)` for each threshold, estimated from `n_draws` marginal draws.
pub fn tail_probabilities(
    model: &MixedGGModel,
    thresholds: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<TailReport, TailError> {
    tail_report(model, thresholds, &[], n_draws, seed)
}

/// Empirical `target`-quantile of `n_draws` marginal draws, in seconds
/// rounded to milliseconds.
pub fn invert_barrier(model: &MixedGGModel, target: f64, n_draws: usize, seed: u64) -> Result<f64, TailError> {
    let report = tail_report(model, &[], &[target], n_draws, seed)?;
    Ok(report.barriers[0].barrier_seconds)
}

/// Tail probabilities and barriers from one shared simulated sample.
pub fn tail_report(
    model: &MixedGGModel,
    thresholds: &[f64],
    targets: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<TailReport, TailError> {
    if n_draws < MIN_DRAWS {
        return Err(TailError::TooFewDraws(n_draws));
    }
    check_thresholds(thresholds)?;
    for &t in targets {
        check_target(t, n_draws)?;
    }
    let params = model.population();
    let sorted = sorted_draws(&params, n_draws, seed);
    Ok(TailReport {
        thresholds_evaluated: thresholds.iter().map(|&t| estimate(&sorted, t)).collect(),
        barriers: targets.iter().map(|&p| barrier(&sorted, p)).collect(),
        n_draws,
        seed,
        model: params,
    })
}

/// Whether `target` can be inverted at `n_draws`.
pub fn target_feasible(target: f64, n_draws: usize) -> bool {
    check_target(target, n_draws).is_ok()
}

impl TailReport {
    /// `threshold,p_hat,se,one_in,upper_bound_only` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold", "p_hat", "se", "one_in", "upper_bound_only"])?;
        for e in &self.thresholds_evaluated {
            w.write_record([
                e.threshold.to_string(),
                e.p_hat.to_string(),
                e.mc_standard_error.to_string(),
                e.one_in.map(|n| n.to_string()).unwrap_or_default(),
                e.upper_bound_only.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
