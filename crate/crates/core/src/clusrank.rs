//! Rank-sum test for clustered data with subunit-level grouping.
//!
//! A pseudo-sample takes one observation uniformly at random from each
//! cluster; its statistic is `W* = 1/(n+1) + Σ δ*_i R*_i`. The test
//! statistic `S` is the exact average of `W*` over all pseudo-samples.
//!
//! Cluster independence makes that average linear in the labels:
//!
//! ```text
//! S = 1/(n+1) + Σ_i (1/m_i) Σ_k δ_ik a_ik,
//! a_ik = 1 + Σ_{j≠i} [P(X*_j < x_ik) + ½ P(X*_j = x_ik)]
//! ```
//!
//! and the scores `a_ik` do not depend on the labels. Permuting labels
//! within clusters therefore only re-weights fixed scores.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClusteredSample, Group};
use crate::rng;
use crate::special::norm_cdf;

/// Smallest moment sample accepted by [`asymptotic_test`].
pub const MIN_MOMENT_PERMUTATIONS: usize = 10_000;

const SHARD: usize = 4096;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusRankError {
    #[error("n_permutations must be at least 1")]
    NoPermutations,
    #[error("moment estimation needs at least {MIN_MOMENT_PERMUTATIONS} permutations, got {0}")]
    TooFewMomentPermutations(usize),
    #[error("degenerate null: every permuted statistic is identical")]
    DegenerateNull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusRankResult {
    /// Observed statistic `S`.
    pub statistic: f64,
    /// Null mean of `S`, estimated from the permutation sample.
    pub null_mean: f64,
    pub null_sd: f64,
    pub z: f64,
    pub p_asymptotic: f64,
    /// Absent for moment-only (asymptotic) runs.
    pub p_permutation: Option<f64>,
    pub n_permutations: usize,
    pub seed: u64,
    /// Set when the permutation null has zero spread.
    pub degenerate: bool,
}

/// Label-independent score weights `a_ik / m_i` for each cluster.
struct Scores {
    offset: f64,
    weights: Vec<Vec<f64>>,
    labels: Vec<Vec<bool>>,
}

impl Scores {
    fn new(sample: &ClusteredSample) -> Self {
        let clusters = sample.clusters();
        let n = clusters.len();

        // Pooled values with weight 1/m_j, sorted, to evaluate Σ_j F_j(x).
        let mut pooled: Vec<(f64, f64)> = clusters
            .iter()
            .flat_map(|c| {
                let w = 1.0 / c.len() as f64;
                c.values.iter().map(move |&v| (v, w))
            })
            .collect();
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut distinct: Vec<(f64, f64, f64)> = Vec::new(); // (value, weight below, weight at)
        let mut below = 0.0;
        let mut i = 0;
        while i < pooled.len() {
            let v = pooled[i].0;
            let mut at = 0.0;
            while i < pooled.len() && pooled[i].0 == v {
                at += pooled[i].1;
                i += 1;
            }
            distinct.push((v, below, at));
            below += at;
        }
        let total_f = |x: f64| -> f64 {
            let idx = distinct
                .binary_search_by(|d| d.0.total_cmp(&x))
                .expect("value drawn from the pooled sample");
            distinct[idx].1 + 0.5 * distinct[idx].2
        };

        let mut weights = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for c in clusters {
            let m = c.len() as f64;
            let w: Vec<f64> = c
                .values
                .iter()
                .map(|&x| {
                    let own = c
                        .values
                        .iter()
                        .map(|&y| if y < x { 1.0 } else if y == x { 0.5 } else { 0.0 })
                        .sum::<f64>()
                        / m;
                    (1.0 + total_f(x) - own) / m
                })
                .collect();
            weights.push(w);
            labels.push(c.groups.iter().map(|g| *g == Group::Treatment).collect());
        }
        Scores {
            offset: 1.0 / (n as f64 + 1.0),
            weights,
            labels,
        }
    }

    fn observed(&self) -> f64 {
        self.offset
            + self
                .weights
                .iter()
                .zip(&self.labels)
                .map(|(w, l)| w.iter().zip(l).filter(|(_, t)| **t).map(|(w, _)| *w).sum::<f64>())
                .sum::<f64>()
    }

    /// `count` statistics under independent within-cluster label shuffles.
    fn permuted(&self, count: usize, seed: u64) -> Vec<f64> {
        let shards: Vec<_> = rng::shards(count, SHARD).collect();
        let max_m = self.weights.iter().map(Vec::len).max().unwrap_or(0);
        shards
            .into_par_iter()
            .map(|(k, _, len)| {
                let mut rng = rng::stream_rng(seed, k);
                let mut perm: Vec<usize> = Vec::with_capacity(max_m);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let mut s = self.offset;
                    for (w, l) in self.weights.iter().zip(&self.labels) {
                        perm.clear();
                        perm.extend(0..w.len());
                        perm.shuffle(&mut rng);
                        for (k, &src) in perm.iter().enumerate() {
                            if l[src] {
                                s += w[k];
                            }
                        }
                    }
                    out.push(s);
                }
                out
            })
            .collect::<Vec<_>>()
            .concat()
    }
}

/// Exact pseudo-sample average of the rank-sum statistic.
pub fn statistic_s(sample: &ClusteredSample) -> f64 {
    Scores::new(sample).observed()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn tolerance(center: f64) -> f64 {
    1e-9 * (1.0 + center.abs())
}

fn normal_p(z: f64) -> f64 {
    (2.0 * norm_cdf(-z.abs())).min(1.0)
}

/// Permutation test with labels shuffled within clusters.
///
/// The two-sided p-value is `(#{|S_b - m| >= |S - m|} + 1) / (B + 1)`
/// where `m` is the permutation mean. `z` and `p_asymptotic` are filled
/// from the same permutation moments.
pub fn permutation_test(
    sample: &ClusteredSample,
    n_permutations: usize,
    seed: u64,
) -> Result<ClusRankResult, ClusRankError> {
    if n_permutations == 0 {
        return Err(ClusRankError::NoPermutations);
    }
    let scores = Scores::new(sample);
    let observed = scores.observed();
    let null = scores.permuted(n_permutations, seed);
    let (mean, sd) = mean_sd(&null);
    let tol = tolerance(mean);
    let degenerate = !(sd > tol);
    if degenerate {
        return Ok(ClusRankResult {
            statistic: observed,
            null_mean: mean,
            null_sd: sd,
            z: 0.0,
            p_asymptotic: 1.0,
            p_permutation: Some(1.0),
            n_permutations,
            seed,
            degenerate,
        });
    }
    let dist = (observed - mean).abs();
    let extreme = null.iter().filter(|s| (*s - mean).abs() >= dist - tol).count();
    let z = (observed - mean) / sd;
    Ok(ClusRankResult {
        statistic: observed,
        null_mean: mean,
        null_sd: sd,
        z,
        p_asymptotic: normal_p(z),
        p_permutation: Some((extreme as f64 + 1.0) / (n_permutations as f64 + 1.0)),
        n_permutations,
        seed,
        degenerate,
    })
}

/// Normal approximation with null moments estimated from
/// `moment_permutations` within-cluster label shuffles.
pub fn asymptotic_test(
    sample: &ClusteredSample,
    moment_permutations: usize,
    seed: u64,
) -> Result<ClusRankResult, ClusRankError> {
    if moment_permutations < MIN_MOMENT_PERMUTATIONS {
        return Err(ClusRankError::TooFewMomentPermutations(moment_permutations));
    }
    let scores = Scores::new(sample);
    let observed = scores.observed();
    let (mean, sd) = mean_sd(&scores.permuted(moment_permutations, seed));
    if !(sd > tolerance(mean)) {
        return Err(ClusRankError::DegenerateNull);
    }
    let z = (observed - mean) / sd;
    Ok(ClusRankResult {
        statistic: observed,
        null_mean: mean,
        null_sd: sd,
        z,
        p_asymptotic: normal_p(z),
        p_permutation: None,
        n_permutations: moment_permutations,
        seed,
        degenerate: false,
    })
}
