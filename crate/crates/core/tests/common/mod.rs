//! Test-only oracles and fixtures.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rtbarrier_core::rng::stream_rng;
use rtbarrier_core::{ClusteredSample, Group, ModelDataset, PopulationParams};

/// Mean of `W* = 1/(n+1) + Σ δ*_i R*_i` over every pseudo-sample, with
/// midranks among the `n` picked values.
pub fn brute_force_s(sample: &ClusteredSample) -> f64 {
    let clusters = sample.clusters();
    let n = clusters.len();
    let mut pick = vec![0usize; n];
    let mut total = 0.0;
    let mut count = 0usize;
    loop {
        let vals: Vec<f64> = (0..n).map(|i| clusters[i].values[pick[i]]).collect();
        let mut w = 1.0 / (n as f64 + 1.0);
        for i in 0..n {
            if clusters[i].groups[pick[i]] == Group::Treatment {
                let below = vals.iter().filter(|&&v| v < vals[i]).count() as f64;
                let ties = vals.iter().filter(|&&v| v == vals[i]).count() as f64;
                w += below + (ties + 1.0) / 2.0;
            }
        }
        total += w;
        count += 1;
        // Odometer over pseudo-sample picks.
        let mut i = 0;
        loop {
            if i == n {
                return total / count as f64;
            }
            pick[i] += 1;
            if pick[i] < clusters[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Every within-cluster label arrangement, each as a sample.
pub fn all_arrangements(sample: &ClusteredSample) -> Vec<ClusteredSample> {
    let mut per_cluster: Vec<Vec<Vec<bool>>> = Vec::new();
    for c in sample.clusters() {
        let m = c.len();
        let t = c.treatment_count();
        let arr: Vec<Vec<bool>> = (0u32..(1 << m))
            .filter(|mask| mask.count_ones() as usize == t)
            .map(|mask| (0..m).map(|k| mask >> k & 1 == 1).collect())
            .collect();
        per_cluster.push(arr);
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; per_cluster.len()];
    loop {
        let raw: Vec<Vec<(f64, bool)>> = sample
            .clusters()
            .iter()
            .zip(&idx)
            .enumerate()
            .map(|(i, (c, &j))| c.values.iter().copied().zip(per_cluster[i][j].iter().copied()).collect())
            .collect();
        out.push(ClusteredSample::from_pairs(&raw).unwrap());
        let mut i = 0;
        loop {
            if i == idx.len() {
                return out;
            }
            idx[i] += 1;
            if idx[i] < per_cluster[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Null sample: i.i.d. values, labels assigned at random within clusters
/// (each cluster keeps at least one of each group).
pub fn null_sample(rng: &mut ChaCha8Rng, clusters: usize, max_size: usize, grid: bool) -> ClusteredSample {
    let raw: Vec<Vec<(f64, bool)>> = (0..clusters)
        .map(|_| {
            let m = rng.random_range(2..=max_size);
            let t = rng.random_range(1..m);
            let mut labels: Vec<bool> = (0..m).map(|k| k < t).collect();
            rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), rng);
            labels
                .into_iter()
                .map(|l| {
                    let x: f64 = if grid {
                        // Millisecond grid, so ties occur.
                        (rng.random_range(100..200) as f64) / 1000.0
                    } else {
                        0.1 + rng.random::<f64>() * 0.1
                    };
                    (x, l)
                })
                .collect()
        })
        .collect();
    ClusteredSample::from_pairs(&raw).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 0)
}

pub fn men_incl() -> PopulationParams {
    PopulationParams::new(-1.910, -2.200, -1.178, 0.058, 0.320).unwrap()
}

/// Thirteen championship venues with eight heats each, heat sizes
/// cycling 6 to 9 (780 observations).
pub fn reference_structure() -> ModelDataset {
    let mut rows = Vec::new();
    for (v, year) in (1999..=2019).step_by(2).chain([2022, 2023]).enumerate() {
        for h in 0..8 {
            let size = 6 + (v * 8 + h) % 4;
            for _ in 0..size {
                rows.push((0.15, year as u16, format!("{year}-{h}")));
            }
        }
    }
    ModelDataset::from_triples(rows.iter().map(|(y, v, h)| (*y, *v, h.as_str()))).unwrap()
}

/// Independent GG log-density (Stacy form):
/// `log f = ln|ν| + θ ln θ + θ ln z - θ z - ln Γ(θ) - ln y`,
/// `z = (y/μ)^ν`, `θ = 1/(σ²ν²)`.
pub fn gg_log_density(y: f64, mu: f64, sigma: f64, nu: f64) -> f64 {
    let theta = 1.0 / (sigma * sigma * nu * nu);
    let lz = nu * (y / mu).ln();
    nu.abs().ln() + theta * theta.ln() + theta * lz - theta * lz.exp() - statrs::function::gamma::ln_gamma(theta) - y.ln()
}

/// Nelder–Mead minimizer.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[d] - vals[0]).abs() < 1e-13 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect() };
        let r = along(-1.0);
        let fr = f(&r);
        if fr < vals[0] {
            let e = along(-2.0);
            let fe = f(&e);
            if fe < fr {
                simplex[d] = e;
                vals[d] = fe;
            } else {
                simplex[d] = r;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = r;
            vals[d] = fr;
        } else {
            let c = if fr < vals[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&c);
            if fc < vals[d].min(fr) {
                simplex[d] = c;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = (0..d).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    simplex[best].clone()
}

/// KS distance of a sample from Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

/// Bundled reaction-time data, if present.
pub fn bundled_data() -> Option<PathBuf> {
    let dir = std::env::var_os("RTBARRIER_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let path = dir.join("reaction_times.csv");
    path.is_file().then_some(path)
}
