//! Goodness-of-fit summaries: Kolmogorov-Smirnov, probability-plot
//! correlation, histograms and Gaussian kernel density estimates.

use serde::{Deserialize, Serialize};

/// One-sample KS distance `sup |F_n - F|` against a continuous cdf.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i as f64 + 1.0) / n - f;
        d.max(lo).max(hi)
    })
}

/// Two-sample KS distance between empirical cdfs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
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
    d
}

/// Asymptotic Kolmogorov p-value for distance `d` at effective size `n`,
/// with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Probability-plot correlation of a sample against normal scores.
pub fn filliben(sample: &[f64]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = crate::remixfit::qq_pairs(sample).into_iter().unzip();
    pearson(&x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edge of the first bin.
    pub origin: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins anchored at multiples of `width`.
    pub fn new(values: &[f64], width: f64) -> Self {
        assert!(width > 0.0);
        if values.is_empty() {
            return Histogram {
                origin: 0.0,
                width,
                counts: Vec::new(),
            };
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = (lo / width).floor() as i64;
        let last = (hi / width).floor() as i64;
        let bins = (last - first + 1) as usize;
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / width).floor() as i64 - first) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Histogram {
            origin: first as f64 * width,
            width,
            counts,
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|i| self.origin + (i as f64 + 0.5) * self.width)
    }

    /// Counts scaled to a density.
    pub fn density(&self) -> Vec<f64> {
        let total: u64 = self.counts.iter().sum();
        self.counts
            .iter()
            .map(|&c| c as f64 / (total as f64 * self.width))
            .collect()
    }
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile7(&sorted, 0.75) - quantile7(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Type-7 sample quantile of already sorted data.
pub fn quantile7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian KDE on an evenly spaced grid, computed from linear binning so
/// it stays cheap for millions of points.
pub fn kde(values: &[f64], bandwidth: f64, grid_lo: f64, grid_hi: f64, points: usize) -> Vec<(f64, f64)> {
    assert!(points >= 2 && grid_hi > grid_lo && bandwidth > 0.0);
    let step = (grid_hi - grid_lo) / (points - 1) as f64;
    let mut mass = vec![0.0; points];
    for &v in values {
        let pos = (v - grid_lo) / step;
        if pos < 0.0 || pos > (points - 1) as f64 {
            continue;
        }
        let i = (pos.floor() as usize).min(points - 2);
        let frac = pos - i as f64;
        mass[i] += 1.0 - frac;
        mass[i + 1] += frac;
    }
    let n = values.len() as f64;
    let reach = ((5.0 * bandwidth / step).ceil() as usize).min(points);
    let kernel: Vec<f64> = (0..=reach)
        .map(|k| {
            let u = k as f64 * step / bandwidth;
            (-0.5 * u * u).exp() / (bandwidth * (2.0 * std::f64::consts::PI).sqrt())
        })
        .collect();
    (0..points)
        .map(|j| {
            let lo = j.saturating_sub(reach);
            let hi = (j + reach).min(points - 1);
            let d: f64 = (lo..=hi).map(|i| mass[i] * kernel[i.abs_diff(j)]).sum();
            (grid_lo + j as f64 * step, d / n)
        })
        .collect()
}
