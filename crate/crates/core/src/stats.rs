//! Small statistics helpers shared by the SDE validation and indicators.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation (divisor `N`).
pub fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    libm::sqrt(var)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v: Vec<f64> = x.iter().copied().filter(|v| !v.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fixed-bin histogram over `[lo, hi]`; values on `hi` go to the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if !v.is_finite() || v < lo || v > hi {
                continue;
            }
            let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
            counts[b.min(bins - 1)] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|c| *c as f64 / t).collect()
    }

    /// Sum of absolute differences of bin probabilities, in `[0, 2]`.
    pub fn l1_distance(&self, other: &Histogram) -> f64 {
        self.probabilities().iter().zip(other.probabilities()).map(|(a, b)| libm::fabs(a - b)).sum()
    }

    /// Number of modes: local maxima of the 3-bin moving average whose
    /// topographic prominence is at least `min_prominence` times the tallest
    /// smoothed bin.
    pub fn modes(&self, min_prominence: f64) -> usize {
        let smooth = moving_average3(&self.counts.iter().map(|c| *c as f64).collect::<Vec<_>>());
        let peak = smooth.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return 0;
        }
        prominent_peaks(&smooth, min_prominence * peak).len()
    }
}

fn moving_average3(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Indices of local maxima (plateaus reported at their first index) whose
/// prominence is at least `min_prominence`. Non-finite values act as
/// barriers of height negative infinity.
pub fn prominent_peaks(x: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let val = |i: usize| if x[i].is_finite() { x[i] } else { f64::NEG_INFINITY };
    let mut i = 0;
    while i < n {
        if !x[i].is_finite() {
            i += 1;
            continue;
        }
        // extent of a plateau
        let mut j = i;
        while j + 1 < n && val(j + 1) == val(i) {
            j += 1;
        }
        let left_lower = i == 0 || val(i - 1) < val(i);
        let right_lower = j + 1 == n || val(j + 1) < val(i);
        if left_lower && right_lower {
            let h = val(i);
            // walk outwards until a strictly higher point, tracking minima
            let mut left_min = h;
            let mut k = i;
            let mut left_bounded = false;
            while k > 0 {
                k -= 1;
                if val(k) > h {
                    left_bounded = true;
                    break;
                }
                left_min = left_min.min(val(k));
            }
            let mut right_min = h;
            let mut k = j;
            let mut right_bounded = false;
            while k + 1 < n {
                k += 1;
                if val(k) > h {
                    right_bounded = true;
                    break;
                }
                right_min = right_min.min(val(k));
            }
            let base = match (left_bounded, right_bounded) {
                (true, true) => left_min.max(right_min),
                (true, false) => left_min,
                (false, true) => right_min,
                (false, false) => left_min.min(right_min),
            };
            let base = if base.is_finite() { base } else { h.min(0.0) };
            if h - base >= min_prominence {
                peaks.push(i);
            }
        }
        i = j + 1;
    }
    peaks
}

/// Kendall's tau-b of `y` against its index, ignoring NaN entries.
pub fn kendall_tau_vs_index(y: &[f64]) -> f64 {
    let pts: Vec<(usize, f64)> = y.iter().copied().enumerate().filter(|(_, v)| !v.is_nan()).collect();
    let n = pts.len();
    let (mut concordant, mut discordant, mut ties_y) = (0i64, 0i64, 0i64);
    for a in 0..n {
        for b in a + 1..n {
            match pts[b].1.partial_cmp(&pts[a].1) {
                Some(Ordering::Greater) => concordant += 1,
                Some(Ordering::Less) => discordant += 1,
                _ => ties_y += 1,
            }
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    let denom = libm::sqrt(pairs * (pairs - ties_y as f64));
    if denom == 0.0 {
        return f64::NAN;
    }
    (concordant - discordant) as f64 / denom
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / libm::sqrt(sxx * syy)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}
