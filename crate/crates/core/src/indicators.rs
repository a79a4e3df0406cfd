//! Early-warning indicators on latent trajectories: Onsager-Machlup ratio,
//! multichannel sample entropy, transition probability between regions, and
//! a sliding standard-deviation baseline.
//!
//! Time indices are 0-based sample positions. A sliding window "ending at
//! `t`" covers samples `t - l + 1 ..= t`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::sde::{simulate_with, LatentSde, DEFAULT_GUARD};
use crate::stats::population_std;
use crate::{seed, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorKind {
    OmRatio,
    SampleEntropy,
    TransitionProbability,
    StdBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum IndicatorParams {
    OmRatio { l: usize, l_denominator: usize, dt: f64 },
    SampleEntropy { params: SampEnParams, stride: usize },
    TransitionProbability { regions: RegionSpec, ensemble_size: usize, ensemble: TpEnsemble },
    StdBaseline { l: usize },
}

/// Where the transition-probability ensemble comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum TpEnsemble {
    /// The first `E` observed points as time origins.
    Observed,
    /// `paths_per_origin` simulated paths from each of the first `E` points.
    MonteCarlo { paths_per_origin: usize, horizon: usize, seed: u64 },
}

/// Indicator values at increasing time indices; NaN marks undefined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    times: Vec<usize>,
    values: Vec<f64>,
    kind: IndicatorKind,
    params: IndicatorParams,
    /// Times whose value is reported as NaN but is really `+inf` (sample
    /// entropy with matches at length `m` and none at `m + p`).
    infinite: Vec<usize>,
}

impl IndicatorSeries {
    pub fn new(times: Vec<usize>, values: Vec<f64>, kind: IndicatorKind, params: IndicatorParams) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(String::from("indicator times must be strictly increasing")));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::Parameter(String::from("indicator values must be finite or NaN")));
        }
        Ok(Self { times, values, kind, params, infinite: Vec::new() })
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> IndicatorKind {
        self.kind
    }

    pub fn params(&self) -> &IndicatorParams {
        &self.params
    }

    pub fn infinite(&self) -> &[usize] {
        &self.infinite
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_nan(&self) -> bool {
        self.values.iter().all(|v| v.is_nan())
    }

    /// Time of the largest non-NaN value (first one on ties).
    pub fn argmax_time(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (t, v) in self.times.iter().zip(&self.values) {
            if !v.is_nan() && best.is_none_or(|(_, b)| *v > b) {
                best = Some((*t, *v));
            }
        }
        best.map(|(t, _)| t)
    }
}

/// `OM = 1/2 sum_s [ |zdot - mu|^2 / eta^2 + div mu ] dt` over samples
/// `start ..= end`, with `zdot` by central differences. `z` must be in the
/// coordinates the model was fitted in.
pub fn om_functional(z: &Matrix, sde: &LatentSde, start: usize, end: usize, dt: f64) -> Result<f64> {
    let n = z.rows();
    if start == 0 || end + 1 >= n || start > end {
        return Err(Error::Window { start, end, len: n });
    }
    if z.cols() != sde.dim() {
        return Err(Error::DimensionMismatch { expected: sde.dim(), got: z.cols() });
    }
    Ok((start..=end).map(|s| om_integrand(z, sde, s, dt)).sum::<f64>() * dt)
}

fn om_integrand(z: &Matrix, sde: &LatentSde, s: usize, dt: f64) -> f64 {
    let x = z.row(s);
    let mu = sde.drift(x);
    let eta2 = sde.diffusion_sq(x);
    let mut acc = sde.divergence(x);
    for c in 0..z.cols() {
        let zdot = (z[(s + 1, c)] - z[(s - 1, c)]) / (2.0 * dt);
        let r = zdot - mu[c];
        acc += r * r / eta2[c];
    }
    0.5 * acc
}

/// Denominator window length `round(0.9 l)`, rounding halves up.
pub fn om_denominator_length(l: usize) -> usize {
    (9 * l + 5) / 10
}

/// `OM(l, t) / OM(l', t - l')` with `l' = round(0.9 l)` for every `t` where
/// both windows fit.
pub fn om_ratio_series(z: &Matrix, sde: &LatentSde, l: usize, dt: f64) -> Result<IndicatorSeries> {
    if l < 10 {
        return Err(Error::Parameter(format!("OM window must be at least 10 samples, got {l}")));
    }
    if z.cols() != sde.dim() {
        return Err(Error::DimensionMismatch { expected: sde.dim(), got: z.cols() });
    }
    let n = z.rows();
    let lp = om_denominator_length(l);
    let first = l.max(2 * lp);
    if n < 2 || first > n - 2 {
        return Err(Error::Window { start: 1, end: first, len: n });
    }
    // prefix[k] = sum of the integrand over samples 1..k
    let mut prefix = vec![0.0; n];
    for s in 1..n - 1 {
        prefix[s] = prefix[s - 1] + om_integrand(z, sde, s, dt);
    }
    let window = |end: usize, len: usize| (prefix[end] - prefix[end - len]) * dt;
    let mut times = Vec::with_capacity(n - 1 - first);
    let mut values = Vec::with_capacity(n - 1 - first);
    for t in first..=n - 2 {
        let num = window(t, l);
        let den = window(t - lp, lp);
        times.push(t);
        values.push(if libm::fabs(den) < 1e-12 { f64::NAN } else { num / den });
    }
    IndicatorSeries::new(times, values, IndicatorKind::OmRatio, IndicatorParams::OmRatio { l, l_denominator: lp, dt })
}

/// Sample-entropy parameters: template length `m`, lookahead `p`, template
/// stride `q`, tolerance multiplier `r` and window length `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampEnParams {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub r: f64,
    pub l: usize,
}

impl Default for SampEnParams {
    fn default() -> Self {
        Self { m: 5, p: 10, q: 1, r: 2.0, l: 300 }
    }
}

impl SampEnParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.p < 1 || self.q < 1 {
            return Err(Error::Parameter(String::from("sample entropy needs m, p, q >= 1")));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::Parameter(format!("tolerance multiplier must be positive, got {}", self.r)));
        }
        if self.l < self.m + self.p + self.q {
            return Err(Error::Parameter(format!(
                "window {} shorter than m + p + q = {}",
                self.l,
                self.m + self.p + self.q
            )));
        }
        Ok(())
    }

    /// Template start offsets `k q` for `k = 1 ..= n_z`, the largest `k` with
    /// `k q + m + p <= l`.
    pub fn template_starts(&self) -> impl Iterator<Item = usize> + '_ {
        let n_z = self.l.saturating_sub(self.m + self.p) / self.q;
        (1..=n_z).map(move |k| k * self.q)
    }
}

/// Match counts behind one sample-entropy value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampEnCounts {
    /// Close pairs at length `m + p`.
    pub a: u64,
    /// Close pairs at length `m`.
    pub b: u64,
    /// `-ln(A / B)`, or NaN when undefined.
    pub value: f64,
    /// `A = 0 < B`: the entropy is `+inf`, reported as NaN.
    pub infinite: bool,
}

impl SampEnCounts {
    pub(crate) fn from_counts(a: u64, b: u64) -> Self {
        if b == 0 {
            Self { a, b, value: f64::NAN, infinite: false }
        } else if a == 0 {
            Self { a, b, value: f64::NAN, infinite: true }
        } else {
            Self { a, b, value: -libm::log(a as f64 / b as f64), infinite: false }
        }
    }

    pub(crate) fn degenerate() -> Self {
        Self { a: 0, b: 0, value: f64::NAN, infinite: false }
    }
}

/// Sample entropy of the first `params.l` rows of `window` (rows are time,
/// columns are channels).
pub fn sample_entropy(window: &Matrix, params: &SampEnParams) -> Result<SampEnCounts> {
    params.validate()?;
    if window.rows() < params.l {
        return Err(Error::Window { start: 0, end: params.l - 1, len: window.rows() });
    }
    let channels: Vec<Vec<f64>> = (0..window.cols()).map(|c| window.column(c)[..params.l].to_vec()).collect();
    Ok(sampen_channels(&channels, params))
}

fn sampen_channels(channels: &[Vec<f64>], params: &SampEnParams) -> SampEnCounts {
    let sigma: Vec<f64> = channels.iter().map(|x| population_std(x)).collect();
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return SampEnCounts::degenerate();
    }
    let starts: Vec<usize> = params.template_starts().collect();
    let (m, full) = (params.m, params.m + params.p);
    let (mut a, mut b) = (0u64, 0u64);
    for (ca, xa) in channels.iter().enumerate() {
        for (cb, xb) in channels.iter().enumerate().skip(ca) {
            let tol = params.r * sigma[ca].max(sigma[cb]);
            for (i, &si) in starts.iter().enumerate() {
                // same channel: unordered pairs i < j; across channels: all pairs
                let from = if ca == cb { i + 1 } else { 0 };
                for &sj in &starts[from..] {
                    let close = |k: usize| libm::fabs(xa[si + k] - xb[sj + k]) < tol;
                    if !(0..m).all(close) {
                        continue;
                    }
                    b += 1;
                    if (m..full).all(close) {
                        a += 1;
                    }
                }
            }
        }
    }
    SampEnCounts::from_counts(a, b)
}

/// Sample entropy over windows of `params.l` samples ending at
/// `l - 1, l - 1 + stride, ...`.
pub fn sample_entropy_series(z: &Matrix, params: &SampEnParams) -> Result<IndicatorSeries> {
    sample_entropy_series_strided(z, params, 1)
}

pub fn sample_entropy_series_strided(z: &Matrix, params: &SampEnParams, stride: usize) -> Result<IndicatorSeries> {
    params.validate()?;
    if stride == 0 {
        return Err(Error::Parameter(String::from("stride must be at least 1")));
    }
    let n = z.rows();
    if n < params.l {
        return Err(Error::Window { start: 0, end: params.l - 1, len: n });
    }
    let columns: Vec<Vec<f64>> = (0..z.cols()).map(|c| z.column(c)).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut infinite = Vec::new();
    let mut t = params.l - 1;
    while t < n {
        let start = t + 1 - params.l;
        let window: Vec<Vec<f64>> = columns.iter().map(|c| c[start..=t].to_vec()).collect();
        let counts = sampen_channels(&window, params);
        if counts.infinite {
            infinite.push(t);
        }
        times.push(t);
        values.push(counts.value);
        t += stride;
    }
    let mut s = IndicatorSeries::new(
        times,
        values,
        IndicatorKind::SampleEntropy,
        IndicatorParams::SampleEntropy { params: *params, stride },
    )?;
    s.infinite = infinite;
    Ok(s)
}

/// One coordinate of a box: bounds may be absent (unbounded) and open or
/// closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub lower_closed: bool,
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default)]
    pub upper_closed: bool,
}

impl Interval {
    pub const ALL: Interval = Interval { lower: None, lower_closed: false, upper: None, upper_closed: false };

    /// `(-inf, x]`
    pub fn at_most(x: f64) -> Self {
        Self { upper: Some(x), upper_closed: true, ..Self::ALL }
    }

    /// `(x, inf)`
    pub fn above(x: f64) -> Self {
        Self { lower: Some(x), lower_closed: false, ..Self::ALL }
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = match self.lower {
            None => true,
            Some(l) => x > l || (self.lower_closed && x == l),
        };
        let hi_ok = match self.upper {
            None => true,
            Some(u) => x < u || (self.upper_closed && x == u),
        };
        lo_ok && hi_ok
    }

    fn disjoint(&self, other: &Interval) -> bool {
        // self entirely below other, or the reverse
        let below = |a: &Interval, b: &Interval| match (a.upper, b.lower) {
            (Some(u), Some(l)) => u < l || (u == l && !(a.upper_closed && b.lower_closed)),
            _ => false,
        };
        below(self, other) || below(other, self)
    }
}

/// Product of intervals, one per latent coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region(pub Vec<Interval>);

impl Region {
    pub fn contains(&self, z: &[f64]) -> bool {
        self.0.iter().zip(z).all(|(iv, x)| iv.contains(*x))
    }

    fn disjoint(&self, other: &Region) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a.disjoint(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionB {
    Complement,
    Box(Region),
}

/// Regions `A` and `B` for the transition probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub a: Region,
    pub b: RegionB,
}

impl RegionSpec {
    /// `A = (-inf, split]` and `B` its complement along the first coordinate,
    /// unbounded in the others.
    pub fn split_first(split: f64, dim: usize) -> Self {
        let mut a = vec![Interval::ALL; dim];
        a[0] = Interval::at_most(split);
        Self { a: Region(a), b: RegionB::Complement }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.a.0.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.a.0.len() });
        }
        if let RegionB::Box(b) = &self.b {
            if b.0.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: b.0.len() });
            }
            if !self.a.disjoint(b) {
                return Err(Error::Parameter(String::from("regions A and B overlap")));
            }
        }
        Ok(())
    }

    pub fn in_a(&self, z: &[f64]) -> bool {
        self.a.contains(z)
    }

    pub fn in_b(&self, z: &[f64]) -> bool {
        match &self.b {
            RegionB::Complement => !self.a.contains(z),
            RegionB::Box(b) => b.contains(z),
        }
    }
}

pub const DEFAULT_ENSEMBLE: usize = 100;

/// `TP(t) = #{i < E : z_i in A, z_{i+t} in B} / #{i < E : z_i in A}` for
/// lags `t = 0 ..= N - E`.
pub fn transition_probability_series(z: &Matrix, regions: &RegionSpec, ensemble: usize) -> Result<IndicatorSeries> {
    regions.validate(z.cols())?;
    let n = z.rows();
    if ensemble == 0 || ensemble > n {
        return Err(Error::Parameter(format!("ensemble size {ensemble} must lie in 1..={n}")));
    }
    let origins: Vec<usize> = (0..ensemble).filter(|&i| regions.in_a(z.row(i))).collect();
    if origins.is_empty() {
        return Err(Error::NoOriginInRegion);
    }
    let in_b: Vec<bool> = (0..n).map(|i| regions.in_b(z.row(i))).collect();
    let denom = origins.len() as f64;
    let times: Vec<usize> = (0..=n - ensemble).collect();
    let values = times.iter().map(|t| origins.iter().filter(|&&i| in_b[i + t]).count() as f64 / denom).collect();
    IndicatorSeries::new(
        times,
        values,
        IndicatorKind::TransitionProbability,
        IndicatorParams::TransitionProbability { regions: regions.clone(), ensemble_size: ensemble, ensemble: TpEnsemble::Observed },
    )
}

/// As [`transition_probability_series`], but the ensemble is
/// `paths_per_origin` Euler-Maruyama paths of `sde` started from each of the
/// first `E` points that lie in `A`; lags run over `0 ..= horizon`.
#[allow(clippy::too_many_arguments)]
pub fn transition_probability_monte_carlo(
    z: &Matrix,
    sde: &LatentSde,
    regions: &RegionSpec,
    ensemble: usize,
    paths_per_origin: usize,
    horizon: usize,
    dt: f64,
    seed: u64,
) -> Result<IndicatorSeries> {
    regions.validate(z.cols())?;
    if ensemble == 0 || ensemble > z.rows() || paths_per_origin == 0 {
        return Err(Error::Parameter(String::from("ensemble and paths per origin must be positive")));
    }
    let origins: Vec<usize> = (0..ensemble).filter(|&i| regions.in_a(z.row(i))).collect();
    if origins.is_empty() {
        return Err(Error::NoOriginInRegion);
    }
    let mut rng = seed::rng(seed);
    let mut hits = vec![0u64; horizon + 1];
    for &i in &origins {
        for _ in 0..paths_per_origin {
            let path = simulate_with(sde, z.row(i), horizon + 1, dt, &mut rng, DEFAULT_GUARD)?;
            for (t, h) in hits.iter_mut().enumerate() {
                if regions.in_b(path.row(t)) {
                    *h += 1;
                }
            }
        }
    }
    let total = (origins.len() * paths_per_origin) as f64;
    IndicatorSeries::new(
        (0..=horizon).collect(),
        hits.iter().map(|h| *h as f64 / total).collect(),
        IndicatorKind::TransitionProbability,
        IndicatorParams::TransitionProbability {
            regions: regions.clone(),
            ensemble_size: ensemble,
            ensemble: TpEnsemble::MonteCarlo { paths_per_origin, horizon, seed },
        },
    )
}

/// Time index of the first value at or above `threshold`, skipping NaN.
pub fn warning_point(series: &IndicatorSeries, threshold: f64) -> Option<usize> {
    series.values.iter().position(|v| *v >= threshold).map(|k| series.times[k])
}

/// Population standard deviation per component over windows of `l` samples,
/// averaged across components.
pub fn std_baseline(z: &Matrix, l: usize) -> Result<IndicatorSeries> {
    let n = z.rows();
    if l == 0 || l > n {
        return Err(Error::Parameter(format!("window {l} must lie in 1..={n}")));
    }
    let columns: Vec<Vec<f64>> = (0..z.cols()).map(|c| z.column(c)).collect();
    let times: Vec<usize> = (l - 1..n).collect();
    let values = times
        .iter()
        .map(|&t| columns.iter().map(|c| population_std(&c[t + 1 - l..=t])).sum::<f64>() / columns.len() as f64)
        .collect();
    IndicatorSeries::new(times, values, IndicatorKind::StdBaseline, IndicatorParams::StdBaseline { l })
}
