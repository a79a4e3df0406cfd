//! Isotropic and directed anisotropic diffusion maps.
//!
//! The directed kernel penalizes displacement along the local gradient of a
//! potential `f` whose gradient flow drives the data (`x' = -grad f`):
//!
//! ```text
//! k(x, y) = exp(-|x - y|^2 / eps - <grad f(x), x - y>^2 / eps^2)
//! ```
//!
//! `grad f` is estimated from the time series itself by finite differences
//! ([`estimate_drift`]). Because the directed term is evaluated at the first
//! argument the kernel is not symmetric, and the Markov matrix
//! `P = D^-1 K` needs a general eigensolver.
//!
//! Eigenvectors are normalized to mean square one (`|phi|^2 = N`) and signed
//! so that their largest-magnitude entry is positive.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::ingest::TimeSeriesMatrix;
use crate::{Error, Matrix, Result};

/// Relative imaginary part above which an eigenpair is rejected.
pub const COMPLEX_TOLERANCE: f64 = 1e-8;
/// Smallest eigenvalue magnitude the Nyström extension will divide by.
pub const EXTENSION_FLOOR: f64 = 1e-10;
/// Eigenvalues within this distance of one are candidates for the
/// stationary pair.
const STATIONARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientSource {
    FiniteDifferenceOfData,
    ExplicitField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub epsilon: f64,
    pub directed: bool,
    pub gradient_source: GradientSource,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, directed: true, gradient_source: GradientSource::FiniteDifferenceOfData }
    }
}

impl KernelConfig {
    pub fn isotropic(epsilon: f64) -> Self {
        Self { epsilon, directed: false, gradient_source: GradientSource::FiniteDifferenceOfData }
    }

    pub fn directed(epsilon: f64) -> Self {
        Self { epsilon, directed: true, gradient_source: GradientSource::FiniteDifferenceOfData }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Error::Parameter(format!("epsilon must be positive, got {}", self.epsilon)))
        }
    }
}

/// Estimated `grad f` at every sample, where the data follow `x' = -grad f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    gradient: Matrix,
}

impl DriftField {
    pub fn from_gradient(gradient: Matrix) -> Result<Self> {
        if let Some((row, channel)) = gradient.first_non_finite() {
            return Err(Error::NonFinite { channel, row });
        }
        Ok(Self { gradient })
    }

    pub fn gradient(&self) -> &Matrix {
        &self.gradient
    }

    pub fn len(&self) -> usize {
        self.gradient.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.gradient.rows() == 0
    }
}

/// `grad f(x_i) ~ -(x_{i+1} - x_{i-1}) / (2 dt)` in the interior, one-sided
/// differences on the first and last rows.
pub fn estimate_drift(ts: &TimeSeriesMatrix) -> DriftField {
    let x = ts.data();
    let (n, dim) = (x.rows(), x.cols());
    let dt = ts.dt();
    let mut g = Matrix::zeros(n, dim);
    for i in 0..n {
        let (hi, lo, span) = if i == 0 {
            (1, 0, dt)
        } else if i == n - 1 {
            (n - 1, n - 2, dt)
        } else {
            (i + 1, i - 1, 2.0 * dt)
        };
        for c in 0..dim {
            g[(i, c)] = -(x[(hi, c)] - x[(lo, c)]) / span;
        }
    }
    DriftField { gradient: g }
}

#[inline]
fn kernel_entry(x: &[f64], y: &[f64], grad: Option<&[f64]>, eps: f64) -> f64 {
    let mut sq = 0.0;
    let mut proj = 0.0;
    match grad {
        Some(g) => {
            for ((a, b), gc) in x.iter().zip(y).zip(g) {
                let d = a - b;
                sq += d * d;
                proj += gc * d;
            }
            libm::exp(-sq / eps - proj * proj / (eps * eps))
        }
        None => {
            for (a, b) in x.iter().zip(y) {
                let d = a - b;
                sq += d * d;
            }
            libm::exp(-sq / eps)
        }
    }
}

/// Dense `N x N` kernel. Rows use the gradient at the row point when the
/// configuration is directed.
pub fn kernel_matrix(ts: &TimeSeriesMatrix, cfg: &KernelConfig, drift: Option<&DriftField>) -> Result<Matrix> {
    cfg.validate()?;
    let x = ts.data();
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    if cfg.directed {
        let drift = drift.ok_or_else(|| Error::Parameter(String::from("directed kernel needs a drift field")))?;
        let g = drift.gradient();
        if g.rows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: g.rows() });
        }
        if g.cols() != x.cols() {
            return Err(Error::DimensionMismatch { expected: x.cols(), got: g.cols() });
        }
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = if i == j { 1.0 } else { kernel_entry(x.row(i), x.row(j), Some(g.row(i)), cfg.epsilon) };
            }
        }
    } else {
        for i in 0..n {
            k[(i, i)] = 1.0;
            for j in i + 1..n {
                let v = kernel_entry(x.row(i), x.row(j), None, cfg.epsilon);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    }
    Ok(k)
}

/// Row-stochastic Markov matrix together with the kernel degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOperator {
    pub transition: Matrix,
    pub degrees: Vec<f64>,
    /// The kernel it came from was exactly symmetric.
    pub symmetric_kernel: bool,
}

/// `P[i, j] = K[i, j] / d_i` with `d_i = sum_j K[i, j]`.
pub fn markov_normalize(kernel: &Matrix) -> Result<MarkovOperator> {
    let n = kernel.rows();
    if kernel.cols() != n {
        return Err(Error::Shape(format!("kernel must be square, got {}x{}", n, kernel.cols())));
    }
    let mut p = kernel.clone();
    let mut degrees = Vec::with_capacity(n);
    for i in 0..n {
        let row = p.row_mut(i);
        let d: f64 = row.iter().sum();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::ZeroDegree(i));
        }
        for v in row.iter_mut() {
            *v /= d;
        }
        degrees.push(d);
    }
    let symmetric_kernel = (0..n).all(|i| (i + 1..n).all(|j| kernel[(i, j)] == kernel[(j, i)]));
    Ok(MarkovOperator { transition: p, degrees, symmetric_kernel })
}

/// Leading eigenpairs of a Markov matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by descending magnitude.
    pub eigenvalues: Vec<f64>,
    /// `N x K`, column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: Matrix,
    /// Index 0 holds the stationary pair (eigenvalue one, constant vector).
    /// When false the stationary pair has been removed from the list.
    pub includes_stationary: bool,
}

/// `K` leading eigenpairs of `op.transition`.
///
/// A symmetric kernel is solved through the symmetric conjugate
/// `D^1/2 P D^-1/2`; the stationary pair stays at index 0. A directed
/// (nonsymmetric) kernel goes through the general eigensolver and the
/// stationary pair, which every row-stochastic matrix carries, is dropped so
/// that index 0 is the leading nontrivial mode.
pub fn spectral_embedding(op: &MarkovOperator, k: usize, cfg: &KernelConfig) -> Result<Spectrum> {
    let n = op.transition.rows();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("component count must satisfy 1 <= K < N, got K={k}, N={n}")));
    }
    if op.symmetric_kernel {
        symmetric_spectrum(op, k)
    } else {
        general_spectrum(op, k, !cfg.directed)
    }
}

/// Every eigenvalue of `op.transition`, by descending magnitude, stationary
/// one included.
pub fn markov_eigenvalues(op: &MarkovOperator) -> Result<Vec<f64>> {
    let n = op.transition.rows();
    if op.symmetric_kernel {
        let sq: Vec<f64> = op.degrees.iter().map(|d| libm::sqrt(*d)).collect();
        let p = &op.transition;
        let a = Mat::from_fn(n, n, |i, j| 0.5 * (p[(i, j)] * sq[i] / sq[j] + p[(j, i)] * sq[j] / sq[i]));
        let mut s = a.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::NoConvergence)?;
        s.sort_by(|a, b| by_magnitude(*a, *b));
        return Ok(s);
    }
    let s = to_faer(&op.transition).eigenvalues().map_err(|_| Error::NoConvergence)?;
    let mut s: Vec<(f64, f64)> = s.iter().map(|c| (c.re, c.im)).collect();
    s.sort_by(|a, b| {
        libm::hypot(b.0, b.1).partial_cmp(&libm::hypot(a.0, a.1)).unwrap_or(Ordering::Equal).then(b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal))
    });
    s.iter()
        .enumerate()
        .map(|(i, &(re, im))| {
            let m = libm::hypot(re, im);
            if m > 0.0 && libm::fabs(im) / m > COMPLEX_TOLERANCE {
                Err(Error::ComplexEigenpair { index: i, relative_imag: libm::fabs(im) / m })
            } else {
                Ok(re)
            }
        })
        .collect()
}

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn symmetric_spectrum(op: &MarkovOperator, k: usize) -> Result<Spectrum> {
    let n = op.transition.rows();
    let sq: Vec<f64> = op.degrees.iter().map(|d| libm::sqrt(*d)).collect();
    let p = &op.transition;
    let a = Mat::from_fn(n, n, |i, j| {
        let aij = p[(i, j)] * sq[i] / sq[j];
        let aji = p[(j, i)] * sq[j] / sq[i];
        0.5 * (aij + aji)
    });
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| by_magnitude(s[x], s[y]).then(x.cmp(&y)));

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        // phi = D^-1/2 psi
        vectors.push((0..n).map(|i| u[(i, idx)] / sq[i]).collect());
        values.push(s[idx]);
    }
    put_stationary_first(&mut values, &mut vectors, &op.degrees);
    finish(values, vectors, true)
}

/// When several eigenvalues sit at one, rotate that cluster so the constant
/// vector comes first (needed for `P = I` and nearly disconnected graphs).
fn put_stationary_first(values: &mut [f64], vectors: &mut [Vec<f64>], degrees: &[f64]) {
    let top = values.first().copied().unwrap_or(0.0);
    let cluster = values.iter().take_while(|v| libm::fabs(**v - top) <= STATIONARY_TOLERANCE).count();
    if cluster <= 1 {
        return;
    }
    let n = degrees.len();
    // Work in the D-weighted inner product where the cluster basis is
    // orthonormal; Gram-Schmidt starting from the constant vector.
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(degrees).map(|((x, y), d)| x * y * d).sum() };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cluster);
    basis.push(vec![1.0; n]);
    for vector in &vectors[..cluster] {
        let mut v = vector.clone();
        for b in &basis {
            let coef = inner(&v, b) / inner(b, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= coef * bi;
            }
        }
        let norm = libm::sqrt(inner(&v, &v));
        if norm > 1e-8 && basis.len() < cluster {
            basis.push(v);
        }
    }
    for (c, b) in basis.into_iter().enumerate() {
        vectors[c] = b;
    }
}

fn general_spectrum(op: &MarkovOperator, k: usize, keep_stationary: bool) -> Result<Spectrum> {
    let n = op.transition.rows();
    let evd = to_faer(&op.transition).eigen().map_err(|_| Error::NoConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let modulus = |i: usize| libm::hypot(s[i].re, s[i].im);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        modulus(y)
            .partial_cmp(&modulus(x))
            .unwrap_or(Ordering::Equal)
            .then(s[y].re.partial_cmp(&s[x].re).unwrap_or(Ordering::Equal))
            .then(x.cmp(&y))
    });

    // the stationary pair: eigenvalue at one with the flattest eigenvector
    let stationary = order
        .iter()
        .copied()
        .take_while(|&i| modulus(i) >= 1.0 - 1e-6)
        .filter(|&i| libm::fabs(s[i].re - 1.0) <= STATIONARY_TOLERANCE && libm::fabs(s[i].im) <= STATIONARY_TOLERANCE)
        .min_by(|&a, &b| {
            let sa = relative_spread(&real_column(&u, a));
            let sb = relative_spread(&real_column(&u, b));
            sa.partial_cmp(&sb).unwrap_or(Ordering::Equal)
        });

    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    if keep_stationary {
        if let Some(st) = stationary {
            order.retain(|&i| i != st);
            order.insert(0, st);
        }
    } else if let Some(st) = stationary {
        order.retain(|&i| i != st);
    }
    for (pos, &idx) in order.iter().take(k).enumerate() {
        let lam = s[idx];
        let m = modulus(idx);
        if m > 0.0 && libm::fabs(lam.im) / m > COMPLEX_TOLERANCE {
            return Err(Error::ComplexEigenpair { index: pos, relative_imag: libm::fabs(lam.im) / m });
        }
        values.push(lam.re);
        vectors.push(real_column(&u, idx));
    }
    if values.len() < k {
        return Err(Error::Parameter(format!("only {} eigenpairs available", values.len())));
    }
    finish(values, vectors, keep_stationary && stationary.is_some())
}

/// Rotates a complex eigenvector so its largest entry is real, then keeps the
/// real part.
fn real_column(u: &faer::MatRef<'_, faer::c64>, j: usize) -> Vec<f64> {
    let n = u.nrows();
    let mut best = 0;
    let mut best_mod = -1.0;
    for i in 0..n {
        let m = libm::hypot(u[(i, j)].re, u[(i, j)].im);
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    let pivot = u[(best, j)];
    if best_mod <= 0.0 {
        return vec![0.0; n];
    }
    // multiply by conj(pivot) / |pivot|
    let (cr, ci) = (pivot.re / best_mod, -pivot.im / best_mod);
    (0..n).map(|i| u[(i, j)].re * cr - u[(i, j)].im * ci).collect()
}

fn relative_spread(v: &[f64]) -> f64 {
    let (mut lo, mut hi, mut amax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
        amax = amax.max(libm::fabs(x));
    }
    if amax == 0.0 {
        f64::INFINITY
    } else {
        (hi - lo) / amax
    }
}

fn by_magnitude(a: f64, b: f64) -> Ordering {
    libm::fabs(b)
        .partial_cmp(&libm::fabs(a))
        .unwrap_or(Ordering::Equal)
        .then(b.partial_cmp(&a).unwrap_or(Ordering::Equal))
}

fn finish(values: Vec<f64>, mut vectors: Vec<Vec<f64>>, includes_stationary: bool) -> Result<Spectrum> {
    let n = vectors.first().map_or(0, Vec::len);
    for v in vectors.iter_mut() {
        normalize_mean_square(v);
        fix_sign(v);
    }
    let mut eigenvectors = Matrix::zeros(n, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        eigenvectors.set_column(j, v);
    }
    Ok(Spectrum { eigenvalues: values, eigenvectors, includes_stationary })
}

fn normalize_mean_square(v: &mut [f64]) {
    let ss: f64 = v.iter().map(|x| x * x).sum();
    if ss > 0.0 {
        let scale = libm::sqrt(v.len() as f64 / ss);
        for x in v.iter_mut() {
            *x *= scale;
        }
    }
}

/// Largest-magnitude entry positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if libm::fabs(*x) > libm::fabs(v[best]) {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Picks the latent dimension at the largest gap `lambda_i - lambda_{i+1}`,
/// `i` in `1..=max_d`, over the nontrivial eigenvalues. Ties go to the
/// smaller dimension.
pub fn spectral_gap_dimension(nontrivial: &[f64], max_d: usize) -> usize {
    let upper = max_d.min(nontrivial.len().saturating_sub(1)).max(1);
    let mut best = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 1..=upper {
        if i >= nontrivial.len() {
            break;
        }
        let gap = nontrivial[i - 1] - nontrivial[i];
        // gaps equal up to rounding keep the smaller dimension
        if gap > best_gap + 1e-12 {
            best_gap = gap;
            best = i;
        }
    }
    best
}

/// Diffusion-map coordinates of a training set plus everything needed to
/// extend them to new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEmbedding {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    /// `N x d`; column `c` is `eigenvalues[c + offset] * eigenvectors[:, c + offset]`.
    pub coordinates: Matrix,
    pub config: KernelConfig,
    pub training_data: TimeSeriesMatrix,
    pub kernel_degrees: Vec<f64>,
    /// Index of the first eigenpair used as a coordinate (1 when the
    /// stationary pair is kept in the spectrum, 0 otherwise).
    pub coordinate_offset: usize,
}

/// Choice of latent dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dimension {
    /// Largest spectral gap among the first `max` nontrivial eigenvalues.
    Auto { max: usize },
    Fixed(usize),
}

impl DiffusionEmbedding {
    /// Builds the embedding from a spectrum. `d` counts nontrivial
    /// coordinates.
    pub fn from_spectrum(
        spectrum: Spectrum,
        d: usize,
        config: KernelConfig,
        training_data: TimeSeriesMatrix,
        kernel_degrees: Vec<f64>,
    ) -> Result<Self> {
        let offset = usize::from(spectrum.includes_stationary);
        let available = spectrum.eigenvalues.len() - offset;
        if d == 0 || d > available {
            return Err(Error::Parameter(format!("embedding dimension {d} outside 1..={available}")));
        }
        let n = spectrum.eigenvectors.rows();
        let mut coordinates = Matrix::zeros(n, d);
        for c in 0..d {
            let lam = spectrum.eigenvalues[c + offset];
            for i in 0..n {
                coordinates[(i, c)] = lam * spectrum.eigenvectors[(i, c + offset)];
            }
        }
        Ok(Self {
            eigenvalues: spectrum.eigenvalues,
            eigenvectors: spectrum.eigenvectors,
            coordinates,
            config,
            training_data,
            kernel_degrees,
            coordinate_offset: offset,
        })
    }

    pub fn dimension(&self) -> usize {
        self.coordinates.cols()
    }

    /// Eigenvalues without the stationary one.
    pub fn nontrivial_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[self.coordinate_offset..]
    }

    /// Eigenvalue paired with coordinate column `c`.
    pub fn coordinate_eigenvalue(&self, c: usize) -> f64 {
        self.eigenvalues[c + self.coordinate_offset]
    }

    /// Coordinates of new points. Directed embeddings estimate the gradient
    /// at the new points from their own temporal neighbours; with fewer than
    /// three new points the isotropic kernel is used instead.
    pub fn extend(&self, new_points: &Matrix, dt: f64) -> Result<Matrix> {
        if self.config.directed && new_points.rows() >= 3 {
            let ts = TimeSeriesMatrix::new(new_points.clone(), dt, crate::ingest::Origin::RawPreprocessed)?;
            let drift = estimate_drift(&ts);
            self.extend_with_drift(new_points, Some(&drift))
        } else {
            self.extend_with_drift(new_points, None)
        }
    }

    /// Nyström extension
    /// `Phi_i(x*) = 1/lambda_i * sum_j k(x*, x_j) / sum_j k(x*, x_j) * Phi_i(x_j)`.
    /// Passing `None` uses the isotropic kernel.
    pub fn extend_with_drift(&self, new_points: &Matrix, drift: Option<&DriftField>) -> Result<Matrix> {
        let train = self.training_data.data();
        if new_points.cols() != train.cols() {
            return Err(Error::DimensionMismatch { expected: train.cols(), got: new_points.cols() });
        }
        if let Some(d) = drift {
            if d.len() != new_points.rows() {
                return Err(Error::DimensionMismatch { expected: new_points.rows(), got: d.len() });
            }
        }
        let d = self.dimension();
        for c in 0..d {
            let lam = self.coordinate_eigenvalue(c);
            if libm::fabs(lam) < EXTENSION_FLOOR {
                return Err(Error::EigenvalueFloor { component: c, value: lam });
            }
        }
        let drift = if self.config.directed { drift } else { None };
        let n = train.rows();
        let eps = self.config.epsilon;
        let mut out = Matrix::zeros(new_points.rows(), d);
        let mut weights = vec![0.0; n];
        for m in 0..new_points.rows() {
            let x = new_points.row(m);
            let g = drift.map(|f| f.gradient().row(m));
            let mut total = 0.0;
            for (j, w) in weights.iter_mut().enumerate() {
                let y = train.row(j);
                *w = if x == y { 1.0 } else { kernel_entry(x, y, g, eps) };
                total += *w;
            }
            if !(total > 0.0) {
                return Err(Error::ZeroDegree(m));
            }
            for c in 0..d {
                let mut acc = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    acc += (w / total) * self.coordinates[(j, c)];
                }
                out[(m, c)] = acc / self.coordinate_eigenvalue(c);
            }
        }
        Ok(out)
    }
}

/// Kernel, Markov normalization, spectrum and coordinates in one call.
pub fn embed(ts: &TimeSeriesMatrix, cfg: &KernelConfig, components: usize, dim: Dimension) -> Result<DiffusionEmbedding> {
    let drift = if cfg.directed { Some(estimate_drift(ts)) } else { None };
    embed_with_drift(ts, cfg, drift.as_ref(), components, dim)
}

pub fn embed_with_drift(
    ts: &TimeSeriesMatrix,
    cfg: &KernelConfig,
    drift: Option<&DriftField>,
    components: usize,
    dim: Dimension,
) -> Result<DiffusionEmbedding> {
    let k = kernel_matrix(ts, cfg, drift)?;
    let op = markov_normalize(&k)?;
    let spectrum = spectral_embedding(&op, components, cfg)?;
    let offset = usize::from(spectrum.includes_stationary);
    let d = match dim {
        Dimension::Fixed(d) => d,
        Dimension::Auto { max } => spectral_gap_dimension(&spectrum.eigenvalues[offset..], max),
    };
    DiffusionEmbedding::from_spectrum(spectrum, d, *cfg, ts.clone(), op.degrees)
}
