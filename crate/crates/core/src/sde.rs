//! Latent SDE `dz = mu(z) dt + eta(z) dB` with polynomial drift and diagonal
//! polynomial diffusion, identified by Gaussian likelihood of one-step
//! transitions.
//!
//! Conditioned on `z_i`, the Euler-Maruyama step gives
//! `z_{i+1} ~ N(z_i + dt mu(z_i), dt eta(z_i)^2)`, so per component the
//! negative log-likelihood is
//!
//! ```text
//! (z_{i+1} - z_i - dt mu(z_i))^2 / (dt eta^2) + log(dt eta^2) + log(2 pi)
//! ```
//!
//! `eta` only enters through `eta^2`; its sign is not identifiable and
//! [`LatentSde::diffusion`] reports magnitudes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::solve_spd;
use crate::poly::{dot, MonomialBasis};
use crate::stats::Histogram;
use crate::{seed, Error, Matrix, Result};

/// Lower bound on `eta^2` inside the likelihood.
pub const DIFFUSION_FLOOR: f64 = 1e-6;
/// Default escape bound for [`simulate`].
pub const DEFAULT_GUARD: f64 = 1e6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-component affine map `z' = scale * z + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Rescale {
    /// Map sending each column's min to `lo` and max to `hi`. Constant
    /// columns go to the midpoint.
    pub fn fit(coords: &Matrix, lo: f64, hi: f64) -> Self {
        let d = coords.cols();
        let mut offset = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for c in 0..d {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for r in 0..coords.rows() {
                min = min.min(coords[(r, c)]);
                max = max.max(coords[(r, c)]);
            }
            if max > min {
                scale[c] = (hi - lo) / (max - min);
                offset[c] = lo - scale[c] * min;
            } else {
                scale[c] = 0.0;
                offset[c] = 0.5 * (lo + hi);
            }
        }
        Self { offset, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self { offset: vec![0.0; d], scale: vec![1.0; d] }
    }

    pub fn apply(&self, coords: &Matrix) -> Matrix {
        let mut out = coords.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.scale[c] * *v + self.offset[c];
            }
        }
        out
    }
}

/// Consecutive pairs `(z_i, z_{i+1})` with a train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSet {
    pub current: Matrix,
    pub next: Matrix,
    pub dt: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Transform applied to the coordinates before pairing, if any.
    pub rescale: Option<Rescale>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOptions {
    pub train_fraction: f64,
    pub seed: u64,
    /// Rescale every component to `[-1, 1]` before pairing.
    pub rescale: bool,
}

impl Default for SnapshotOptions {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0, rescale: true }
    }
}

impl SnapshotSet {
    /// Pairs supplied directly, e.g. independent one-step samples.
    pub fn from_pairs(current: Matrix, next: Matrix, dt: f64, train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        if current.rows() != next.rows() || current.cols() != next.cols() {
            return Err(Error::DimensionMismatch { expected: current.rows(), got: next.rows() });
        }
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        let n = current.rows();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n || seen[i] {
                return Err(Error::Parameter(String::from("train/test split must partition the pairs")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parameter(String::from("train/test split must cover every pair")));
        }
        Ok(Self { current, next, dt, train, test, rescale: None })
    }

    pub fn len(&self) -> usize {
        self.current.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.current.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.current.cols()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

/// Consecutive-pair extraction with a seeded uniform random split. The
/// training set gets `round(train_fraction * pairs)` pairs.
pub fn make_snapshots(coords: &Matrix, dt: f64, opts: &SnapshotOptions) -> Result<SnapshotSet> {
    let n = coords.rows();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 points for snapshots, got {n}")));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::Parameter(format!("train fraction must lie in (0, 1), got {}", opts.train_fraction)));
    }
    let (z, rescale) = if opts.rescale {
        let r = Rescale::fit(coords, -1.0, 1.0);
        (r.apply(coords), Some(r))
    } else {
        (coords.clone(), None)
    };
    let pairs = n - 1;
    let current = z.slice_rows(0, pairs);
    let next = z.slice_rows(1, n);
    let n_train = libm::floor(opts.train_fraction * pairs as f64 + 0.5) as usize;
    let n_train = n_train.min(pairs);
    let mut idx: Vec<usize> = (0..pairs).collect();
    idx.shuffle(&mut seed::rng(opts.seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let mut set = SnapshotSet::from_pairs(current, next, dt, train, test)?;
    set.rescale = rescale;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub train_loss: f64,
    /// `None` when the test split is empty.
    pub test_loss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Polynomial latent SDE with diagonal diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentSdeRecord", into = "LatentSdeRecord")]
pub struct LatentSde {
    drift_basis: MonomialBasis,
    diffusion_basis: MonomialBasis,
    drift_coeffs: Vec<Vec<f64>>,
    diffusion_coeffs: Vec<Vec<f64>>,
    pub diagnostics: Option<FitDiagnostics>,
    /// Map from raw latent coordinates into the coordinates this model lives in.
    pub rescale: Option<Rescale>,
}

/// On-disk form of [`LatentSde`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatentSdeRecord {
    dimension: usize,
    drift_degree: usize,
    diffusion_degree: usize,
    drift_coeffs: Vec<Vec<f64>>,
    diffusion_coeffs: Vec<Vec<f64>>,
    diagnostics: Option<FitDiagnostics>,
    rescale: Option<Rescale>,
}

impl From<LatentSde> for LatentSdeRecord {
    fn from(s: LatentSde) -> Self {
        Self {
            dimension: s.dim(),
            drift_degree: s.drift_basis.degree(),
            diffusion_degree: s.diffusion_basis.degree(),
            drift_coeffs: s.drift_coeffs,
            diffusion_coeffs: s.diffusion_coeffs,
            diagnostics: s.diagnostics,
            rescale: s.rescale,
        }
    }
}

impl TryFrom<LatentSdeRecord> for LatentSde {
    type Error = Error;

    fn try_from(r: LatentSdeRecord) -> Result<Self> {
        let mut s = LatentSde::new(r.dimension, r.drift_degree, r.diffusion_degree, r.drift_coeffs, r.diffusion_coeffs)?;
        if let Some(rs) = &r.rescale {
            if rs.offset.len() != r.dimension || rs.scale.len() != r.dimension {
                return Err(Error::DimensionMismatch { expected: r.dimension, got: rs.offset.len() });
            }
        }
        s.diagnostics = r.diagnostics;
        s.rescale = r.rescale;
        Ok(s)
    }
}

impl LatentSde {
    pub fn new(
        dim: usize,
        drift_degree: usize,
        diffusion_degree: usize,
        drift_coeffs: Vec<Vec<f64>>,
        diffusion_coeffs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter(String::from("latent dimension must be positive")));
        }
        let drift_basis = MonomialBasis::new(dim, drift_degree);
        let diffusion_basis = MonomialBasis::new(dim, diffusion_degree);
        check_coeffs(&drift_coeffs, dim, drift_basis.len())?;
        check_coeffs(&diffusion_coeffs, dim, diffusion_basis.len())?;
        Ok(Self { drift_basis, diffusion_basis, drift_coeffs, diffusion_coeffs, diagnostics: None, rescale: None })
    }

    /// One-dimensional model with polynomial drift `sum c_k z^k` and constant
    /// diffusion magnitude.
    pub fn univariate(drift: &[f64], diffusion: f64) -> Self {
        let deg = drift.len().saturating_sub(1);
        Self::new(1, deg, 0, vec![drift.to_vec()], vec![vec![diffusion]]).expect("consistent shapes")
    }

    pub fn dim(&self) -> usize {
        self.drift_basis.dim()
    }

    pub fn drift_degree(&self) -> usize {
        self.drift_basis.degree()
    }

    pub fn diffusion_degree(&self) -> usize {
        self.diffusion_basis.degree()
    }

    pub fn drift_basis(&self) -> &MonomialBasis {
        &self.drift_basis
    }

    pub fn drift_coeffs(&self) -> &[Vec<f64>] {
        &self.drift_coeffs
    }

    pub fn diffusion_coeffs(&self) -> &[Vec<f64>] {
        &self.diffusion_coeffs
    }

    pub fn drift(&self, z: &[f64]) -> Vec<f64> {
        let b = self.drift_basis.eval(z);
        self.drift_coeffs.iter().map(|c| dot(c, &b)).collect()
    }

    /// `eta(z)^2` per component.
    pub fn diffusion_sq(&self, z: &[f64]) -> Vec<f64> {
        let b = self.diffusion_basis.eval(z);
        self.diffusion_coeffs
            .iter()
            .map(|c| {
                let s = dot(c, &b);
                s * s
            })
            .collect()
    }

    /// `|eta(z)|` per component.
    pub fn diffusion(&self, z: &[f64]) -> Vec<f64> {
        self.diffusion_sq(z).into_iter().map(libm::sqrt).collect()
    }

    /// `div mu(z) = sum_c d mu_c / d z_c`.
    pub fn divergence(&self, z: &[f64]) -> f64 {
        let mut d = vec![0.0; self.drift_basis.len()];
        let mut total = 0.0;
        for (c, coeffs) in self.drift_coeffs.iter().enumerate() {
            self.drift_basis.partial_into(z, c, &mut d);
            total += dot(coeffs, &d);
        }
        total
    }

    /// Flattened parameters: all drift coefficients (component-major), then
    /// all diffusion coefficients.
    pub fn parameters(&self) -> Vec<f64> {
        self.drift_coeffs.iter().chain(&self.diffusion_coeffs).flatten().copied().collect()
    }

    pub fn set_parameters(&mut self, theta: &[f64]) {
        let pm = self.drift_basis.len();
        let pe = self.diffusion_basis.len();
        let d = self.dim();
        assert_eq!(theta.len(), d * (pm + pe));
        for c in 0..d {
            self.drift_coeffs[c].copy_from_slice(&theta[c * pm..(c + 1) * pm]);
            let off = d * pm + c * pe;
            self.diffusion_coeffs[c].copy_from_slice(&theta[off..off + pe]);
        }
    }

    /// Real roots of a univariate drift, ascending, with their stability
    /// (`mu'(z) < 0`).
    pub fn equilibria_1d(&self) -> Vec<(f64, bool)> {
        if self.dim() != 1 {
            return Vec::new();
        }
        let c = &self.drift_coeffs[0];
        let roots = real_roots(c);
        roots
            .into_iter()
            .map(|r| {
                let deriv: f64 = c.iter().enumerate().skip(1).map(|(k, ck)| k as f64 * ck * crate::poly::powi(r, k as u32 - 1)).sum();
                (r, deriv < 0.0)
            })
            .collect()
    }
}

fn check_coeffs(coeffs: &[Vec<f64>], dim: usize, len: usize) -> Result<()> {
    if coeffs.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: coeffs.len() });
    }
    for c in coeffs {
        if c.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: c.len() });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(String::from("non-finite coefficient")));
        }
    }
    Ok(())
}

/// Real roots of `sum c_k x^k` by sign changes on a fine grid refined with
/// bisection, inside the Cauchy bound.
fn real_roots(c: &[f64]) -> Vec<f64> {
    let mut deg = c.len();
    while deg > 0 && c[deg - 1] == 0.0 {
        deg -= 1;
    }
    if deg <= 1 {
        return Vec::new();
    }
    let c = &c[..deg];
    let lead = c[deg - 1];
    let bound = 1.0 + c[..deg - 1].iter().map(|v| libm::fabs(v / lead)).fold(0.0, f64::max);
    let f = |x: f64| c.iter().rev().fold(0.0, |acc, ck| acc * x + ck);
    let steps = 20_000;
    let h = 2.0 * bound / steps as f64;
    let mut roots = Vec::new();
    let mut x0 = -bound;
    let mut f0 = f(x0);
    for i in 1..=steps {
        let x1 = -bound + h * i as f64;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Negative log-likelihood of one transition, summed over components.
pub fn nll_loss(sde: &LatentSde, z: &[f64], z_next: &[f64], dt: f64) -> Result<f64> {
    let mu = sde.drift(z);
    let eta2 = sde.diffusion_sq(z);
    let mut total = 0.0;
    for c in 0..sde.dim() {
        if eta2[c] < DIFFUSION_FLOOR {
            return Err(Error::DiffusionFloor { value: eta2[c] });
        }
        let r = z_next[c] - z[c] - dt * mu[c];
        let v = dt * eta2[c];
        total += r * r / v + libm::log(libm::fabs(v)) + LN_2PI;
    }
    Ok(total)
}

/// Precomputed basis values for a subset of pairs.
struct Problem {
    dim: usize,
    pm: usize,
    pe: usize,
    dt: f64,
    /// `n x pm`
    bm: Vec<f64>,
    /// `n x pe`
    be: Vec<f64>,
    /// `n x dim` increments `z_next - z`
    dz: Vec<f64>,
    n: usize,
}

struct Evaluation {
    loss: f64,
    grad: Vec<f64>,
    /// One `pm x pm` block per component, then one `pe x pe` block per component.
    fisher: Vec<Vec<f64>>,
}

impl Problem {
    fn new(sde: &LatentSde, set: &SnapshotSet, idx: &[usize]) -> Self {
        let dim = sde.dim();
        let pm = sde.drift_basis.len();
        let pe = sde.diffusion_basis.len();
        let n = idx.len();
        let mut bm = vec![0.0; n * pm];
        let mut be = vec![0.0; n * pe];
        let mut dz = vec![0.0; n * dim];
        for (k, &i) in idx.iter().enumerate() {
            let z = set.current.row(i);
            sde.drift_basis.eval_into(z, &mut bm[k * pm..(k + 1) * pm]);
            sde.diffusion_basis.eval_into(z, &mut be[k * pe..(k + 1) * pe]);
            for c in 0..dim {
                dz[k * dim + c] = set.next[(i, c)] - z[c];
            }
        }
        Self { dim, pm, pe, dt: set.dt, bm, be, dz, n }
    }

    fn n_params(&self) -> usize {
        self.dim * (self.pm + self.pe)
    }

    /// Mean loss (infinite when the floor is violated) and, on request, its
    /// gradient and the Fisher information blocks.
    fn evaluate(&self, theta: &[f64], with_grad: bool) -> Evaluation {
        let (dim, pm, pe, dt) = (self.dim, self.pm, self.pe, self.dt);
        let mut loss = 0.0;
        let mut grad = if with_grad { vec![0.0; self.n_params()] } else { Vec::new() };
        let mut fisher: Vec<Vec<f64>> = if with_grad {
            (0..dim).map(|_| vec![0.0; pm * pm]).chain((0..dim).map(|_| vec![0.0; pe * pe])).collect()
        } else {
            Vec::new()
        };
        for k in 0..self.n {
            let bm = &self.bm[k * pm..(k + 1) * pm];
            let be = &self.be[k * pe..(k + 1) * pe];
            for c in 0..dim {
                let mu = dot(&theta[c * pm..(c + 1) * pm], bm);
                let eoff = dim * pm + c * pe;
                let s = dot(&theta[eoff..eoff + pe], be);
                let s2 = s * s;
                if !(s2 >= DIFFUSION_FLOOR) {
                    return Evaluation { loss: f64::INFINITY, grad, fisher };
                }
                let r = self.dz[k * dim + c] - dt * mu;
                let v = dt * s2;
                loss += r * r / v + libm::log(v) + LN_2PI;
                if with_grad {
                    let gmu = -2.0 * r * dt / v;
                    for (j, b) in bm.iter().enumerate() {
                        grad[c * pm + j] += gmu * b;
                    }
                    let gs = (1.0 / v - r * r / (v * v)) * 2.0 * dt * s;
                    for (j, b) in be.iter().enumerate() {
                        grad[eoff + j] += gs * b;
                    }
                    let wm = 2.0 * dt / s2;
                    let fm = &mut fisher[c];
                    for a in 0..pm {
                        for b in 0..pm {
                            fm[a * pm + b] += wm * bm[a] * bm[b];
                        }
                    }
                    let we = 4.0 / s2;
                    let fe = &mut fisher[dim + c];
                    for a in 0..pe {
                        for b in 0..pe {
                            fe[a * pe + b] += we * be[a] * be[b];
                        }
                    }
                }
            }
        }
        let inv = 1.0 / self.n as f64;
        loss *= inv;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        for f in fisher.iter_mut() {
            for v in f.iter_mut() {
                *v *= inv;
            }
        }
        Evaluation { loss, grad, fisher }
    }
}

/// Mean negative log-likelihood over the chosen pairs and its gradient with
/// respect to [`LatentSde::parameters`].
pub fn mean_loss_and_gradient(sde: &LatentSde, set: &SnapshotSet, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
    if idx.is_empty() {
        return Err(Error::Parameter(String::from("no pairs to evaluate")));
    }
    let p = Problem::new(sde, set, idx);
    let e = p.evaluate(&sde.parameters(), true);
    if !e.loss.is_finite() {
        return Err(Error::DiffusionFloor { value: 0.0 });
    }
    Ok((e.loss, e.grad))
}

/// Mean loss over the chosen pairs; `None` if the diffusion floor is hit.
pub fn mean_loss(sde: &LatentSde, set: &SnapshotSet, idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let p = Problem::new(sde, set, idx);
    let l = p.evaluate(&sde.parameters(), false).loss;
    l.is_finite().then_some(l)
}

/// Descent direction used by [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescentMethod {
    /// Gradient preconditioned by the Fisher information (natural gradient).
    Fisher,
    /// Plain gradient with an adaptive step that halves on loss increase.
    Gradient { initial_step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub drift_degree: usize,
    pub diffusion_degree: usize,
    pub max_iterations: usize,
    /// Converged once the loss changed by less than this over `window`
    /// accepted steps.
    pub tolerance: f64,
    pub window: usize,
    pub method: DescentMethod,
    /// Keep the diffusion coefficients at their initial value.
    pub freeze_diffusion: bool,
    /// Starting diffusion coefficients (per component); default is a
    /// constant matching the empirical increment variance.
    pub initial_diffusion: Option<Vec<Vec<f64>>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            drift_degree: 3,
            diffusion_degree: 0,
            max_iterations: 50_000,
            tolerance: 1e-8,
            window: 50,
            method: DescentMethod::Fisher,
            freeze_diffusion: false,
            initial_diffusion: None,
        }
    }
}

/// Fits drift and diffusion on the training split by full-batch descent.
pub fn fit(set: &SnapshotSet, opts: &FitOptions) -> Result<LatentSde> {
    fit_traced(set, opts).map(|(s, _)| s)
}

/// As [`fit`], also returning the training loss after every accepted step
/// (the initial loss first).
pub fn fit_traced(set: &SnapshotSet, opts: &FitOptions) -> Result<(LatentSde, Vec<f64>)> {
    let dim = set.dim();
    let pm = MonomialBasis::new(dim, opts.drift_degree).len();
    let pe = MonomialBasis::new(dim, opts.diffusion_degree).len();
    if set.train.len() < pm + pe {
        return Err(Error::Parameter(format!(
            "{} training pairs cannot determine {} coefficients per component",
            set.train.len(),
            pm + pe
        )));
    }

    let diffusion = match &opts.initial_diffusion {
        Some(d) => d.clone(),
        None => (0..dim)
            .map(|c| {
                let inc: Vec<f64> =
                    set.train.iter().map(|&i| (set.next[(i, c)] - set.current[(i, c)]) / libm::sqrt(set.dt)).collect();
                let var = crate::stats::population_std(&inc);
                let var = var * var;
                let mut v = vec![0.0; pe];
                v[0] = libm::sqrt(var.max(10.0 * DIFFUSION_FLOOR));
                v
            })
            .collect(),
    };
    let mut sde = LatentSde::new(dim, opts.drift_degree, opts.diffusion_degree, vec![vec![0.0; pm]; dim], diffusion)?;
    let problem = Problem::new(&sde, set, &set.train);
    let mut theta = sde.parameters();
    let n_drift = dim * pm;

    let mut current = problem.evaluate(&theta, true);
    if !current.loss.is_finite() {
        return Err(Error::DiffusionFloor { value: 0.0 });
    }
    let mut history = vec![current.loss];
    let mut step = match opts.method {
        DescentMethod::Fisher => 1.0,
        DescentMethod::Gradient { initial_step } => initial_step,
    };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let direction = match opts.method {
            DescentMethod::Fisher => natural_direction(&current, dim, pm, pe),
            DescentMethod::Gradient { .. } => current.grad.iter().map(|g| -g).collect(),
        };
        let mut direction = direction;
        if opts.freeze_diffusion {
            for v in direction[n_drift..].iter_mut() {
                *v = 0.0;
            }
        }
        if direction.iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }

        let mut t = match opts.method {
            DescentMethod::Fisher => 1.0,
            DescentMethod::Gradient { .. } => step,
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&direction).map(|(a, d)| a + t * d).collect();
            let loss = problem.evaluate(&trial, false).loss;
            if loss < current.loss {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(trial) = accepted else {
            // no decrease representable along the descent direction
            converged = true;
            break;
        };
        theta = trial;
        current = problem.evaluate(&theta, true);
        history.push(current.loss);
        if let DescentMethod::Gradient { .. } = opts.method {
            step = t * 2.0;
        }
        let k = history.len() - 1;
        if k >= opts.window && libm::fabs(history[k - opts.window] - history[k]) < opts.tolerance {
            converged = true;
            break;
        }
    }

    sde.set_parameters(&theta);
    let test_loss = mean_loss(&sde, set, &set.test);
    sde.diagnostics = Some(FitDiagnostics { train_loss: current.loss, test_loss, iterations, converged });
    sde.rescale = set.rescale.clone();
    Ok((sde, history))
}

fn natural_direction(e: &Evaluation, dim: usize, pm: usize, pe: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * (pm + pe)];
    for c in 0..dim {
        let g: Vec<f64> = e.grad[c * pm..(c + 1) * pm].iter().map(|v| -v).collect();
        let x = solve_spd(&e.fisher[c], &g).unwrap_or(g);
        out[c * pm..(c + 1) * pm].copy_from_slice(&x);
        let off = dim * pm + c * pe;
        let g: Vec<f64> = e.grad[off..off + pe].iter().map(|v| -v).collect();
        let x = solve_spd(&e.fisher[dim + c], &g).unwrap_or(g);
        out[off..off + pe].copy_from_slice(&x);
    }
    out
}

/// Euler-Maruyama path of `steps` rows starting at `z0` (row 0).
pub fn simulate(sde: &LatentSde, z0: &[f64], steps: usize, dt: f64, seed: u64, guard: f64) -> Result<Matrix> {
    let mut rng = seed::rng(seed);
    simulate_with(sde, z0, steps, dt, &mut rng, guard)
}

pub(crate) fn simulate_with<R: rand::Rng>(
    sde: &LatentSde,
    z0: &[f64],
    steps: usize,
    dt: f64,
    rng: &mut R,
    guard: f64,
) -> Result<Matrix> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if z0.len() != sde.dim() {
        return Err(Error::DimensionMismatch { expected: sde.dim(), got: z0.len() });
    }
    let d = sde.dim();
    let mut out = Matrix::zeros(steps, d);
    if steps == 0 {
        return Ok(out);
    }
    out.row_mut(0).copy_from_slice(z0);
    let sqrt_dt = libm::sqrt(dt);
    let mut z = z0.to_vec();
    for k in 1..steps {
        let mu = sde.drift(&z);
        let eta = sde.diffusion(&z);
        for c in 0..d {
            let xi: f64 = StandardNormal.sample(rng);
            z[c] += mu[c] * dt + eta[c] * sqrt_dt * xi;
        }
        if z.iter().any(|v| !(libm::fabs(*v) <= guard)) {
            return Err(Error::GuardBox { step: k });
        }
        out.row_mut(k).copy_from_slice(&z);
    }
    Ok(out)
}

/// Predicted vs. observed one-step densities for one latent component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDensity {
    pub predicted: Histogram,
    pub observed: Histogram,
    pub l1_distance: f64,
    pub predicted_modes: usize,
    pub observed_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub test_pairs: usize,
    pub bins: usize,
    pub components: Vec<ComponentDensity>,
}

impl DensityReport {
    /// Mean L1 distance over components.
    pub fn l1_distance(&self) -> f64 {
        self.components.iter().map(|c| c.l1_distance).sum::<f64>() / self.components.len() as f64
    }
}

pub const DENSITY_BINS: usize = 30;
/// Mode counting ignores peaks with less than this fraction of the tallest
/// smoothed bin as prominence.
pub const MODE_PROMINENCE: f64 = 0.15;

/// Draws one predicted `z_next ~ N(z + dt mu, dt eta^2)` per test pair and
/// compares its histogram with the observed `z_next` (30 uniform bins over
/// the pooled range).
pub fn validate_density(sde: &LatentSde, set: &SnapshotSet, seed: u64) -> Result<DensityReport> {
    if set.test.is_empty() {
        return Err(Error::Parameter(String::from("test split is empty")));
    }
    let d = sde.dim();
    if set.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: set.dim() });
    }
    let mut rng = seed::rng(seed);
    let sqrt_dt = libm::sqrt(set.dt);
    let mut predicted = vec![Vec::with_capacity(set.test.len()); d];
    let mut observed = vec![Vec::with_capacity(set.test.len()); d];
    for &i in &set.test {
        let z = set.current.row(i);
        let mu = sde.drift(z);
        let eta = sde.diffusion(z);
        for c in 0..d {
            let xi: f64 = StandardNormal.sample(&mut rng);
            predicted[c].push(z[c] + set.dt * mu[c] + sqrt_dt * eta[c] * xi);
            observed[c].push(set.next[(i, c)]);
        }
    }
    let components = (0..d)
        .map(|c| {
            let (lo, hi) = predicted[c]
                .iter()
                .chain(&observed[c])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            let p = Histogram::new(&predicted[c], lo, hi, DENSITY_BINS);
            let o = Histogram::new(&observed[c], lo, hi, DENSITY_BINS);
            ComponentDensity {
                l1_distance: p.l1_distance(&o),
                predicted_modes: p.modes(MODE_PROMINENCE),
                observed_modes: o.modes(MODE_PROMINENCE),
                predicted: p,
                observed: o,
            }
        })
        .collect();
    Ok(DensityReport { test_pairs: set.test.len(), bins: DENSITY_BINS, components })
}
