//! Ground-truth latent trajectories lifted to high-dimensional observations,
//! and a brute-force sample-entropy reference.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::indicators::{SampEnCounts, SampEnParams};
use crate::ingest::{Origin, TimeSeriesMatrix};
use crate::sde::{simulate, LatentSde, DEFAULT_GUARD};
use crate::stats::population_std;
use crate::{seed, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lift {
    /// `x = z W` with `W` having orthonormal rows.
    RandomOrthogonalLinear,
    /// `x = tanh(z W)` componentwise.
    ComponentwiseNonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub latent_dim: usize,
    /// Drift coefficients per latent component in the graded monomial basis
    /// of `drift_degree`.
    pub drift: Vec<Vec<f64>>,
    pub drift_degree: usize,
    /// Constant diffusion magnitude for every component.
    pub diffusion: f64,
    pub ambient_dim: usize,
    pub lift: Lift,
    /// Observation noise standard deviation as a fraction of each channel's
    /// noiseless range.
    pub noise_level: f64,
    pub seed: u64,
    pub length: usize,
    pub dt: f64,
    /// Starting point; the origin when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for SyntheticSpec {
    /// `dz = (z - z^3) dt + 0.5 dB` lifted to 20 channels, 1500 samples at
    /// `dt = 0.0625`.
    fn default() -> Self {
        Self {
            latent_dim: 1,
            drift: vec![vec![0.0, 1.0, 0.0, -1.0]],
            drift_degree: 3,
            diffusion: 0.5,
            ambient_dim: 20,
            lift: Lift::RandomOrthogonalLinear,
            noise_level: 0.01,
            seed: 0,
            length: 1500,
            dt: 0.0625,
            initial: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.ambient_dim < self.latent_dim {
            return Err(Error::Parameter(format!(
                "need 1 <= latent dimension ({}) <= ambient dimension ({})",
                self.latent_dim, self.ambient_dim
            )));
        }
        if self.length < 3 {
            return Err(Error::Parameter(format!("length must be at least 3, got {}", self.length)));
        }
        if !(self.dt > 0.0) || !(self.noise_level >= 0.0) || !self.diffusion.is_finite() {
            return Err(Error::Parameter(String::from("dt must be positive and noise level non-negative")));
        }
        if let Some(z0) = &self.initial {
            if z0.len() != self.latent_dim {
                return Err(Error::DimensionMismatch { expected: self.latent_dim, got: z0.len() });
            }
        }
        self.model().map(|_| ())
    }

    /// The generating SDE.
    pub fn model(&self) -> Result<LatentSde> {
        LatentSde::new(
            self.latent_dim,
            self.drift_degree,
            0,
            self.drift.clone(),
            vec![vec![self.diffusion]; self.latent_dim],
        )
    }

    fn initial_point(&self) -> Vec<f64> {
        self.initial.clone().unwrap_or_else(|| vec![0.0; self.latent_dim])
    }
}

/// Latent truth, its lifted observation, and the lift used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub latent: TimeSeriesMatrix,
    pub observed: TimeSeriesMatrix,
    /// `latent_dim x ambient_dim` with orthonormal rows.
    pub injection: Matrix,
    /// Index of a forced regime change, if any.
    pub t_star: Option<usize>,
}

const STREAM_PATH: u64 = 0;
const STREAM_INJECTION: u64 = 1;
const STREAM_NOISE: u64 = 2;

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let sde = spec.model()?;
    let latent = simulate(&sde, &spec.initial_point(), spec.length, spec.dt, seed::derive(spec.seed, STREAM_PATH), DEFAULT_GUARD)?;
    lift_latent(spec, latent, None)
}

fn lift_latent(spec: &SyntheticSpec, latent: Matrix, t_star: Option<usize>) -> Result<SyntheticData> {
    let injection = orthogonal_injection(spec.latent_dim, spec.ambient_dim, seed::derive(spec.seed, STREAM_INJECTION));
    let mut observed = latent.matmul(&injection)?;
    if spec.lift == Lift::ComponentwiseNonlinear {
        for v in observed.as_mut_slice() {
            *v = libm::tanh(*v);
        }
    }
    if spec.noise_level > 0.0 {
        let mut rng = seed::rng(seed::derive(spec.seed, STREAM_NOISE));
        for c in 0..observed.cols() {
            let col = observed.column(c);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            let sd = spec.noise_level * (hi - lo);
            for r in 0..observed.rows() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                observed[(r, c)] += sd * xi;
            }
        }
    }
    Ok(SyntheticData {
        latent: TimeSeriesMatrix::new(latent, spec.dt, Origin::Synthetic)?,
        observed: TimeSeriesMatrix::new(observed, spec.dt, Origin::Synthetic)?,
        injection,
        t_star,
    })
}

/// `d x n` matrix with orthonormal rows: modified Gram-Schmidt on Gaussian
/// rows.
pub fn orthogonal_injection(d: usize, n: usize, seed: u64) -> Matrix {
    assert!(d <= n, "cannot inject {d} dimensions into {n}");
    let mut rng = seed::rng(seed);
    let mut w = Matrix::zeros(d, n);
    let mut k = 0;
    while k < d {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..k {
            let proj: f64 = v.iter().zip(w.row(j)).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(w.row(j)) {
                *a -= proj * b;
            }
        }
        let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        if norm < 1e-8 {
            continue;
        }
        for (o, a) in w.row_mut(k).iter_mut().zip(&v) {
            *o = a / norm;
        }
        k += 1;
    }
    w
}

/// Ornstein-Uhlenbeck well `dz = -stiffness (z - center) dt + diffusion dB`,
/// applied to every latent component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Well {
    pub center: f64,
    pub stiffness: f64,
    pub diffusion: f64,
}

/// Regime switch at `t_star`: steps leaving samples `< t_star` use `before`,
/// the rest use `after`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeShift {
    pub t_star: usize,
    pub before: Well,
    pub after: Well,
}

impl RegimeShift {
    /// Well at `-0.75` with diffusion 0.2 moving to `+0.75` with diffusion
    /// 0.5, unit stiffness.
    pub fn standard(t_star: usize) -> Self {
        Self {
            t_star,
            before: Well { center: -0.75, stiffness: 1.0, diffusion: 0.2 },
            after: Well { center: 0.75, stiffness: 1.0, diffusion: 0.5 },
        }
    }
}

/// Standard regime shift at `t_star`; the spec supplies lift, length, dt and
/// seed (its drift and diffusion are replaced by the wells).
pub fn forced_transition(spec: &SyntheticSpec, t_star: usize) -> Result<SyntheticData> {
    forced_transition_with(spec, &RegimeShift::standard(t_star))
}

pub fn forced_transition_with(spec: &SyntheticSpec, shift: &RegimeShift) -> Result<SyntheticData> {
    spec.validate()?;
    if shift.t_star == 0 || shift.t_star >= spec.length {
        return Err(Error::Parameter(format!("t_star must lie in 1..{}, got {}", spec.length, shift.t_star)));
    }
    let latent = run_wells(spec, shift.before, Some((shift.t_star, shift.after)))?;
    lift_latent(spec, latent, Some(shift.t_star))
}

/// Control run: the `before` well for the whole length, no switch.
pub fn stationary_well(spec: &SyntheticSpec, well: Well) -> Result<SyntheticData> {
    spec.validate()?;
    let latent = run_wells(spec, well, None)?;
    lift_latent(spec, latent, None)
}

fn run_wells(spec: &SyntheticSpec, before: Well, switch: Option<(usize, Well)>) -> Result<Matrix> {
    let d = spec.latent_dim;
    let mut rng = seed::rng(seed::derive(spec.seed, STREAM_PATH));
    let sqrt_dt = libm::sqrt(spec.dt);
    let mut out = Matrix::zeros(spec.length, d);
    let mut z = spec.initial.clone().unwrap_or_else(|| vec![before.center; d]);
    out.row_mut(0).copy_from_slice(&z);
    for k in 1..spec.length {
        let w = match switch {
            Some((t_star, after)) if k > t_star => after,
            _ => before,
        };
        for v in z.iter_mut() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *v += -w.stiffness * (*v - w.center) * spec.dt + w.diffusion * sqrt_dt * xi;
        }
        if z.iter().any(|v| !(libm::fabs(*v) <= DEFAULT_GUARD)) {
            return Err(Error::GuardBox { step: k });
        }
        out.row_mut(k).copy_from_slice(&z);
    }
    Ok(out)
}

/// Reference sample entropy: builds every template vector explicitly,
/// compares all ordered pairs of distinct (channel, start) templates and
/// halves the counts.
pub fn sampen_bruteforce(window: &Matrix, params: &SampEnParams) -> Result<SampEnCounts> {
    params.validate()?;
    if window.rows() < params.l {
        return Err(Error::Window { start: 0, end: params.l - 1, len: window.rows() });
    }
    let channels: Vec<Vec<f64>> = (0..window.cols()).map(|c| window.column(c)[..params.l].to_vec()).collect();
    let sigma: Vec<f64> = channels.iter().map(|x| population_std(x)).collect();
    if sigma.contains(&0.0) {
        return Ok(SampEnCounts::from_counts(0, 0));
    }
    let full = params.m + params.p;
    let mut templates: Vec<(usize, Vec<f64>)> = Vec::new();
    for (c, x) in channels.iter().enumerate() {
        for s in params.template_starts() {
            templates.push((c, x[s..s + full].to_vec()));
        }
    }
    let chebyshev = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
    let (mut a2, mut b2) = (0u64, 0u64);
    for (i, (ca, u)) in templates.iter().enumerate() {
        for (j, (cb, v)) in templates.iter().enumerate() {
            if i == j {
                continue;
            }
            let tol = params.r * sigma[*ca].max(sigma[*cb]);
            if chebyshev(&u[..params.m], &v[..params.m]) < tol {
                b2 += 1;
            }
            if chebyshev(u, v) < tol {
                a2 += 1;
            }
        }
    }
    Ok(SampEnCounts::from_counts(a2 / 2, b2 / 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_lift() {
        let spec = SyntheticSpec { noise_level: 0.0, length: 50, ..SyntheticSpec::default() };
        let d = generate(&spec).unwrap();
        let expect = d.latent.data().matmul(&d.injection).unwrap();
        assert_eq!(d.observed.data(), &expect);
        let gram = d.injection.matmul(&d.injection.transpose()).unwrap();
        assert!((gram[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_bits() {
        let spec = SyntheticSpec { length: 200, ..SyntheticSpec::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SyntheticSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().latent, generate(&other).unwrap().latent);
    }

    #[test]
    fn zero_diffusion_relaxes_to_new_well() {
        let spec = SyntheticSpec { length: 400, noise_level: 0.0, ..SyntheticSpec::default() };
        let mut shift = RegimeShift::standard(100);
        shift.before.diffusion = 0.0;
        shift.after.diffusion = 0.0;
        let d = forced_transition_with(&spec, &shift).unwrap();
        let z = d.latent.data().column(0);
        assert!(z[..=100].iter().all(|v| *v == -0.75));
        assert!(z[101..].windows(2).all(|w| w[1] > w[0]));
        assert!((z[399] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn forced_transition_shifts_mean() {
        let spec = SyntheticSpec::default();
        let d = forced_transition(&spec, 750).unwrap();
        let z = d.latent.data().column(0);
        let before = crate::stats::mean(&z[..750]);
        let after = crate::stats::mean(&z[750..]);
        assert!(after - before >= 1.0);
        assert_eq!(d.t_star, Some(750));
    }

    #[test]
    fn bruteforce_minimal_window() {
        // l = m + p + 1 gives the single start q = 1: no pair at all
        let p = SampEnParams { m: 2, p: 1, q: 1, r: 0.5, l: 4 };
        let c = sampen_bruteforce(&Matrix::column_vector(&[0.0, 1.0, 0.0, 1.0]), &p).unwrap();
        assert_eq!(c.b, 0);
        let p = SampEnParams { m: 2, p: 1, q: 1, r: 0.5, l: 5 };
        let c = sampen_bruteforce(&Matrix::column_vector(&[0.0, 1.0, 0.0, 1.0, 0.0]), &p).unwrap();
        assert!(c.b <= 1);
    }

    #[test]
    fn duplicated_channels_pair_across() {
        // 2 channels, identical: starts {1, 2}; cross pairs (1,1), (2,2) match
        // trivially, same-channel pairs never do.
        let x = [0.0, 1.0, 5.0, 0.0, 3.0];
        let w = Matrix::from_rows(&x.iter().map(|v| [*v, *v]).collect::<Vec<_>>()).unwrap();
        let p = SampEnParams { m: 1, p: 1, q: 1, r: 0.1, l: 5 };
        let c = sampen_bruteforce(&w, &p).unwrap();
        // starts 1..=3; cross-channel identical-index pairs: 3 at both lengths
        assert_eq!((c.a, c.b), (3, 3));
        assert_eq!(crate::indicators::sample_entropy(&w, &p).unwrap(), c);
    }
}
