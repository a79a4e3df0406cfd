//! Monomial bases in `d` variables, graded by total degree.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// All monomials `z^a` with `|a| <= degree`, ordered by total degree and then
/// lexicographically descending on the exponent vector. For one variable this
/// is `[1, z, z^2, ..., z^degree]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        for total in 0..=degree {
            let mut current = vec![0u32; dim];
            push_compositions(total as u32, 0, &mut current, &mut exponents);
        }
        Self { dim, degree, exponents }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Writes every basis function evaluated at `z` into `out`.
    pub fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().zip(z).map(|(&p, &x)| powi(x, p)).product();
        }
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out);
        out
    }

    /// `d/dz_var` of every basis function at `z`.
    pub fn partial_into(&self, z: &[f64], var: usize, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let p = e[var];
            if p == 0 {
                *o = 0.0;
                continue;
            }
            let mut v = f64::from(p);
            for (k, (&q, &x)) in e.iter().zip(z).enumerate() {
                v *= if k == var { powi(x, q - 1) } else { powi(x, q) };
            }
            *o = v;
        }
    }
}

fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    if current.is_empty() {
        return;
    }
    for take in (0..=remaining).rev() {
        current[pos] = take;
        push_compositions(remaining - take, pos + 1, current, out);
    }
    current[pos] = 0;
}

#[inline]
pub(crate) fn powi(x: f64, p: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..p {
        acc *= x;
    }
    acc
}

/// `sum_k coeffs[k] * basis_k(z)`.
pub fn dot(coeffs: &[f64], values: &[f64]) -> f64 {
    coeffs.iter().zip(values).map(|(c, v)| c * v).sum()
}
