//! Latent stochastic dynamics and early-warning indicators for multichannel
//! time series.
//!
//! The pipeline is:
//!
//! 1. [`ingest`]: min-max rescale every channel and block-average subsample.
//! 2. [`diffusion`]: build an isotropic or directed anisotropic Gaussian
//!    kernel, normalize it to a Markov matrix, take its leading eigenpairs and
//!    extend the embedding to new points (Nyström / geometric harmonics).
//! 3. [`sde`]: fit `dz = mu(z) dt + eta(z) dB` with polynomial drift and
//!    diffusion by Gaussian likelihood on consecutive snapshot pairs.
//! 4. [`indicators`]: Onsager-Machlup ratio, multichannel sample entropy,
//!    transition probability between regions and a rolling standard deviation.
//!
//! [`synthetic`] generates ground-truth data for all of the above.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line driver live in the `latentwarn` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diffusion;
mod error;
pub mod indicators;
pub mod ingest;
mod linalg;
pub mod matrix;
pub mod poly;
pub mod seed;
pub mod sde;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;
