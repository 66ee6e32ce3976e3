//! Learns shift-invariant kernels by training the spectral distribution of a
//! random Fourier feature map, then classifies with a kernel perceptron.
//!
//! The spectral distribution is a two-stage Boltzmann machine: a bipartite
//! Ising layer over binary spins (v, h) and a Gaussian layer that maps each
//! visible configuration to a continuous frequency vector. Training minimizes
//! a label-alignment loss with a score-function (REINFORCE) gradient estimate
//! over joint samples, so the only thing the sampler has to provide is draws
//! from the Boltzmann distribution — exact enumeration, block Gibbs, and a
//! remote annealer-style service are interchangeable backends.
//!
//! Module map:
//!
//! - [`model`] — energies, exact partition function, conditional Gaussian
//! - [`sampler`] — spin/frequency sampling backends and the remote protocol
//! - [`rff`] — feature maps, kernel approximation, Gaussian baseline banks
//! - [`learn`] — alignment loss, score-function gradients, training loop
//! - [`classify`] — kernel perceptron with capped dual coefficients
//! - [`data`] — IDX ingestion, PCA compression, splits, synthetic sets
//!
//! Batches are generated from counter-based per-sample RNG streams, so every
//! result is reproducible from a seed and independent of the degree of
//! parallelism (see the `parallel` feature).

// Indexed loops mirror the blockwise math, and `!(x > 0.0)` rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod data;
mod error;
mod exec;
pub mod io;
pub mod learn;
mod linalg;
pub mod model;
pub mod rff;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use linalg::Mat;

/// Execution mode compiled into this build ("parallel" or "sequential").
pub fn execution_mode() -> &'static str {
    exec::mode()
}
