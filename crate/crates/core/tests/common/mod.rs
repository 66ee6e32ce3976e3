//! Independent oracles shared by the integration suites.
//!
//! Everything here recomputes quantities from first principles — explicit
//! loops over public parameter fields, quadrature, enumeration — so the
//! implementations under test are checked against a second code path.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use boltzrff::model::{ModelShape, RbmParams, SpinConfig};
use boltzrff::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_7e57_7e57_7e57)
}

/// Uniform(-scale, scale) entries everywhere, including log-variances.
pub fn random_params(shape: ModelShape, scale: f64, rng: &mut ChaCha8Rng) -> RbmParams {
    let mut val = |_: usize| rng.gen_range(-scale..scale);
    let vecn = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    };
    let _ = &mut val;
    let a = vecn(shape.n_omega, rng);
    let b = vecn(shape.n_visible, rng);
    let c = vecn(shape.n_hidden, rng);
    let w = Mat::from_vec(
        shape.n_visible,
        shape.n_hidden,
        vecn(shape.n_visible * shape.n_hidden, rng),
    )
    .unwrap();
    let u = Mat::from_vec(
        shape.n_omega,
        shape.n_visible,
        vecn(shape.n_omega * shape.n_visible, rng),
    )
    .unwrap();
    let z = vecn(shape.n_omega, rng);
    RbmParams { a, b, c, w, u, z }
}

pub fn random_spins(shape: ModelShape, rng: &mut ChaCha8Rng) -> SpinConfig {
    let flip = |rng: &mut ChaCha8Rng| if rng.gen::<bool>() { 1i8 } else { -1 };
    SpinConfig::new(
        (0..shape.n_visible).map(|_| flip(rng)).collect(),
        (0..shape.n_hidden).map(|_| flip(rng)).collect(),
    )
    .unwrap()
}

/// Direct triple-loop Ising energy, written independently of the crate.
pub fn energy_discrete_oracle(v: &[i8], h: &[i8], params: &RbmParams) -> f64 {
    let mut e = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        e -= params.b[j] * vj as f64;
    }
    for (k, &hk) in h.iter().enumerate() {
        e -= params.c[k] * hk as f64;
    }
    for (j, &vj) in v.iter().enumerate() {
        for (k, &hk) in h.iter().enumerate() {
            e -= (vj as f64) * params.w.get(j, k) * hk as f64;
        }
    }
    e
}

/// Direct Gaussian-layer energy.
pub fn energy_gaussian_oracle(omega: &[f64], v: &[i8], params: &RbmParams) -> f64 {
    let mut e = 0.0;
    for i in 0..omega.len() {
        let var = params.z[i].exp();
        e += (omega[i] - params.a[i]).powi(2) / (2.0 * var);
        for (j, &vj) in v.iter().enumerate() {
            e -= omega[i] / var * params.u.get(i, j) * vj as f64;
        }
    }
    e
}

/// Spin configuration for an enumeration index, low bits visible, bit=1 up.
pub fn spins_for_index(idx: usize, shape: ModelShape) -> (Vec<i8>, Vec<i8>) {
    let bit = |b: usize| if idx >> b & 1 == 1 { 1i8 } else { -1 };
    let v: Vec<i8> = (0..shape.n_visible).map(bit).collect();
    let h: Vec<i8> = (shape.n_visible..shape.n_visible + shape.n_hidden)
        .map(bit)
        .collect();
    (v, h)
}

/// Brute-force Boltzmann probabilities over all spin states at `beta`.
pub fn boltzmann_probs_oracle(params: &RbmParams, shape: ModelShape, beta: f64) -> Vec<f64> {
    let n_states = 1usize << (shape.n_visible + shape.n_hidden);
    let energies: Vec<f64> = (0..n_states)
        .map(|idx| {
            let (v, h) = spins_for_index(idx, shape);
            energy_discrete_oracle(&v, &h, params)
        })
        .collect();
    let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Brute-force partition function at beta = 1.
pub fn partition_oracle(params: &RbmParams, shape: ModelShape) -> f64 {
    let n_states = 1usize << (shape.n_visible + shape.n_hidden);
    (0..n_states)
        .map(|idx| {
            let (v, h) = spins_for_index(idx, shape);
            (-energy_discrete_oracle(&v, &h, params)).exp()
        })
        .sum()
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}

/// Empirical state distribution of spin draws, indexed by the shared
/// enumeration convention.
pub fn empirical_state_probs(draws: &[SpinConfig], shape: ModelShape) -> Vec<f64> {
    let n_states = 1usize << (shape.n_visible + shape.n_hidden);
    let mut counts = vec![0usize; n_states];
    for s in draws {
        let mut idx = 0usize;
        for (b, &vj) in s.v.iter().enumerate() {
            if vj == 1 {
                idx |= 1 << b;
            }
        }
        for (b, &hk) in s.h.iter().enumerate() {
            if hk == 1 {
                idx |= 1 << (shape.n_visible + b);
            }
        }
        counts[idx] += 1;
    }
    counts
        .iter()
        .map(|&c| c as f64 / draws.len() as f64)
        .collect()
}

/// Two-sample chi-square p-value over histogram cells (cells where both
/// samples are empty are dropped).
pub fn two_sample_chi_square_p(counts1: &[u64], counts2: &[u64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n1: u64 = counts1.iter().sum();
    let n2: u64 = counts2.iter().sum();
    let k1 = (n2 as f64 / n1 as f64).sqrt();
    let k2 = (n1 as f64 / n2 as f64).sqrt();
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&c1, &c2) in counts1.iter().zip(counts2) {
        if c1 + c2 == 0 {
            continue;
        }
        cells += 1;
        let d = k1 * c1 as f64 - k2 * c2 as f64;
        statistic += d * d / (c1 + c2) as f64;
    }
    let df = (cells - 1) as f64;
    let dist = ChiSquared::new(df).unwrap();
    1.0 - dist.cdf(statistic)
}

/// Gauss-Hermite nodes and weights for `integral e^{-t^2} f(t) dt`,
/// from the eigendecomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eigen.eigenvalues[i];
            let first = eigen.eigenvectors[(0, i)];
            (node, std::f64::consts::PI.sqrt() * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `E_{X ~ Normal(mean, var)}[f(X)]` by Gauss-Hermite quadrature.
pub fn normal_expectation(mean: f64, var: f64, n_nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite(n_nodes);
    let sd = var.sqrt();
    let mut acc = 0.0;
    for (t, w) in nodes.iter().zip(&weights) {
        acc += w * f(mean + std::f64::consts::SQRT_2 * sd * t);
    }
    acc / std::f64::consts::PI.sqrt()
}

/// Relative error with a floor that keeps near-zero references meaningful.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-3)
}

/// Symmetric eigenvalues (descending) via nalgebra, used as the dense
/// eigensolver oracle for PCA.
pub fn eigenvalues_desc_oracle(sym: &Mat) -> Vec<f64> {
    let n = sym.rows();
    let m = DMatrix::from_fn(n, n, |r, c| sym.get(r, c));
    let mut vals: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}
