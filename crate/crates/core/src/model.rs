//! Two-stage spectral model: a bipartite Ising layer over binary spins and a
//! Gaussian layer that turns a visible configuration into a frequency vector.
//!
//! The joint density is the generative factorization
//! `p(omega, v, h) = N(omega; a + U v, diag e^z) * exp(-E(v,h)) / Z`,
//! which matches the two-stage sampling procedure exactly, so score-function
//! gradients taken against this density are consistent with the sampler.

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::{Error, Mat, Result};

/// Spins per layer must stay enumerable: the partition function and the
/// model expectations iterate all `2^(Nv+Nh)` states.
pub const MAX_ENUMERABLE_SPINS: usize = 24;

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Layer sizes `{n_omega, n_visible, n_hidden}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_omega: usize,
    pub n_visible: usize,
    pub n_hidden: usize,
}

impl ModelShape {
    pub fn new(n_omega: usize, n_visible: usize, n_hidden: usize) -> Result<Self> {
        if n_omega == 0 || n_visible == 0 || n_hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "all layer sizes must be positive, got {{{n_omega}, {n_visible}, {n_hidden}}}"
            )));
        }
        Ok(ModelShape {
            n_omega,
            n_visible,
            n_hidden,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn n_states(&self) -> usize {
        1usize << self.n_spins()
    }

    pub fn require_enumerable(&self) -> Result<()> {
        if self.n_spins() > MAX_ENUMERABLE_SPINS {
            return Err(Error::ShapeTooLarge {
                n_spins: self.n_spins(),
                limit: MAX_ENUMERABLE_SPINS,
            });
        }
        Ok(())
    }
}

/// All learnable parameters of the two-stage model.
///
/// `a` biases the Gaussian layer, `b`/`c` bias the visible/hidden spins,
/// `w` couples visible to hidden, `u` couples frequencies to visible spins,
/// and `z` holds log-variances (`sigma_i^2 = exp(z_i)`), which keeps every
/// variance positive for any finite parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `n_visible x n_hidden`
    pub w: Mat,
    /// `n_omega x n_visible`
    pub u: Mat,
    pub z: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(shape: ModelShape) -> Self {
        RbmParams {
            a: vec![0.0; shape.n_omega],
            b: vec![0.0; shape.n_visible],
            c: vec![0.0; shape.n_hidden],
            w: Mat::zeros(shape.n_visible, shape.n_hidden),
            u: Mat::zeros(shape.n_omega, shape.n_visible),
            z: vec![0.0; shape.n_omega],
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_omega: self.a.len(),
            n_visible: self.b.len(),
            n_hidden: self.c.len(),
        }
    }

    pub fn validate(&self, shape: ModelShape) -> Result<()> {
        let checks = [
            ("RbmParams.a", self.a.len(), shape.n_omega),
            ("RbmParams.b", self.b.len(), shape.n_visible),
            ("RbmParams.c", self.c.len(), shape.n_hidden),
            ("RbmParams.w rows", self.w.rows(), shape.n_visible),
            ("RbmParams.w cols", self.w.cols(), shape.n_hidden),
            ("RbmParams.u rows", self.u.rows(), shape.n_omega),
            ("RbmParams.u cols", self.u.cols(), shape.n_visible),
            ("RbmParams.z", self.z.len(), shape.n_omega),
        ];
        for (context, actual, expected) in checks {
            if actual != expected {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        let finite = self.a.iter().chain(&self.b).chain(&self.c).chain(&self.z);
        if finite.clone().any(|v| !v.is_finite()) || !self.w.is_finite() || !self.u.is_finite() {
            return Err(Error::InvalidParameter(
                "RbmParams contains non-finite entries".into(),
            ));
        }
        Ok(())
    }
}

/// One joint configuration of the spin layers; entries are exactly -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfig {
    pub v: Vec<i8>,
    pub h: Vec<i8>,
}

impl SpinConfig {
    pub fn new(v: Vec<i8>, h: Vec<i8>) -> Result<Self> {
        if v.iter().chain(&h).any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(
                "spin entries must be -1 or +1".into(),
            ));
        }
        Ok(SpinConfig { v, h })
    }

    /// Spin configuration for enumeration index `idx`: bit i of `idx` maps to
    /// spin +1, low bits are visible units. This ordering is shared by the
    /// partition function, the exact sampler, and the model expectations.
    pub fn from_index(idx: usize, shape: ModelShape) -> Self {
        let spin = |bit: usize| -> i8 {
            if idx >> bit & 1 == 1 {
                1
            } else {
                -1
            }
        };
        SpinConfig {
            v: (0..shape.n_visible).map(spin).collect(),
            h: (shape.n_visible..shape.n_spins()).map(spin).collect(),
        }
    }
}

/// One joint draw: a frequency vector with the spins that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub omega: Vec<f64>,
    pub spins: SpinConfig,
}

fn check_dims(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Ising energy of the spin layers:
/// `E(v,h) = -sum_j b_j v_j - sum_k c_k h_k - sum_jk v_j w_jk h_k`.
pub fn energy_discrete(spins: &SpinConfig, params: &RbmParams) -> Result<f64> {
    check_dims("energy_discrete v", params.b.len(), spins.v.len())?;
    check_dims("energy_discrete h", params.c.len(), spins.h.len())?;
    Ok(energy_discrete_unchecked(spins, params))
}

#[inline]
pub(crate) fn energy_discrete_unchecked(spins: &SpinConfig, params: &RbmParams) -> f64 {
    let mut e = 0.0;
    for (j, &vj) in spins.v.iter().enumerate() {
        let vj = vj as f64;
        e -= params.b[j] * vj;
        let wrow = params.w.row(j);
        let mut coupling = 0.0;
        for (k, &hk) in spins.h.iter().enumerate() {
            coupling += wrow[k] * hk as f64;
        }
        e -= vj * coupling;
    }
    for (k, &hk) in spins.h.iter().enumerate() {
        e -= params.c[k] * hk as f64;
    }
    e
}

/// Gaussian-layer energy:
/// `E(omega|v) = sum_i (omega_i - a_i)^2 / (2 e^{z_i}) - sum_ij (omega_i / e^{z_i}) u_ij v_j`.
pub fn energy_gaussian(omega: &[f64], v: &[i8], params: &RbmParams) -> Result<f64> {
    check_dims("energy_gaussian omega", params.a.len(), omega.len())?;
    check_dims("energy_gaussian v", params.u.cols(), v.len())?;
    let mut e = 0.0;
    for i in 0..omega.len() {
        let var = params.z[i].exp();
        let centered = omega[i] - params.a[i];
        e += centered * centered / (2.0 * var);
        let urow = params.u.row(i);
        let mut coupling = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            coupling += urow[j] * vj as f64;
        }
        e -= omega[i] / var * coupling;
    }
    Ok(e)
}

/// Mean and variance of `omega | v`: mean `a + U v`, variance `e^{z_i}`.
pub fn conditional_gaussian_stats(v: &[i8], params: &RbmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims("conditional_gaussian_stats v", params.u.cols(), v.len())?;
    let vf: Vec<f64> = v.iter().map(|&s| s as f64).collect();
    let shift = params.u.matvec(&vf)?;
    let mean: Vec<f64> = params
        .a
        .iter()
        .zip(&shift)
        .map(|(ai, si)| ai + si)
        .collect();
    let variance: Vec<f64> = params.z.iter().map(|zi| zi.exp()).collect();
    Ok((mean, variance))
}

/// Boltzmann weights `exp(-beta * E(state))` for every enumerated spin state,
/// shifted by the minimum energy so the largest weight is 1.
pub(crate) fn enumerate_weights(params: &RbmParams, shape: ModelShape, beta: f64) -> Vec<f64> {
    let energies = exec::map_indexed(shape.n_states(), |idx| {
        energy_discrete_unchecked(&SpinConfig::from_index(idx, shape), params)
    });
    let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    energies.iter().map(|e| (-beta * (e - min)).exp()).collect()
}

/// Partition function `Z = sum over all spin states of exp(-E)`.
pub fn partition_discrete(params: &RbmParams, shape: ModelShape) -> Result<f64> {
    params.validate(shape)?;
    shape.require_enumerable()?;
    Ok(log_partition_discrete(params, shape).exp())
}

/// `log Z`, computed with a max-energy shift so large biases stay finite.
pub(crate) fn log_partition_discrete(params: &RbmParams, shape: ModelShape) -> f64 {
    let energies = exec::map_indexed(shape.n_states(), |idx| {
        energy_discrete_unchecked(&SpinConfig::from_index(idx, shape), params)
    });
    let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let sum: f64 = energies.iter().map(|e| (-(e - min)).exp()).sum();
    sum.ln() - min
}

/// Exact normalized log joint density of the generative process:
/// `log N(omega; a + U v, diag e^z) + (-E(v,h) - log Z)`.
///
/// Exponentiating and summing over all spins while integrating over omega
/// yields 1; the Gaussian normalizer is included so densities stay
/// comparable across updates of `z`.
pub fn log_density(sample: &SpectralSample, params: &RbmParams, shape: ModelShape) -> Result<f64> {
    params.validate(shape)?;
    shape.require_enumerable()?;
    check_dims("log_density omega", shape.n_omega, sample.omega.len())?;
    check_dims("log_density v", shape.n_visible, sample.spins.v.len())?;
    check_dims("log_density h", shape.n_hidden, sample.spins.h.len())?;

    let (mean, variance) = conditional_gaussian_stats(&sample.spins.v, params)?;
    let mut log_gauss = 0.0;
    for i in 0..shape.n_omega {
        let centered = sample.omega[i] - mean[i];
        log_gauss -= centered * centered / (2.0 * variance[i]);
        log_gauss -= 0.5 * (LN_2PI + params.z[i]);
    }
    let log_disc =
        -energy_discrete_unchecked(&sample.spins, params) - log_partition_discrete(params, shape);
    Ok(log_gauss + log_disc)
}

/// Exact Boltzmann expectations `<v>`, `<h>`, `<v h^T>` over the spin layers.
pub(crate) struct SpinExpectations {
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    /// `n_visible x n_hidden`
    pub vh: Mat,
}

pub(crate) fn spin_expectations(params: &RbmParams, shape: ModelShape) -> SpinExpectations {
    let weights = enumerate_weights(params, shape, 1.0);
    let total: f64 = weights.iter().sum();
    let mut ev = vec![0.0; shape.n_visible];
    let mut eh = vec![0.0; shape.n_hidden];
    let mut evh = Mat::zeros(shape.n_visible, shape.n_hidden);
    for (idx, &wt) in weights.iter().enumerate() {
        let p = wt / total;
        let spins = SpinConfig::from_index(idx, shape);
        for (j, &vj) in spins.v.iter().enumerate() {
            ev[j] += p * vj as f64;
            let row = evh.row_mut(j);
            for (k, &hk) in spins.h.iter().enumerate() {
                row[k] += p * (vj as f64) * (hk as f64);
            }
        }
        for (k, &hk) in spins.h.iter().enumerate() {
            eh[k] += p * hk as f64;
        }
    }
    SpinExpectations {
        v: ev,
        h: eh,
        vh: evh,
    }
}
