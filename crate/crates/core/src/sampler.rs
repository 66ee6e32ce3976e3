//! Spectral sampling backends.
//!
//! Spins come from one of three interchangeable sources — exact categorical
//! sampling over the enumerated Boltzmann distribution, block Gibbs sweeps,
//! or a remote annealer-style service speaking a small JSON protocol — and
//! each visible configuration is then pushed through the conditional
//! Gaussian to produce a frequency vector.
//!
//! Every draw owns a counter-based RNG stream, so batches are reproducible
//! from their seed and independent of execution order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{
    conditional_gaussian_stats, enumerate_weights, ModelShape, RbmParams, SpectralSample,
    SpinConfig,
};
use crate::rng::{stream, Lane};
use crate::{exec, Error, Result};

/// Which sampling strategy produces the spin layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Exact,
    Gibbs,
    Remote,
}

/// Sampler configuration.
///
/// `effective_beta` scales the Boltzmann distribution the spins are drawn
/// from; real annealers sample at an unknown effective temperature, so this
/// is an explicit knob (the model itself is defined at beta = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerBackend {
    pub kind: BackendKind,
    pub gibbs_burn_in: usize,
    pub gibbs_thinning: usize,
    pub remote_endpoint: Option<String>,
    pub effective_beta: f64,
}

impl Default for SamplerBackend {
    fn default() -> Self {
        SamplerBackend {
            kind: BackendKind::Exact,
            gibbs_burn_in: 100,
            gibbs_thinning: 10,
            remote_endpoint: None,
            effective_beta: 1.0,
        }
    }
}

impl SamplerBackend {
    pub fn exact() -> Self {
        SamplerBackend::default()
    }

    pub fn gibbs() -> Self {
        SamplerBackend {
            kind: BackendKind::Gibbs,
            ..SamplerBackend::default()
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        SamplerBackend {
            kind: BackendKind::Remote,
            remote_endpoint: Some(endpoint.into()),
            ..SamplerBackend::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.effective_beta = beta;
        self
    }

    pub fn with_gibbs_schedule(mut self, burn_in: usize, thinning: usize) -> Self {
        self.gibbs_burn_in = burn_in;
        self.gibbs_thinning = thinning;
        self
    }

    pub fn validate(&self, shape: ModelShape) -> Result<()> {
        if !(self.effective_beta > 0.0) || !self.effective_beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "effective_beta must be positive and finite, got {}",
                self.effective_beta
            )));
        }
        match self.kind {
            BackendKind::Exact => shape.require_enumerable(),
            BackendKind::Gibbs => {
                if self.gibbs_thinning == 0 {
                    return Err(Error::InvalidParameter(
                        "gibbs_thinning must be positive".into(),
                    ));
                }
                Ok(())
            }
            BackendKind::Remote => {
                if self.remote_endpoint.is_none() {
                    return Err(Error::InvalidParameter(
                        "remote backend requires an endpoint".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A batch of joint draws, tagged with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<SpectralSample>,
    pub seed: u64,
}

/// Draws `count` spin configurations from `exp(-beta * E) / Z`.
///
/// Exact and Gibbs draws are independent across indices; the remote backend
/// issues a single request and expands occurrence counts in response order.
pub fn sample_discrete(
    params: &RbmParams,
    shape: ModelShape,
    count: usize,
    backend: &SamplerBackend,
    seed: u64,
) -> Result<Vec<SpinConfig>> {
    params.validate(shape)?;
    backend.validate(shape)?;
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    match backend.kind {
        BackendKind::Exact => Ok(sample_exact(params, shape, count, backend.effective_beta, seed)),
        BackendKind::Gibbs => Ok(sample_gibbs(params, shape, count, backend, seed)),
        BackendKind::Remote => {
            let endpoint = backend.remote_endpoint.as_deref().unwrap();
            let fields = ising_fields(params);
            let reads = remote_sample(
                &fields,
                count as u64,
                backend.effective_beta,
                shape.n_visible,
                endpoint,
            )?;
            let mut out = Vec::with_capacity(count);
            for (spins, occurrences) in reads {
                if spins.v.len() != shape.n_visible || spins.h.len() != shape.n_hidden {
                    return Err(Error::Remote(format!(
                        "response spin length {} does not match shape {}",
                        spins.v.len() + spins.h.len(),
                        shape.n_spins()
                    )));
                }
                for _ in 0..occurrences {
                    out.push(spins.clone());
                }
            }
            Ok(out)
        }
    }
}

fn sample_exact(
    params: &RbmParams,
    shape: ModelShape,
    count: usize,
    beta: f64,
    seed: u64,
) -> Vec<SpinConfig> {
    let weights = enumerate_weights(params, shape, beta);
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    exec::map_indexed(count, |i| {
        let mut rng = stream(seed, Lane::ExactDraw, i as u64);
        let target: f64 = rng.gen::<f64>() * total;
        let idx = cumulative.partition_point(|&cum| cum <= target);
        SpinConfig::from_index(idx.min(weights.len() - 1), shape)
    })
}

fn sample_gibbs(
    params: &RbmParams,
    shape: ModelShape,
    count: usize,
    backend: &SamplerBackend,
    seed: u64,
) -> Vec<SpinConfig> {
    let sweeps = backend.gibbs_burn_in + backend.gibbs_thinning;
    let beta = backend.effective_beta;
    exec::map_indexed(count, |i| {
        let mut rng = stream(seed, Lane::GibbsChain, i as u64);
        let flip = |rng: &mut rand_chacha::ChaCha8Rng| if rng.gen::<bool>() { 1i8 } else { -1 };
        let mut spins = SpinConfig {
            v: (0..shape.n_visible).map(|_| flip(&mut rng)).collect(),
            h: (0..shape.n_hidden).map(|_| flip(&mut rng)).collect(),
        };
        for _ in 0..sweeps {
            gibbs_sweep(&mut spins, params, beta, &mut rng);
        }
        spins
    })
}

/// One block update: resample every hidden unit given `v`, then every
/// visible unit given the new `h`. Each conditional flip probability is
/// `logistic(2 * beta * local_field)`, which leaves the Boltzmann
/// distribution at `beta` invariant.
pub fn gibbs_sweep<R: Rng>(spins: &mut SpinConfig, params: &RbmParams, beta: f64, rng: &mut R) {
    for k in 0..spins.h.len() {
        let mut field = params.c[k];
        for (j, &vj) in spins.v.iter().enumerate() {
            field += params.w.get(j, k) * vj as f64;
        }
        let p_up = logistic(2.0 * beta * field);
        spins.h[k] = if rng.gen::<f64>() < p_up { 1 } else { -1 };
    }
    for j in 0..spins.v.len() {
        let mut field = params.b[j];
        let wrow = params.w.row(j);
        for (k, &hk) in spins.h.iter().enumerate() {
            field += wrow[k] * hk as f64;
        }
        let p_up = logistic(2.0 * beta * field);
        spins.v[j] = if rng.gen::<f64>() < p_up { 1 } else { -1 };
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws `omega ~ Normal(a + U v, diag e^z)`, componentwise independent.
pub fn sample_omega<R: Rng>(v: &[i8], params: &RbmParams, rng: &mut R) -> Result<Vec<f64>> {
    let (mean, variance) = conditional_gaussian_stats(v, params)?;
    Ok(mean
        .iter()
        .zip(&variance)
        .map(|(&m, &var)| {
            let unit: f64 = rng.sample(StandardNormal);
            m + var.sqrt() * unit
        })
        .collect())
}

/// Draws `count` joint samples: spins from the backend, then the conditional
/// Gaussian for each visible configuration. Reproducible from `seed`.
pub fn sample_spectral_batch(
    params: &RbmParams,
    shape: ModelShape,
    count: usize,
    backend: &SamplerBackend,
    seed: u64,
) -> Result<SampleBatch> {
    let spins = sample_discrete(params, shape, count, backend, seed)?;
    let samples: Vec<Result<SpectralSample>> = exec::map_indexed(count, |i| {
        let mut rng = stream(seed, Lane::Omega, i as u64);
        let omega = sample_omega(&spins[i].v, params, &mut rng)?;
        Ok(SpectralSample {
            omega,
            spins: spins[i].clone(),
        })
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch { samples, seed })
}

/// Ising problem fields for the remote service.
///
/// The service samples spins proportional to `exp(-beta * H)` with
/// `H(s) = sum_i h_i s_i + sum_(i,j) J_ij s_i s_j`, so the model's biases
/// and couplings are negated to make `H` coincide with the discrete energy.
/// Qubit order: indices `0..Nv` carry `v`, `Nv..Nv+Nh` carry `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingFields {
    pub h: Vec<f64>,
    #[serde(rename = "J")]
    pub j: Vec<(usize, usize, f64)>,
}

pub fn ising_fields(params: &RbmParams) -> IsingFields {
    let n_visible = params.b.len();
    let mut h: Vec<f64> = params.b.iter().map(|&bi| -bi).collect();
    h.extend(params.c.iter().map(|&ci| -ci));
    let mut j = Vec::with_capacity(params.b.len() * params.c.len());
    for jv in 0..params.w.rows() {
        for k in 0..params.w.cols() {
            j.push((jv, n_visible + k, -params.w.get(jv, k)));
        }
    }
    IsingFields { h, j }
}

/// Wire request: POST body of `/sample`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub h: Vec<f64>,
    #[serde(rename = "J")]
    pub j: Vec<(usize, usize, f64)>,
    pub num_reads: u64,
    pub beta: f64,
}

/// Wire response: spin reads with occurrence counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub samples: Vec<RemoteRead>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteRead {
    pub spins: Vec<i8>,
    pub occurrences: u64,
}

/// POSTs the fields to `{endpoint}/sample` and parses the reads back into
/// spin configurations with occurrence counts. Qubit order follows
/// [`IsingFields`]: the first `n_visible` spins are `v`, the rest are `h`.
pub fn remote_sample(
    fields: &IsingFields,
    num_reads: u64,
    beta: f64,
    n_visible: usize,
    endpoint: &str,
) -> Result<Vec<(SpinConfig, u64)>> {
    let n = fields.h.len();
    if n_visible > n {
        return Err(Error::InvalidParameter(format!(
            "n_visible {n_visible} exceeds total spin count {n}"
        )));
    }
    for &(i, j, _) in &fields.j {
        if i >= n || j >= n {
            return Err(Error::InvalidParameter(format!(
                "coupling ({i},{j}) out of range for {n} spins"
            )));
        }
    }
    let url = format!("{}/sample", endpoint.trim_end_matches('/'));
    let request = RemoteRequest {
        h: fields.h.clone(),
        j: fields.j.clone(),
        num_reads,
        beta,
    };
    let body = serde_json::to_string(&request)
        .map_err(|e| Error::Remote(format!("request encoding failed: {e}")))?;
    let response = ureq::post(&url)
        .set("content-type", "application/json")
        .send_string(&body)
        .map_err(|e| Error::Remote(format!("POST {url} failed: {e}")))?;
    let text = response
        .into_string()
        .map_err(|e| Error::Remote(format!("reading response failed: {e}")))?;
    let parsed: RemoteResponse = serde_json::from_str(&text)
        .map_err(|e| Error::Remote(format!("malformed response: {e}")))?;

    let mut total = 0u64;
    let mut out = Vec::with_capacity(parsed.samples.len());
    for read in parsed.samples {
        if read.spins.len() != n {
            return Err(Error::Remote(format!(
                "read has {} spins, expected {n}",
                read.spins.len()
            )));
        }
        let (v, h) = read.spins.split_at(n_visible);
        let spins = SpinConfig::new(v.to_vec(), h.to_vec())
            .map_err(|e| Error::Remote(format!("bad spin values: {e}")))?;
        total += read.occurrences;
        out.push((spins, read.occurrences));
    }
    if total != num_reads {
        return Err(Error::Remote(format!(
            "occurrence counts sum to {total}, expected {num_reads}"
        )));
    }
    Ok(out)
}
