//! Kernel-alignment training of the spectral model.
//!
//! The loss is the negated label alignment of the approximate kernel,
//! `L = -(1/N^2) sum_ij y_i y_j k(x_i, x_j)`, computed through the mean
//! label-weighted embedding so it is always `-||m||^2 <= 0`. Its gradient
//! with respect to the model parameters is the score-function (REINFORCE)
//! estimate over the joint samples that built the frequency bank: each
//! sample's kernel-space weight multiplies the gradient of its own log
//! density. An optional mean-score baseline reduces the estimator's variance
//! without changing its expectation.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::io::fmt_g17;
use crate::linalg::dot;
use crate::model::{
    conditional_gaussian_stats, spin_expectations, ModelShape, RbmParams, SpectralSample,
    SpinExpectations,
};
use crate::rff::{bank_from_batch, parse_float_row, FrequencyBank};
use crate::rng::{mix, stream, Lane};
use crate::sampler::{sample_spectral_batch, SampleBatch, SamplerBackend};
use crate::{exec, Error, Mat, Result};

/// Gradient with respect to every parameter block, shape-congruent with
/// [`RbmParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    pub dc: Vec<f64>,
    pub dw: Mat,
    pub du: Mat,
    pub dz: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(shape: ModelShape) -> Self {
        GradientSet {
            da: vec![0.0; shape.n_omega],
            db: vec![0.0; shape.n_visible],
            dc: vec![0.0; shape.n_hidden],
            dw: Mat::zeros(shape.n_visible, shape.n_hidden),
            du: Mat::zeros(shape.n_omega, shape.n_visible),
            dz: vec![0.0; shape.n_omega],
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.da
            .iter()
            .chain(&self.db)
            .chain(&self.dc)
            .chain(self.dw.data())
            .chain(self.du.data())
            .chain(&self.dz)
            .copied()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.da
            .iter_mut()
            .chain(self.db.iter_mut())
            .chain(self.dc.iter_mut())
            .chain(self.dw.data_mut().iter_mut())
            .chain(self.du.data_mut().iter_mut())
            .chain(self.dz.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (dst, src) in self.values_mut().zip(other.values()) {
            *dst += scale * src;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }
}

fn params_values_mut(params: &mut RbmParams) -> impl Iterator<Item = &mut f64> {
    params
        .a
        .iter_mut()
        .chain(params.b.iter_mut())
        .chain(params.c.iter_mut())
        .chain(params.w.data_mut().iter_mut())
        .chain(params.u.data_mut().iter_mut())
        .chain(params.z.iter_mut())
}

/// Gradient-descent flavor for the parameter update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct OptimizerState {
    first: GradientSet,
    second: GradientSet,
    step: u64,
}

impl OptimizerState {
    fn new(shape: ModelShape) -> Self {
        OptimizerState {
            first: GradientSet::zeros(shape),
            second: GradientSet::zeros(shape),
            step: 0,
        }
    }

    fn update(
        &mut self,
        optimizer: Optimizer,
        params: &mut RbmParams,
        grad: &GradientSet,
        lr: f64,
    ) {
        self.step += 1;
        match optimizer {
            Optimizer::Sgd => {
                for (p, g) in params_values_mut(params).zip(grad.values()) {
                    *p -= lr * g;
                }
            }
            Optimizer::Momentum { beta } => {
                for ((p, g), m) in params_values_mut(params)
                    .zip(grad.values())
                    .zip(self.first.values_mut())
                {
                    *m = beta * *m + g;
                    *p -= lr * *m;
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step as f64;
                let bias1 = 1.0 - beta1.powf(t);
                let bias2 = 1.0 - beta2.powf(t);
                for (((p, g), m), v) in params_values_mut(params)
                    .zip(grad.values())
                    .zip(self.first.values_mut())
                    .zip(self.second.values_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bias1) / ((*v / bias2).sqrt() + epsilon);
                }
            }
        }
    }
}

/// Training-loop configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTrainConfig {
    pub epochs: usize,
    /// Samples per step S; also the Monte Carlo size of the feature map.
    pub samples_per_step: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub backend: SamplerBackend,
    pub baseline_subtraction: bool,
    pub optimizer: Optimizer,
}

impl Default for KernelTrainConfig {
    fn default() -> Self {
        KernelTrainConfig {
            epochs: 200,
            samples_per_step: 1000,
            learning_rate: 0.01,
            seed: 0,
            backend: SamplerBackend::exact(),
            baseline_subtraction: true,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl KernelTrainConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero is allowed as an explicit null update; negative rates are not.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be non-negative and finite, got {}",
                self.learning_rate
            )));
        }
        if self.samples_per_step == 0 {
            return Err(Error::InvalidParameter(
                "samples_per_step must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch loss values, in epoch order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace(pub Vec<f64>);

impl LossTrace {
    /// CSV with header `epoch,loss`, epochs numbered from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,loss")?;
        for (i, loss) in self.0.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, fmt_g17(*loss))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut values = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "epoch,loss" {
                    return Err(Error::parse(
                        "loss trace",
                        0,
                        format!("expected epoch,loss header, got {line:?}"),
                    ));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let row = parse_float_row(&line, "loss trace", lineno as u64)?;
            if row.len() != 2 {
                return Err(Error::parse("loss trace", lineno as u64, "expected 2 columns"));
            }
            values.push(row[1]);
        }
        Ok(LossTrace(values))
    }
}

fn validate_labels(y: &[f64]) -> Result<()> {
    for &yi in y {
        if yi != 1.0 && yi != -1.0 {
            return Err(Error::InvalidLabel(yi));
        }
    }
    Ok(())
}

fn validate_dataset(xs: &Mat, y: &[f64]) -> Result<()> {
    if xs.rows() == 0 {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    if xs.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: xs.rows(),
            actual: y.len(),
        });
    }
    validate_labels(y)
}

/// Per-frequency label coherence: for each `w_s`, the pair
/// `(1/N sum_i y_i cos(w_s x_i), 1/N sum_i y_i sin(w_s x_i))`.
/// The label-weighted mean embedding is these pairs scaled by `1/sqrt(S)`.
fn coherence(xs: &Mat, y: &[f64], bank: &FrequencyBank) -> Vec<(f64, f64)> {
    let inv_n = 1.0 / xs.rows() as f64;
    exec::map_indexed(bank.len(), |s| {
        let omega = bank.omega(s);
        let mut c = 0.0;
        let mut d = 0.0;
        for (i, row) in xs.iter_rows().enumerate() {
            let (sin, cos) = dot(omega, row).sin_cos();
            c += y[i] * cos;
            d += y[i] * sin;
        }
        (c * inv_n, d * inv_n)
    })
}

fn loss_from_coherence(coh: &[(f64, f64)]) -> f64 {
    let total: f64 = coh.iter().map(|&(c, d)| c * c + d * d).sum();
    -total / coh.len() as f64
}

/// Negated kernel alignment `-(1/N^2) sum_ij y_i y_j k(x_i, x_j)`, computed
/// as `-||(1/N) sum_i y_i phi(x_i)||^2`, so the result is always `<= 0`.
pub fn alignment_loss(xs: &Mat, y: &[f64], bank: &FrequencyBank) -> Result<f64> {
    validate_dataset(xs, y)?;
    if xs.cols() != bank.dim() {
        return Err(Error::DimensionMismatch {
            context: "alignment_loss",
            expected: bank.dim(),
            actual: xs.cols(),
        });
    }
    Ok(loss_from_coherence(&coherence(xs, y, bank)))
}

/// Exact model expectations arranged as a gradient-shaped value: `db = <v>`,
/// `dc = <h>`, `dw = <v h^T>` by enumeration; Gaussian blocks are zero (the
/// Gaussian normalizer is differentiated in closed form inside
/// [`score_function`]).
pub fn expectation_term(params: &RbmParams, shape: ModelShape) -> Result<GradientSet> {
    params.validate(shape)?;
    shape.require_enumerable()?;
    let expectations = spin_expectations(params, shape);
    let mut grad = GradientSet::zeros(shape);
    grad.db = expectations.v;
    grad.dc = expectations.h;
    grad.dw = expectations.vh;
    Ok(grad)
}

fn score_given(
    sample: &SpectralSample,
    params: &RbmParams,
    shape: ModelShape,
    expectations: &SpinExpectations,
) -> Result<GradientSet> {
    let (mean, variance) = conditional_gaussian_stats(&sample.spins.v, params)?;
    if sample.omega.len() != shape.n_omega {
        return Err(Error::DimensionMismatch {
            context: "score_function omega",
            expected: shape.n_omega,
            actual: sample.omega.len(),
        });
    }
    let mut grad = GradientSet::zeros(shape);
    for i in 0..shape.n_omega {
        let resid = (sample.omega[i] - mean[i]) / variance[i];
        grad.da[i] = resid;
        let row = grad.du.row_mut(i);
        for (j, &vj) in sample.spins.v.iter().enumerate() {
            row[j] = resid * vj as f64;
        }
        grad.dz[i] = (resid * (sample.omega[i] - mean[i]) - 1.0) / 2.0;
    }
    for (j, &vj) in sample.spins.v.iter().enumerate() {
        grad.db[j] = vj as f64 - expectations.v[j];
        let row = grad.dw.row_mut(j);
        for (k, &hk) in sample.spins.h.iter().enumerate() {
            row[k] = (vj as f64) * (hk as f64) - expectations.vh.get(j, k);
        }
    }
    for (k, &hk) in sample.spins.h.iter().enumerate() {
        grad.dc[k] = hk as f64 - expectations.h[k];
    }
    Ok(grad)
}

/// Per-sample score `d log p(omega, v, h | theta) / d theta` of the
/// factorized generative density.
///
/// Gaussian blocks are the closed-form residual terms (`da_i` carries
/// `(omega_i - mu_i)/e^{z_i}`, `dz_i` carries the half chi-square residual),
/// spin blocks subtract the exact enumerated Boltzmann expectations.
pub fn score_function(
    sample: &SpectralSample,
    params: &RbmParams,
    shape: ModelShape,
) -> Result<GradientSet> {
    params.validate(shape)?;
    shape.require_enumerable()?;
    let expectations = spin_expectations(params, shape);
    score_given(sample, params, shape, &expectations)
}

/// Scores for a whole batch, with the model expectations enumerated once.
pub fn score_function_batch(
    samples: &[SpectralSample],
    params: &RbmParams,
    shape: ModelShape,
) -> Result<Vec<GradientSet>> {
    params.validate(shape)?;
    shape.require_enumerable()?;
    let expectations = spin_expectations(params, shape);
    samples
        .iter()
        .map(|s| score_given(s, params, shape, &expectations))
        .collect()
}

fn gradient_from_batch(
    batch: &SampleBatch,
    params: &RbmParams,
    shape: ModelShape,
    coh: &[(f64, f64)],
    baseline_subtraction: bool,
) -> Result<GradientSet> {
    let s_count = batch.samples.len();
    let expectations = spin_expectations(params, shape);
    for sample in &batch.samples {
        if sample.omega.len() != shape.n_omega
            || sample.spins.v.len() != shape.n_visible
            || sample.spins.h.len() != shape.n_hidden
        {
            return Err(Error::DimensionMismatch {
                context: "loss_gradient batch",
                expected: shape.n_omega,
                actual: sample.omega.len(),
            });
        }
    }

    let weights: Vec<f64> = coh.iter().map(|&(c, d)| c * c + d * d).collect();
    let accumulate = |weigh: &(dyn Fn(usize) -> f64 + Sync)| -> GradientSet {
        exec::chunked_fold(
            s_count,
            64,
            || GradientSet::zeros(shape),
            |acc, s| {
                let g = score_given(&batch.samples[s], params, shape, &expectations)
                    .expect("dims validated above");
                acc.add_scaled(&g, weigh(s));
            },
            |mut a, b| {
                a.add_scaled(&b, 1.0);
                a
            },
        )
    };

    let mut weighted = accumulate(&|s| weights[s]);
    if baseline_subtraction {
        let mean_score = accumulate(&|_| 1.0);
        let weight_sum: f64 = weights.iter().sum();
        weighted.add_scaled(&mean_score, -weight_sum / s_count as f64);
    }
    weighted.scale(-1.0 / s_count as f64);
    Ok(weighted)
}

/// REINFORCE estimate of the alignment-loss gradient.
///
/// With per-frequency coherence weights `w_s = C_s^2 + D_s^2` (so that the
/// loss is `-(1/S) sum_s w_s`), the estimate is
/// `-(1/S) sum_s w_s * score(sample_s)`; with `baseline_subtraction` the
/// batch-mean score is removed from each sample's score first.
pub fn loss_gradient(
    xs: &Mat,
    y: &[f64],
    batch: &SampleBatch,
    params: &RbmParams,
    shape: ModelShape,
    baseline_subtraction: bool,
) -> Result<GradientSet> {
    validate_dataset(xs, y)?;
    params.validate(shape)?;
    shape.require_enumerable()?;
    if batch.samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample batch".into()));
    }
    if xs.cols() != shape.n_omega {
        return Err(Error::DimensionMismatch {
            context: "loss_gradient data",
            expected: shape.n_omega,
            actual: xs.cols(),
        });
    }
    let bank = bank_from_batch(batch)?;
    let coh = coherence(xs, y, &bank);
    gradient_from_batch(batch, params, shape, &coh, baseline_subtraction)
}

/// Fresh parameters: spin biases and couplings from `Normal(0, 0.01^2)`,
/// Gaussian bias zero, unit variances (`z = 0`).
pub fn initial_params(shape: ModelShape, seed: u64) -> RbmParams {
    let mut rng = stream(seed, Lane::ParamInit, 0);
    let mut small = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let b = small(shape.n_visible);
    let c = small(shape.n_hidden);
    let w = Mat::from_vec(
        shape.n_visible,
        shape.n_hidden,
        small(shape.n_visible * shape.n_hidden),
    )
    .expect("sized buffer");
    let u = Mat::from_vec(
        shape.n_omega,
        shape.n_visible,
        small(shape.n_omega * shape.n_visible),
    )
    .expect("sized buffer");
    RbmParams {
        a: vec![0.0; shape.n_omega],
        b,
        c,
        w,
        u,
        z: vec![0.0; shape.n_omega],
    }
}

/// One epoch report handed to observers during training.
pub struct EpochReport<'a> {
    pub epoch: usize,
    pub loss: f64,
    pub params: &'a RbmParams,
}

/// [`train_kernel`] with a per-epoch observer, used to keep checkpoints of
/// the last finite state when a run aborts on non-finite values.
pub fn train_kernel_observed(
    xs: &Mat,
    y: &[f64],
    params_init: &RbmParams,
    config: &KernelTrainConfig,
    observer: &mut dyn FnMut(EpochReport),
) -> Result<(RbmParams, LossTrace, FrequencyBank)> {
    validate_dataset(xs, y)?;
    config.validate()?;
    let shape = params_init.shape();
    params_init.validate(shape)?;
    shape.require_enumerable()?;
    if xs.cols() != shape.n_omega {
        return Err(Error::DimensionMismatch {
            context: "train_kernel data",
            expected: shape.n_omega,
            actual: xs.cols(),
        });
    }

    let mut params = params_init.clone();
    let mut state = OptimizerState::new(shape);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut last_bank: Option<FrequencyBank> = None;

    for epoch in 1..=config.epochs {
        let epoch_seed = mix(config.seed, epoch as u64);
        let batch = sample_spectral_batch(
            &params,
            shape,
            config.samples_per_step,
            &config.backend,
            epoch_seed,
        )?;
        let bank = bank_from_batch(&batch)?;
        let coh = coherence(xs, y, &bank);
        let loss = loss_from_coherence(&coh);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                epoch,
            });
        }
        let grad = gradient_from_batch(&batch, &params, shape, &coh, config.baseline_subtraction)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                epoch,
            });
        }
        trace.push(loss);
        state.update(config.optimizer, &mut params, &grad, config.learning_rate);
        if params.validate(shape).is_err() {
            return Err(Error::NonFinite {
                what: "parameters",
                epoch,
            });
        }
        observer(EpochReport {
            epoch,
            loss,
            params: &params,
        });
        last_bank = Some(bank);
    }

    let bank = match last_bank {
        Some(bank) => bank,
        // Zero epochs still yields a usable bank: sampled from the initial
        // parameters with the epoch-0 seed.
        None => {
            let batch = sample_spectral_batch(
                &params,
                shape,
                config.samples_per_step,
                &config.backend,
                mix(config.seed, 0),
            )?;
            bank_from_batch(&batch)?
        }
    };
    Ok((params, LossTrace(trace), bank))
}

/// Runs `epochs` of sample-batch / loss / score-function gradient descent
/// over all parameter blocks, recording the per-epoch loss. Returns the
/// final parameters with the final epoch's frequency bank. Deterministic
/// given the seed.
pub fn train_kernel(
    xs: &Mat,
    y: &[f64],
    params_init: &RbmParams,
    config: &KernelTrainConfig,
) -> Result<(RbmParams, LossTrace, FrequencyBank)> {
    train_kernel_observed(xs, y, params_init, config, &mut |_| {})
}

/// JSON checkpoint with explicit shape fields.
#[derive(Debug, Serialize, Deserialize)]
struct ParamsDoc {
    n_omega: usize,
    n_visible: usize,
    n_hidden: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    w: Mat,
    u: Mat,
    z: Vec<f64>,
}

pub fn params_to_json(params: &RbmParams) -> Result<String> {
    let shape = params.shape();
    params.validate(shape)?;
    crate::io::to_json_g17(&ParamsDoc {
        n_omega: shape.n_omega,
        n_visible: shape.n_visible,
        n_hidden: shape.n_hidden,
        a: params.a.clone(),
        b: params.b.clone(),
        c: params.c.clone(),
        w: params.w.clone(),
        u: params.u.clone(),
        z: params.z.clone(),
    })
}

pub fn params_from_json(json: &str) -> Result<(RbmParams, ModelShape)> {
    let doc: ParamsDoc = serde_json::from_str(json)
        .map_err(|e| Error::parse("params checkpoint", 0, e.to_string()))?;
    let shape = ModelShape::new(doc.n_omega, doc.n_visible, doc.n_hidden)?;
    let params = RbmParams {
        a: doc.a,
        b: doc.b,
        c: doc.c,
        w: doc.w,
        u: doc.u,
        z: doc.z,
    };
    params.validate(shape)?;
    Ok((params, shape))
}
