//! Random Fourier feature maps and kernel approximation.
//!
//! A bank of S frequencies defines the feature map
//! `phi(x) = (1/sqrt(S)) (cos w_1 x, ..., cos w_S x, sin w_1 x, ..., sin w_S x)`,
//! whose inner products reproduce the shift-invariant kernel
//! `k(x - x') = (1/S) sum_s cos(w_s (x - x'))`.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::io::fmt_g17;
use crate::linalg::dot;
use crate::rng::{stream, Lane};
use crate::sampler::SampleBatch;
use crate::{exec, Error, Mat, Result};

/// S frequency vectors of the data dimension, one per Monte Carlo sample of
/// the spectral distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBank {
    omegas: Mat,
}

impl FrequencyBank {
    pub fn new(omegas: Mat) -> Result<Self> {
        if omegas.rows() == 0 || omegas.cols() == 0 {
            return Err(Error::InvalidParameter(
                "frequency bank must be non-empty".into(),
            ));
        }
        if !omegas.is_finite() {
            return Err(Error::InvalidParameter(
                "frequency bank contains non-finite entries".into(),
            ));
        }
        Ok(FrequencyBank { omegas })
    }

    /// Number of frequencies S.
    pub fn len(&self) -> usize {
        self.omegas.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.rows() == 0
    }

    /// Data dimension d.
    pub fn dim(&self) -> usize {
        self.omegas.cols()
    }

    pub fn omega(&self, s: usize) -> &[f64] {
        self.omegas.row(s)
    }

    /// CSV with header `omega_0,...,omega_{d-1}`, one frequency per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|i| format!("omega_{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.omegas.iter_rows() {
            let cells: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("frequency bank", 0, "empty file"))??;
        let dim = header.split(',').count();
        if !header.starts_with("omega_0") {
            return Err(Error::parse(
                "frequency bank",
                0,
                format!("expected omega_* header, got {header:?}"),
            ));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row = parse_float_row(&line, "frequency bank", lineno as u64 + 1)?;
            if row.len() != dim {
                return Err(Error::parse(
                    "frequency bank",
                    lineno as u64 + 1,
                    format!("expected {dim} columns, got {}", row.len()),
                ));
            }
            rows.push(row);
        }
        FrequencyBank::new(Mat::from_rows(&rows)?)
    }
}

pub(crate) fn parse_float_row(line: &str, what: &'static str, lineno: u64) -> Result<Vec<f64>> {
    line.split(',')
        .map(|cell| {
            cell.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(what, lineno, format!("bad float {cell:?}: {e}")))
        })
        .collect()
}

/// The 2S-dimensional embedding of one point; `phi(x) . phi(x) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Gram matrix of kernel values; symmetric with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Mat,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    /// Row-major CSV, no header, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.entries.iter_rows() {
            let cells: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `phi(x)` for one point: cosines of `w_s . x` first, then sines, each
/// scaled by `1/sqrt(S)`.
pub fn feature_map(x: &[f64], bank: &FrequencyBank) -> Result<FeatureVector> {
    if x.len() != bank.dim() {
        return Err(Error::DimensionMismatch {
            context: "feature_map",
            expected: bank.dim(),
            actual: x.len(),
        });
    }
    let s_count = bank.len();
    let scale = 1.0 / (s_count as f64).sqrt();
    let mut values = vec![0.0; 2 * s_count];
    for s in 0..s_count {
        let (sin, cos) = dot(bank.omega(s), x).sin_cos();
        values[s] = scale * cos;
        values[s_count + s] = scale * sin;
    }
    Ok(FeatureVector(values))
}

/// Feature matrix for a dataset: row i is `phi(x_i)`, shape `N x 2S`.
pub fn feature_matrix(xs: &Mat, bank: &FrequencyBank) -> Result<Mat> {
    if xs.cols() != bank.dim() {
        return Err(Error::DimensionMismatch {
            context: "feature_matrix",
            expected: bank.dim(),
            actual: xs.cols(),
        });
    }
    let rows = exec::map_indexed(xs.rows(), |i| feature_map(xs.row(i), bank).unwrap().0);
    Mat::from_rows(&rows)
}

/// Approximate kernel value `phi(x) . phi(x2)`.
pub fn kernel_approx(x: &[f64], x2: &[f64], bank: &FrequencyBank) -> Result<f64> {
    let fx = feature_map(x, bank)?;
    let fx2 = feature_map(x2, bank)?;
    Ok(dot(&fx.0, &fx2.0))
}

/// Gram matrix over a dataset, computed from the `N x 2S` feature matrix
/// product rather than per-pair trigonometry.
pub fn kernel_matrix(xs: &Mat, bank: &FrequencyBank) -> Result<KernelMatrix> {
    if xs.rows() == 0 {
        return Err(Error::InvalidParameter(
            "kernel_matrix needs at least one point".into(),
        ));
    }
    let features = feature_matrix(xs, bank)?;
    let n = features.rows();
    let rows = exec::map_indexed(n, |i| {
        let fi = features.row(i);
        (0..n).map(|j| dot(fi, features.row(j))).collect::<Vec<_>>()
    });
    Ok(KernelMatrix {
        entries: Mat::from_rows(&rows)?,
    })
}

/// S i.i.d. frequencies from `Normal(0, gamma^2 I_d)`: the spectral
/// distribution of the Gaussian kernel `exp(-gamma^2 ||x - x'||^2 / 2)`.
pub fn gaussian_bank(d: usize, s_count: usize, gamma: f64, seed: u64) -> Result<FrequencyBank> {
    if d == 0 || s_count == 0 {
        return Err(Error::InvalidParameter(
            "gaussian_bank needs d >= 1 and S >= 1".into(),
        ));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    let rows = exec::map_indexed(s_count, |i| {
        let mut rng = stream(seed, Lane::GaussianBank, i as u64);
        (0..d)
            .map(|_| gamma * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>()
    });
    FrequencyBank::new(Mat::from_rows(&rows)?)
}

/// Extracts the frequency components of a batch, preserving order.
pub fn bank_from_batch(batch: &SampleBatch) -> Result<FrequencyBank> {
    if batch.samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample batch".into()));
    }
    let rows: Vec<Vec<f64>> = batch.samples.iter().map(|s| s.omega.clone()).collect();
    FrequencyBank::new(Mat::from_rows(&rows)?)
}
