//! Kernel perceptron over a fixed feature map.
//!
//! Dual coefficients start at zero and grow by the learning rate on each
//! misclassification, clamped at 0.5 to keep any single point from
//! dominating; the sign of a point is carried by its label, so alpha stays
//! non-negative.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::rff::FeatureVector;
use crate::rng::{stream, Lane};
use crate::{exec, Error, Mat, Result};

/// Regularization cap on every dual coefficient.
pub const ALPHA_CAP: f64 = 0.5;

/// Trained dual-form perceptron bound to its support features.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronModel {
    pub alpha: Vec<f64>,
    /// `N x 2S` features of the training points.
    pub support_features: Mat,
    pub labels: Vec<f64>,
    pub alpha_cap: f64,
    pub learning_rate: f64,
}

impl PerceptronModel {
    /// `sum_i alpha_i y_i phi(x_i)` as one weight vector in feature space.
    pub fn weight_vector(&self) -> Vec<f64> {
        let dim = self.support_features.cols();
        let mut weights = vec![0.0; dim];
        for (i, row) in self.support_features.iter_rows().enumerate() {
            let coeff = self.alpha[i] * self.labels[i];
            if coeff == 0.0 {
                continue;
            }
            for (wd, &f) in weights.iter_mut().zip(row) {
                *wd += coeff * f;
            }
        }
        weights
    }

    pub fn decision_value(&self, x_features: &FeatureVector) -> Result<f64> {
        if x_features.dim() != self.support_features.cols() {
            return Err(Error::DimensionMismatch {
                context: "predict",
                expected: self.support_features.cols(),
                actual: x_features.dim(),
            });
        }
        Ok(dot(&self.weight_vector(), &x_features.0))
    }
}

#[inline]
fn sign(score: f64) -> f64 {
    // sign(0) = +1 so predictions are deterministic
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `sign(sum_i alpha_i y_i k(x_i, x))` for one embedded point.
pub fn predict(model: &PerceptronModel, x_features: &FeatureVector) -> Result<f64> {
    Ok(sign(model.decision_value(x_features)?))
}

fn validate_labels(y: &[f64]) -> Result<()> {
    for &yi in y {
        if yi != 1.0 && yi != -1.0 {
            return Err(Error::InvalidLabel(yi));
        }
    }
    Ok(())
}

/// Trains the perceptron over precomputed features (`N x 2S`).
///
/// Each epoch visits the points in a fresh seeded shuffle; a misclassified
/// point gets `learning_rate` added to its coefficient, clamped at
/// [`ALPHA_CAP`]. Scores during training run over a precomputed Gram matrix.
pub fn train_perceptron(
    features: &Mat,
    y: &[f64],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<PerceptronModel> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "perceptron needs at least one training point".into(),
        ));
    }
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "train_perceptron labels",
            expected: n,
            actual: y.len(),
        });
    }
    validate_labels(y)?;
    if !(learning_rate > 0.0) || !learning_rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "learning_rate must be positive and finite, got {learning_rate}"
        )));
    }

    let gram: Vec<Vec<f64>> = exec::map_indexed(n, |i| {
        let fi = features.row(i);
        (0..n).map(|j| dot(fi, features.row(j))).collect()
    });

    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        let mut rng = stream(seed, Lane::PerceptronShuffle, epoch as u64);
        order.shuffle(&mut rng);
        for &i in &order {
            let mut score = 0.0;
            for j in 0..n {
                if alpha[j] != 0.0 {
                    score += alpha[j] * y[j] * gram[j][i];
                }
            }
            if sign(score) != y[i] {
                alpha[i] = (alpha[i] + learning_rate).min(ALPHA_CAP);
            }
        }
    }

    Ok(PerceptronModel {
        alpha,
        support_features: features.clone(),
        labels: y.to_vec(),
        alpha_cap: ALPHA_CAP,
        learning_rate,
    })
}

/// Fraction of rows whose prediction matches the label.
pub fn evaluate(model: &PerceptronModel, features: &Mat, y: &[f64]) -> Result<f64> {
    if features.rows() == 0 {
        return Err(Error::InvalidParameter(
            "evaluate needs at least one point".into(),
        ));
    }
    if features.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "evaluate labels",
            expected: features.rows(),
            actual: y.len(),
        });
    }
    if features.cols() != model.support_features.cols() {
        return Err(Error::DimensionMismatch {
            context: "evaluate features",
            expected: model.support_features.cols(),
            actual: features.cols(),
        });
    }
    validate_labels(y)?;
    let weights = model.weight_vector();
    let hits = features
        .iter_rows()
        .zip(y)
        .filter(|(row, &yi)| sign(dot(&weights, row)) == yi)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

/// Checkpoint document. The support features are not stored — they are
/// recomputed from the dataset and the frequency bank, and `bank_sha256`
/// pins which bank that must be.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    alpha: Vec<f64>,
    labels: Vec<f64>,
    alpha_cap: f64,
    learning_rate: f64,
    bank_sha256: String,
}

pub fn model_to_json(model: &PerceptronModel, bank_sha256: &str) -> Result<String> {
    crate::io::to_json_g17(&ModelDoc {
        alpha: model.alpha.clone(),
        labels: model.labels.clone(),
        alpha_cap: model.alpha_cap,
        learning_rate: model.learning_rate,
        bank_sha256: bank_sha256.to_string(),
    })
}

/// Rebuilds a model from its checkpoint plus freshly computed support
/// features. Fails if the bank hash or dimensions disagree.
pub fn model_from_json(
    json: &str,
    bank_sha256: &str,
    support_features: Mat,
) -> Result<PerceptronModel> {
    let doc: ModelDoc = serde_json::from_str(json)
        .map_err(|e| Error::parse("model checkpoint", 0, e.to_string()))?;
    if doc.bank_sha256 != bank_sha256 {
        return Err(Error::CheckpointMismatch(format!(
            "model was trained against bank {} but got {}",
            doc.bank_sha256, bank_sha256
        )));
    }
    if doc.alpha.len() != support_features.rows() {
        return Err(Error::DimensionMismatch {
            context: "model checkpoint support points",
            expected: doc.alpha.len(),
            actual: support_features.rows(),
        });
    }
    validate_labels(&doc.labels)?;
    Ok(PerceptronModel {
        alpha: doc.alpha,
        support_features,
        labels: doc.labels,
        alpha_cap: doc.alpha_cap,
        learning_rate: doc.learning_rate,
    })
}
