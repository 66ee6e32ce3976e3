//! Run configuration: one JSON document drives every subcommand.
//!
//! Unknown fields are rejected and every numeric constraint is checked
//! before any command does work, so a bad config never leaves partial
//! outputs behind. The published schema lives in `docs/runconfig.schema.json`.

use std::path::{Path, PathBuf};

use boltzrff::learn::Optimizer;
use boltzrff::model::ModelShape;
use boltzrff::sampler::{BackendKind, SamplerBackend};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub kernel_training: KernelTrainingConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub images_path: PathBuf,
    pub labels_path: PathBuf,
    #[serde(default)]
    pub class_a: u8,
    #[serde(default = "default_class_b")]
    pub class_b: u8,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_class_b() -> u8 {
    1
}

fn default_per_class() -> usize {
    1000
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_omega: usize,
    pub n_visible: usize,
    pub n_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_omega: 10,
            n_visible: 4,
            n_hidden: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTrainingConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_samples")]
    pub samples_per_step: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_true")]
    pub baseline_subtraction: bool,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for KernelTrainingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn default_epochs() -> usize {
    200
}

fn default_samples() -> usize {
    1000
}

fn default_learning_rate() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default = "default_backend_kind")]
    pub kind: BackendKind,
    #[serde(default = "default_burn_in")]
    pub gibbs_burn_in: usize,
    #[serde(default = "default_thinning")]
    pub gibbs_thinning: usize,
    #[serde(default)]
    pub remote_endpoint: Option<String>,
    #[serde(default = "default_beta")]
    pub effective_beta: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn default_backend_kind() -> BackendKind {
    BackendKind::Exact
}

fn default_burn_in() -> usize {
    100
}

fn default_thinning() -> usize {
    10
}

fn default_beta() -> f64 {
    1.0
}

impl BackendConfig {
    pub fn to_backend(&self) -> SamplerBackend {
        SamplerBackend {
            kind: self.kind,
            gibbs_burn_in: self.gibbs_burn_in,
            gibbs_thinning: self.gibbs_thinning,
            remote_endpoint: self.remote_endpoint.clone(),
            effective_beta: self.effective_beta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "default_classifier_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn default_classifier_epochs() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_grid_min")]
    pub grid_min: f64,
    #[serde(default = "default_grid_max")]
    pub grid_max: f64,
    #[serde(default = "default_grid_count")]
    pub grid_count: usize,
    /// Bank size per grid point; defaults to kernel_training.samples_per_step.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn default_grid_min() -> f64 {
    0.01
}

fn default_grid_max() -> f64 {
    100.0
}

fn default_grid_count() -> usize {
    20
}

impl BaselineConfig {
    /// Log-spaced grid over `[grid_min, grid_max]`.
    pub fn gammas(&self) -> Vec<f64> {
        if self.grid_count == 1 {
            return vec![self.grid_min];
        }
        let (lo, hi) = (self.grid_min.ln(), self.grid_max.ln());
        (0..self.grid_count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.grid_count - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: PathBuf,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Overrides every seed in the document (data, kernel, classifier,
    /// baseline) with one value.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.kernel_training.seed = seed;
        self.classifier.seed = seed;
        self.baseline.seed = seed;
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape::new(self.model.n_omega, self.model.n_visible, self.model.n_hidden)
            .expect("validated")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if self.data.class_a == self.data.class_b {
            return fail(format!("data.class_a == data.class_b ({})", self.data.class_a));
        }
        if self.data.class_a > 9 || self.data.class_b > 9 {
            return fail("data classes must be in 0..=9".into());
        }
        if self.data.per_class == 0 {
            return fail("data.per_class must be >= 1".into());
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return fail(format!(
                "data.test_fraction must be in (0, 1), got {}",
                self.data.test_fraction
            ));
        }
        let shape = ModelShape::new(self.model.n_omega, self.model.n_visible, self.model.n_hidden)
            .map_err(|e| ConfigError(e.to_string()))?;
        shape
            .require_enumerable()
            .map_err(|e| ConfigError(e.to_string()))?;
        let kt = &self.kernel_training;
        if kt.samples_per_step == 0 {
            return fail("kernel_training.samples_per_step must be >= 1".into());
        }
        if !(kt.learning_rate >= 0.0) || !kt.learning_rate.is_finite() {
            return fail(format!(
                "kernel_training.learning_rate must be non-negative, got {}",
                kt.learning_rate
            ));
        }
        kt.backend
            .to_backend()
            .validate(shape)
            .map_err(|e| ConfigError(e.to_string()))?;
        if self.classifier.epochs == 0 {
            return fail("classifier.epochs must be >= 1".into());
        }
        if !(self.classifier.learning_rate > 0.0) {
            return fail("classifier.learning_rate must be positive".into());
        }
        let b = &self.baseline;
        if b.grid_count == 0 {
            return fail("baseline.grid_count must be >= 1".into());
        }
        if !(b.grid_min > 0.0) || !(b.grid_max >= b.grid_min) {
            return fail(format!(
                "baseline grid must satisfy 0 < grid_min <= grid_max, got [{}, {}]",
                b.grid_min, b.grid_max
            ));
        }
        if b.samples == Some(0) {
            return fail("baseline.samples must be >= 1 when set".into());
        }
        Ok(())
    }
}
