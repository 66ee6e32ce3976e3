//! Subcommand implementations. Every command validates inputs fully before
//! touching the output directory, and all outputs are deterministic
//! functions of the config and seeds.

use std::fs;
use std::path::{Path, PathBuf};

use boltzrff::classify::{evaluate, model_from_json, model_to_json, train_perceptron};
use boltzrff::data::{load_idx, pca_fit, pca_transform, select_binary, split, LabeledDataset};
use boltzrff::io::{fmt_g17, sha256_hex, to_json_g17, write_json_g17};
use boltzrff::learn::{
    alignment_loss, initial_params, params_to_json, train_kernel_observed, EpochReport,
    KernelTrainConfig, LossTrace,
};
use boltzrff::rff::{feature_matrix, gaussian_bank, kernel_matrix, FrequencyBank};
use boltzrff::rng::mix;
use boltzrff::Mat;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const PCA_JSON: &str = "pca.json";
pub const PARAMS_JSON: &str = "params.json";
pub const PARAMS_INIT_JSON: &str = "params_init.json";
pub const PARAMS_LAST_GOOD_JSON: &str = "params_last_good.json";
pub const LOSS_CSV: &str = "loss.csv";
pub const LOSS_PARTIAL_CSV: &str = "loss_partial.csv";
pub const BANK_CSV: &str = "bank.csv";
pub const OMEGA_HISTOGRAM_CSV: &str = "omega_histogram.csv";
pub const MODEL_JSON: &str = "model.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const BASELINE_BANK_CSV: &str = "baseline_bank.csv";
pub const BASELINE_MODEL_JSON: &str = "baseline_model.json";
pub const BASELINE_METRICS_JSON: &str = "baseline_metrics.json";
pub const BASELINE_LOSSES_CSV: &str = "baseline_losses.csv";

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.outputs.directory.join(name)
}

fn ensure_output_dir(config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&config.outputs.directory)
        .map_err(|e| CliError::Io(format!("cannot create output directory: {e}")))
}

fn require_file(path: &Path, hint: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!(
            "missing {hint}: {} (run the producing command first?)",
            path.display()
        )));
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    require_file(path, "dataset CSV")?;
    let file = fs::File::open(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(LabeledDataset::read_csv(file)?)
}

fn read_bank(path: &Path) -> Result<(FrequencyBank, String), CliError> {
    require_file(path, "frequency bank CSV")?;
    let bytes = fs::read(path).map_err(|e| CliError::Io(e.to_string()))?;
    let bank = FrequencyBank::read_csv(bytes.as_slice())?;
    Ok((bank, sha256_hex(&bytes)))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Ingests IDX files, selects the binary problem, splits, fits PCA on the
/// training split only, and writes the projected datasets.
pub fn cmd_prepare(config: &RunConfig) -> Result<(), CliError> {
    for (path, hint) in [
        (&config.data.images_path, "images file"),
        (&config.data.labels_path, "labels file"),
    ] {
        if !path.is_file() {
            return Err(CliError::Io(format!("missing {hint}: {}", path.display())));
        }
    }
    let raw = load_idx(&config.data.images_path, &config.data.labels_path)?;
    let selected = select_binary(
        &raw,
        config.data.class_a,
        config.data.class_b,
        config.data.per_class,
        config.data.seed,
    )?;
    let (train_raw, test_raw) = split(&selected, config.data.test_fraction, config.data.seed)?;
    let projection = pca_fit(&train_raw.x, config.model.n_omega)?;
    let project = |ds: &LabeledDataset| -> Result<LabeledDataset, CliError> {
        Ok(LabeledDataset {
            x: pca_transform(&projection, &ds.x)?,
            y: ds.y.clone(),
            class_names: ds.class_names.clone(),
        })
    };
    let train = project(&train_raw)?;
    let test = project(&test_raw)?;

    ensure_output_dir(config)?;
    let mut buf = Vec::new();
    train.write_csv(&mut buf)?;
    write_file(&out_path(config, TRAIN_CSV), &buf)?;
    buf.clear();
    test.write_csv(&mut buf)?;
    write_file(&out_path(config, TEST_CSV), &buf)?;
    write_file(&out_path(config, PCA_JSON), to_json_g17(&projection)?.as_bytes())?;
    eprintln!(
        "prepared {} train / {} test points, {} -> {} dims",
        train.len(),
        test.len(),
        raw.pixel_dim(),
        config.model.n_omega
    );
    Ok(())
}

fn kernel_train_config(config: &RunConfig) -> KernelTrainConfig {
    let kt = &config.kernel_training;
    KernelTrainConfig {
        epochs: kt.epochs,
        samples_per_step: kt.samples_per_step,
        learning_rate: kt.learning_rate,
        seed: kt.seed,
        backend: kt.backend.to_backend(),
        baseline_subtraction: kt.baseline_subtraction,
        optimizer: kt.optimizer,
    }
}

/// Trains the spectral model, writing the learned parameters, the loss
/// trace, the final frequency bank, and per-component frequency histograms.
/// A non-finite abort still leaves the last finite checkpoint behind.
pub fn cmd_train_kernel(config: &RunConfig) -> Result<(), CliError> {
    let train = read_dataset(&out_path(config, TRAIN_CSV))?;
    let shape = config.shape();
    let params_init = initial_params(shape, config.kernel_training.seed);
    let train_config = kernel_train_config(config);

    ensure_output_dir(config)?;
    write_file(
        &out_path(config, PARAMS_INIT_JSON),
        params_to_json(&params_init)?.as_bytes(),
    )?;

    let mut last_good = params_init.clone();
    let mut losses = Vec::new();
    let result = train_kernel_observed(
        &train.x,
        &train.y,
        &params_init,
        &train_config,
        &mut |report: EpochReport| {
            last_good = report.params.clone();
            losses.push(report.loss);
        },
    );
    let (params, trace, bank) = match result {
        Ok(out) => out,
        Err(err) => {
            write_file(
                &out_path(config, PARAMS_LAST_GOOD_JSON),
                params_to_json(&last_good)?.as_bytes(),
            )?;
            let mut buf = Vec::new();
            LossTrace(losses).write_csv(&mut buf)?;
            write_file(&out_path(config, LOSS_PARTIAL_CSV), &buf)?;
            return Err(err.into());
        }
    };

    write_file(&out_path(config, PARAMS_JSON), params_to_json(&params)?.as_bytes())?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_file(&out_path(config, LOSS_CSV), &buf)?;
    buf.clear();
    bank.write_csv(&mut buf)?;
    write_file(&out_path(config, BANK_CSV), &buf)?;
    write_file(
        &out_path(config, OMEGA_HISTOGRAM_CSV),
        omega_histogram_csv(&bank).as_bytes(),
    )?;
    if let Some(loss) = trace.0.last() {
        eprintln!("trained {} epochs, final loss {loss:.6}", trace.0.len());
    }
    Ok(())
}

/// 50 uniform bins per frequency component over the observed range.
fn omega_histogram_csv(bank: &FrequencyBank) -> String {
    const BINS: usize = 50;
    let mut out = String::from("component,bin_start,bin_end,count\n");
    for comp in 0..bank.dim() {
        let values: Vec<f64> = (0..bank.len()).map(|s| bank.omega(s)[comp]).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / BINS as f64).max(1e-300);
        let mut counts = [0usize; BINS];
        for &v in &values {
            let bin = (((v - lo) / width) as usize).min(BINS - 1);
            counts[bin] += 1;
        }
        for (bin, &count) in counts.iter().enumerate() {
            let start = lo + bin as f64 * width;
            out.push_str(&format!(
                "{comp},{},{},{count}\n",
                fmt_g17(start),
                fmt_g17(start + width)
            ));
        }
    }
    out
}

#[derive(Serialize)]
struct Metrics {
    train_accuracy: f64,
    test_accuracy: f64,
}

fn train_and_evaluate(
    config: &RunConfig,
    bank: &FrequencyBank,
    bank_hash: &str,
) -> Result<(Metrics, String), CliError> {
    let train = read_dataset(&out_path(config, TRAIN_CSV))?;
    let test = read_dataset(&out_path(config, TEST_CSV))?;
    let train_features = feature_matrix(&train.x, bank)?;
    let test_features = feature_matrix(&test.x, bank)?;
    let model = train_perceptron(
        &train_features,
        &train.y,
        config.classifier.epochs,
        config.classifier.learning_rate,
        config.classifier.seed,
    )?;
    let metrics = Metrics {
        train_accuracy: evaluate(&model, &train_features, &train.y)?,
        test_accuracy: evaluate(&model, &test_features, &test.y)?,
    };
    Ok((metrics, model_to_json(&model, bank_hash)?))
}

/// Trains the kernel perceptron over the learned bank.
pub fn cmd_train_classifier(config: &RunConfig) -> Result<(), CliError> {
    let (bank, bank_hash) = read_bank(&out_path(config, BANK_CSV))?;
    let (metrics, model_json) = train_and_evaluate(config, &bank, &bank_hash)?;
    ensure_output_dir(config)?;
    write_file(&out_path(config, MODEL_JSON), model_json.as_bytes())?;
    write_file(&out_path(config, METRICS_JSON), to_json_g17(&metrics)?.as_bytes())?;
    eprintln!(
        "classifier: train accuracy {:.4}, test accuracy {:.4}",
        metrics.train_accuracy, metrics.test_accuracy
    );
    Ok(())
}

#[derive(Serialize)]
struct BaselineMetrics {
    gamma: f64,
    loss: f64,
    train_accuracy: f64,
    test_accuracy: f64,
}

/// Grid-searches the Gaussian bandwidth by alignment loss on the training
/// split, then trains and evaluates the perceptron with the best bank.
pub fn cmd_baseline(config: &RunConfig) -> Result<(), CliError> {
    let train = read_dataset(&out_path(config, TRAIN_CSV))?;
    let gammas = config.baseline.gammas();
    let s_count = config
        .baseline
        .samples
        .unwrap_or(config.kernel_training.samples_per_step);
    let d = train.dim();

    let mut rows = String::from("gamma,loss\n");
    let mut best: Option<(usize, f64, FrequencyBank)> = None;
    for (i, &gamma) in gammas.iter().enumerate() {
        let bank = gaussian_bank(d, s_count, gamma, mix(config.baseline.seed, i as u64))?;
        let loss = alignment_loss(&train.x, &train.y, &bank)?;
        rows.push_str(&format!("{},{}\n", fmt_g17(gamma), fmt_g17(loss)));
        if best.as_ref().is_none_or(|(_, b, _)| loss < *b) {
            best = Some((i, loss, bank));
        }
    }
    let (best_idx, best_loss, best_bank) = best.expect("non-empty grid");

    let mut bank_csv = Vec::new();
    best_bank.write_csv(&mut bank_csv)?;
    let bank_hash = sha256_hex(&bank_csv);
    let (metrics, model_json) = train_and_evaluate(config, &best_bank, &bank_hash)?;

    ensure_output_dir(config)?;
    write_file(&out_path(config, BASELINE_LOSSES_CSV), rows.as_bytes())?;
    write_file(&out_path(config, BASELINE_BANK_CSV), &bank_csv)?;
    write_file(&out_path(config, BASELINE_MODEL_JSON), model_json.as_bytes())?;
    let full = BaselineMetrics {
        gamma: gammas[best_idx],
        loss: best_loss,
        train_accuracy: metrics.train_accuracy,
        test_accuracy: metrics.test_accuracy,
    };
    write_file(
        &out_path(config, BASELINE_METRICS_JSON),
        to_json_g17(&full)?.as_bytes(),
    )?;
    eprintln!(
        "baseline: gamma {:.4}, loss {:.6}, test accuracy {:.4}",
        full.gamma, full.loss, full.test_accuracy
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MatrixKind {
    Before,
    After,
    Baseline,
}

/// Writes the train-split kernel matrix for the requested bank, rows
/// ordered with +1-labeled points first so label blocks are visible.
pub fn cmd_export_kernel_matrix(config: &RunConfig, which: MatrixKind) -> Result<(), CliError> {
    let train = read_dataset(&out_path(config, TRAIN_CSV))?;
    let bank = match which {
        MatrixKind::After => read_bank(&out_path(config, BANK_CSV))?.0,
        MatrixKind::Baseline => read_bank(&out_path(config, BASELINE_BANK_CSV))?.0,
        MatrixKind::Before => {
            // the bank the initial parameters induce, sampled exactly the
            // way epoch zero would sample it
            let shape = config.shape();
            let params = initial_params(shape, config.kernel_training.seed);
            let mut train_config = kernel_train_config(config);
            train_config.epochs = 0;
            let (_, _, bank) =
                boltzrff::learn::train_kernel(&train.x, &train.y, &params, &train_config)?;
            bank
        }
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by_key(|&i| if train.y[i] > 0.0 { 0 } else { 1 });
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| train.x.row(i).to_vec()).collect();
    let sorted = Mat::from_rows(&rows)?;
    let km = kernel_matrix(&sorted, &bank)?;

    ensure_output_dir(config)?;
    let name = match which {
        MatrixKind::Before => "kernel_before.csv",
        MatrixKind::After => "kernel_after.csv",
        MatrixKind::Baseline => "kernel_baseline.csv",
    };
    let mut buf = Vec::new();
    km.write_csv(&mut buf)?;
    write_file(&out_path(config, name), &buf)?;
    eprintln!("wrote {name} ({0} x {0})", km.size());
    Ok(())
}

/// Rebuilds a checkpointed model against its bank and reports accuracy on
/// an arbitrary dataset CSV.
pub fn cmd_evaluate(
    config: &RunConfig,
    model_path: Option<PathBuf>,
    bank_path: Option<PathBuf>,
    data_path: Option<PathBuf>,
) -> Result<(), CliError> {
    let model_path = model_path.unwrap_or_else(|| out_path(config, MODEL_JSON));
    let bank_path = bank_path.unwrap_or_else(|| out_path(config, BANK_CSV));
    let data_path = data_path.unwrap_or_else(|| out_path(config, TEST_CSV));

    let (bank, bank_hash) = read_bank(&bank_path)?;
    let train = read_dataset(&out_path(config, TRAIN_CSV))?;
    let dataset = read_dataset(&data_path)?;
    require_file(&model_path, "model checkpoint")?;
    let model_json =
        fs::read_to_string(&model_path).map_err(|e| CliError::Io(e.to_string()))?;
    let support_features = feature_matrix(&train.x, &bank)?;
    let model = model_from_json(&model_json, &bank_hash, support_features)?;
    let features = feature_matrix(&dataset.x, &bank)?;
    let accuracy = evaluate(&model, &features, &dataset.y)?;

    #[derive(Serialize)]
    struct Evaluation {
        accuracy: f64,
        n_points: usize,
    }
    let mut out = std::io::stdout().lock();
    write_json_g17(
        &Evaluation {
            accuracy,
            n_points: dataset.len(),
        },
        &mut out,
    )?;
    Ok(())
}

