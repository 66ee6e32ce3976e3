//! Dataset ingestion and preprocessing: IDX files (raw or gzip), binary
//! class selection, PCA compression, stratified splits, and synthetic
//! generators for desk-scale tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::io::fmt_g17;
use crate::linalg::{dot, symmetric_eigen_desc};
use crate::rff::parse_float_row;
use crate::rng::{stream, Lane};
use crate::{exec, Error, Mat, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const FASHION_CLASS_NAMES: [&str; 10] = [
    "T-shirt/top",
    "Trouser",
    "Pullover",
    "Dress",
    "Coat",
    "Sandal",
    "Shirt",
    "Sneaker",
    "Bag",
    "Ankle boot",
];

/// Raw images with labels, exactly as stored in the IDX pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImageSet {
    pub n_images: usize,
    pub rows: usize,
    pub cols: usize,
    /// `n_images * rows * cols` bytes, row-major per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawImageSet {
    pub fn pixel_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.pixel_dim();
        &self.pixels[i * d..(i + 1) * d]
    }
}

/// Real-valued points with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Mat,
    pub y: Vec<f64>,
    pub class_names: (String, String),
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// CSV with header `x_0,...,x_{d-1},y`; labels written as `1` / `-1`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        writeln!(out, "{}", header.join(","))?;
        for (row, &yi) in self.x.iter_rows().zip(&self.y) {
            let mut cells: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
            cells.push(if yi > 0.0 { "1".into() } else { "-1".into() });
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Reads a dataset CSV; class names are not stored in the format.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("dataset", 0, "empty file"))??;
        let cols = header.split(',').count();
        if cols < 2 || !header.starts_with("x_0") || !header.ends_with(",y") {
            return Err(Error::parse(
                "dataset",
                0,
                format!("expected x_*,y header, got {header:?}"),
            ));
        }
        let d = cols - 1;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let vals = parse_float_row(&line, "dataset", lineno as u64 + 1)?;
            if vals.len() != cols {
                return Err(Error::parse(
                    "dataset",
                    lineno as u64 + 1,
                    format!("expected {cols} columns, got {}", vals.len()),
                ));
            }
            let yi = vals[d];
            if yi != 1.0 && yi != -1.0 {
                return Err(Error::InvalidLabel(yi));
            }
            rows.push(vals[..d].to_vec());
            y.push(yi);
        }
        Ok(LabeledDataset {
            x: Mat::from_rows(&rows)?,
            y,
            class_names: (String::new(), String::new()),
        })
    }
}

/// PCA projection fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows ordered by descending eigenvalue.
    pub components: Mat,
    pub k: usize,
    pub explained_variance: Vec<f64>,
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(
            path,
            offset as u64,
            "truncated header: expected 4 more bytes",
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoded = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut decoded)
            .map_err(|e| {
                Error::parse(path.display().to_string(), 0, format!("gzip decode: {e}"))
            })?;
        Ok(decoded)
    } else {
        Ok(raw)
    }
}

/// Parses an IDX image/label file pair (gzip-compressed or raw).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawImageSet> {
    let img_name = images_path.display().to_string();
    let img_bytes = read_maybe_gzip(images_path)?;
    let magic = read_be_u32(&img_bytes, 0, &img_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse(
            &img_name,
            0,
            format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n_images = read_be_u32(&img_bytes, 4, &img_name)? as usize;
    let rows = read_be_u32(&img_bytes, 8, &img_name)? as usize;
    let cols = read_be_u32(&img_bytes, 12, &img_name)? as usize;
    let expected = 16 + n_images * rows * cols;
    if img_bytes.len() != expected {
        return Err(Error::parse(
            &img_name,
            img_bytes.len().min(expected) as u64,
            format!("payload has {} bytes, header implies {expected}", img_bytes.len()),
        ));
    }

    let lbl_name = labels_path.display().to_string();
    let lbl_bytes = read_maybe_gzip(labels_path)?;
    let magic = read_be_u32(&lbl_bytes, 0, &lbl_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse(
            &lbl_name,
            0,
            format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n_labels = read_be_u32(&lbl_bytes, 4, &lbl_name)? as usize;
    if lbl_bytes.len() != 8 + n_labels {
        return Err(Error::parse(
            &lbl_name,
            lbl_bytes.len().min(8 + n_labels) as u64,
            format!(
                "payload has {} bytes, header implies {}",
                lbl_bytes.len(),
                8 + n_labels
            ),
        ));
    }
    if n_labels != n_images {
        return Err(Error::parse(
            &lbl_name,
            4,
            format!("{n_labels} labels for {n_images} images"),
        ));
    }

    Ok(RawImageSet {
        n_images,
        rows,
        cols,
        pixels: img_bytes[16..].to_vec(),
        labels: lbl_bytes[8..].to_vec(),
    })
}

/// Selects `per_class` images of each class in a seeded shuffle, labels
/// `class_a -> +1`, `class_b -> -1`, and scales pixels to `[0, 1]`.
pub fn select_binary(
    raw: &RawImageSet,
    class_a: u8,
    class_b: u8,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if class_a == class_b {
        return Err(Error::InvalidParameter(format!(
            "classes must differ, both are {class_a}"
        )));
    }
    if class_a > 9 || class_b > 9 {
        return Err(Error::InvalidParameter(format!(
            "classes must be in 0..=9, got {class_a}/{class_b}"
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidParameter("per_class must be >= 1".into()));
    }

    let pick = |class: u8| -> Result<Vec<usize>> {
        let mut indices: Vec<usize> = raw
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < per_class {
            return Err(Error::InvalidParameter(format!(
                "class {class} has only {} images, need {per_class}",
                indices.len()
            )));
        }
        let mut rng = stream(seed, Lane::ClassSelect, class as u64);
        indices.shuffle(&mut rng);
        indices.truncate(per_class);
        Ok(indices)
    };

    let d = raw.pixel_dim();
    let mut x = Mat::zeros(2 * per_class, d);
    let mut y = Vec::with_capacity(2 * per_class);
    for (block, (class, label)) in [(class_a, 1.0), (class_b, -1.0)].iter().enumerate() {
        for (slot, &img_idx) in pick(*class)?.iter().enumerate() {
            let row = x.row_mut(block * per_class + slot);
            for (dst, &px) in row.iter_mut().zip(raw.image(img_idx)) {
                *dst = px as f64 / 255.0;
            }
            y.push(*label);
        }
    }
    Ok(LabeledDataset {
        x,
        y,
        class_names: (
            FASHION_CLASS_NAMES[class_a as usize].to_string(),
            FASHION_CLASS_NAMES[class_b as usize].to_string(),
        ),
    })
}

/// Fits PCA: mean-centered top-k eigenvectors of the sample covariance,
/// descending eigenvalue order, each component's largest-magnitude entry
/// made positive so projections are deterministic.
pub fn pca_fit(x: &Mat, k: usize) -> Result<PcaProjection> {
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k >= n.min(d) {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < min(N, d) = {}, got {k}",
            n.min(d)
        )));
    }

    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // covariance, one output row at a time so parallel results stay ordered
    let cov_rows = exec::map_indexed(d, |r| {
        let mut out = vec![0.0; d];
        for row in x.iter_rows() {
            let vr = row[r] - mean[r];
            for (o, (&v, &m)) in out.iter_mut().zip(row.iter().zip(&mean)) {
                *o += vr * (v - m);
            }
        }
        let scale = 1.0 / (n as f64 - 1.0);
        out.iter_mut().for_each(|o| *o *= scale);
        out
    });
    let cov = Mat::from_rows(&cov_rows)?;

    let (values, vectors) = symmetric_eigen_desc(&cov);
    let mut components = Mat::zeros(k, d);
    for r in 0..k {
        let row = vectors.row(r);
        let mut max_idx = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[max_idx].abs() {
                max_idx = i;
            }
        }
        let flip = if row[max_idx] < 0.0 { -1.0 } else { 1.0 };
        let dst = components.row_mut(r);
        for (dv, &sv) in dst.iter_mut().zip(row) {
            *dv = flip * sv;
        }
    }
    Ok(PcaProjection {
        mean,
        components,
        k,
        explained_variance: values[..k].to_vec(),
    })
}

/// `(x - mean) . components^T`, one row per input point.
pub fn pca_transform(proj: &PcaProjection, x: &Mat) -> Result<Mat> {
    if x.cols() != proj.mean.len() {
        return Err(Error::DimensionMismatch {
            context: "pca_transform",
            expected: proj.mean.len(),
            actual: x.cols(),
        });
    }
    let rows = exec::map_indexed(x.rows(), |i| {
        let centered: Vec<f64> = x
            .row(i)
            .iter()
            .zip(&proj.mean)
            .map(|(&v, &m)| v - m)
            .collect();
        (0..proj.k)
            .map(|c| dot(proj.components.row(c), &centered))
            .collect::<Vec<f64>>()
    });
    Mat::from_rows(&rows)
}

/// Maps projected points back into the original space.
pub fn pca_inverse_transform(proj: &PcaProjection, coords: &Mat) -> Result<Mat> {
    if coords.cols() != proj.k {
        return Err(Error::DimensionMismatch {
            context: "pca_inverse_transform",
            expected: proj.k,
            actual: coords.cols(),
        });
    }
    let d = proj.mean.len();
    let rows = exec::map_indexed(coords.rows(), |i| {
        let mut out = proj.mean.clone();
        for c in 0..proj.k {
            let coeff = coords.get(i, c);
            for (o, &comp) in out.iter_mut().zip(proj.components.row(c)).take(d) {
                *o += coeff * comp;
            }
        }
        out
    });
    Mat::from_rows(&rows)
}

/// Stratified seeded split preserving class balance within one point per
/// class; returns `(train, test)`.
pub fn split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (lane, label) in [(0u64, 1.0), (1u64, -1.0)] {
        let mut indices: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == label).collect();
        if indices.is_empty() {
            continue;
        }
        let mut rng = stream(seed, Lane::Split, lane);
        indices.shuffle(&mut rng);
        let n_test = ((indices.len() as f64 * test_fraction).round() as usize)
            .clamp(1, indices.len() - 1);
        test_idx.extend_from_slice(&indices[..n_test]);
        train_idx.extend_from_slice(&indices[n_test..]);
    }

    let gather = |idx: &[usize]| -> LabeledDataset {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| ds.x.row(i).to_vec()).collect();
        LabeledDataset {
            x: Mat::from_rows(&rows).expect("uniform rows"),
            y: idx.iter().map(|&i| ds.y[i]).collect(),
            class_names: ds.class_names.clone(),
        }
    };
    Ok((gather(&train_idx), gather(&test_idx)))
}

/// Two spherical Gaussians at `+/- separation * e_1` with unit variance.
pub fn synthetic_two_gaussians(
    n_per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class == 0 || d == 0 {
        return Err(Error::InvalidParameter(
            "n_per_class and d must be >= 1".into(),
        ));
    }
    let rows = exec::map_indexed(2 * n_per_class, |i| {
        let mut rng = stream(seed, Lane::Synthetic, i as u64);
        let center = if i < n_per_class { separation } else { -separation };
        (0..d)
            .map(|dim| {
                let noise: f64 = rng.sample(StandardNormal);
                if dim == 0 {
                    center + noise
                } else {
                    noise
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut y = vec![1.0; n_per_class];
    y.extend(vec![-1.0; n_per_class]);
    Ok(LabeledDataset {
        x: Mat::from_rows(&rows)?,
        y,
        class_names: ("gaussian+".into(), "gaussian-".into()),
    })
}
