//! Datasets: MNIST IDX files, synthetic linearly separable data, batching.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, IdxError, Result};
use crate::matrix::FloatMatrix;
use crate::rng::DeterministicRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const SHUFFLE_STREAM: u64 = 2;
const SYNTHETIC_STREAM: u64 = 3;

/// Features plus class indices in `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: FloatMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: FloatMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::validation("dataset is empty"));
        }
        if labels.len() != features.rows() {
            return Err(Error::validation(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::validation(format!("label {bad} not below {num_classes}")));
        }
        if !features.is_finite() {
            return Err(Error::validation("non-finite feature"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Binary labels as `{-1, +1}` (class 1 maps to +1).
    pub fn sign_labels(&self) -> Result<Vec<i8>> {
        if self.num_classes != 2 {
            return Err(Error::validation("sign labels need a two-class dataset"));
        }
        Ok(self.labels.iter().map(|&y| if y == 1 { 1 } else { -1 }).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn truncated(file: &str, expected: usize, found: usize) -> IdxError {
    IdxError::Truncated {
        file: file.to_string(),
        expected,
        found,
    }
}

/// Parsed IDX image file: `count` images of `rows x cols` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8], file: &str) -> std::result::Result<IdxImages, IdxError> {
    let magic = read_u32(bytes, 0).ok_or_else(|| truncated(file, 16, bytes.len()))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            file: file.to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let header = |at| read_u32(bytes, at).map(|v| v as usize).ok_or_else(|| truncated(file, 16, bytes.len()));
    let (count, rows, cols) = (header(4)?, header(8)?, header(12)?);
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(truncated(file, expected, bytes.len()));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], file: &str) -> std::result::Result<Vec<u8>, IdxError> {
    let magic = read_u32(bytes, 0).ok_or_else(|| truncated(file, 8, bytes.len()))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            file: file.to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4).ok_or_else(|| truncated(file, 8, bytes.len()))? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(truncated(file, expected, bytes.len()));
    }
    Ok(bytes[8..expected].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pixels become `byte / 255`; images are flattened row-major.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8]) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    let d = images.rows * images.cols;
    let features = FloatMatrix::from_vec(
        images.count,
        d,
        images.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )?;
    let num_classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1).max(10);
    LabeledDataset::new(features, labels.iter().map(|&y| y as usize).collect(), num_classes)
}

/// Quantizes features in `[0, 1]` to bytes (`round(255 x)`, clamped) and
/// encodes images and labels as IDX.
pub fn dataset_to_idx(dataset: &LabeledDataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != dataset.dim() {
        return Err(Error::validation(format!(
            "{rows}x{cols} images do not hold {} features",
            dataset.dim()
        )));
    }
    if dataset.labels.iter().any(|&y| y > u8::MAX as usize) {
        return Err(Error::validation("labels do not fit in a byte"));
    }
    let pixels = dataset
        .features
        .as_slice()
        .iter()
        .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let images = IdxImages {
        count: dataset.len(),
        rows,
        cols,
        pixels,
    };
    let labels: Vec<u8> = dataset.labels.iter().map(|&y| y as u8).collect();
    Ok((encode_idx_images(&images), encode_idx_labels(&labels)))
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = parse_idx_images(&fs::read(images_path)?, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&fs::read(labels_path)?, &labels_path.display().to_string())?;
    dataset_from_idx(&images, &labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Loads the standard file names from `dir`.
pub fn load_mnist_dir(dir: &Path, split: MnistSplit) -> Result<LabeledDataset> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    load_mnist_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Synthetic data separable by a planted `w* ∈ {-1,1}^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableData {
    pub dataset: LabeledDataset,
    pub planted: Vec<i8>,
}

/// Draws `w*` uniformly from `{-1,1}^d` and features uniformly from
/// `[-1,1]^d`, rejecting points with `|w*·x| <= margin`. Class 1 means
/// `w*·x > 0`.
pub fn gen_separable(d: usize, n: usize, margin: f64, seed: u64) -> Result<SeparableData> {
    if d == 0 || n == 0 {
        return Err(Error::validation("gen_separable needs d >= 1 and n >= 1"));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::validation(format!("margin {margin} must be finite and >= 0")));
    }
    let mut rng = DeterministicRng::new(seed).stream(SYNTHETIC_STREAM, 0);
    let planted: Vec<i8> = (0..d).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    let max_attempts = 10_000 + 1_000 * n as u64;
    let mut attempts = 0u64;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    while labels.len() < n {
        if attempts == max_attempts {
            return Err(Error::Timeout {
                attempts,
                reason: format!("margin {margin} too large for d = {d}"),
            });
        }
        attempts += 1;
        x.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
        let dot: f64 = x.iter().zip(&planted).map(|(&xv, &w)| xv * w as f64).sum();
        if dot.abs() <= margin {
            continue;
        }
        features.extend_from_slice(&x);
        labels.push(usize::from(dot > 0.0));
    }
    let dataset = LabeledDataset::new(FloatMatrix::from_vec(n, d, features)?, labels, 2)?;
    Ok(SeparableData { dataset, planted })
}

/// Batches of one epoch, in seeded shuffled order. The trailing partial
/// batch is dropped.
#[derive(Clone, Debug)]
pub struct BatchIter<'a> {
    dataset: &'a LabeledDataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl<'a> BatchIter<'a> {
    pub fn batches_per_epoch(&self) -> usize {
        self.order.len() / self.batch_size
    }
}

impl Iterator for BatchIter<'_> {
    type Item = (FloatMatrix, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let start = self.next * self.batch_size;
        if start + self.batch_size > self.order.len() {
            return None;
        }
        self.next += 1;
        let idx = &self.order[start..start + self.batch_size];
        Some((
            self.dataset.features.select_rows(idx),
            idx.iter().map(|&i| self.dataset.labels[i]).collect(),
        ))
    }
}

/// Sample order for one epoch, a pure function of `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = DeterministicRng::new(seed).stream(SHUFFLE_STREAM, epoch);
    order.shuffle(&mut rng);
    order
}

pub fn batch_iterator(dataset: &LabeledDataset, batch_size: usize, seed: u64, epoch: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 || batch_size > dataset.len() {
        return Err(Error::validation(format!(
            "batch size {batch_size} must be in [1, {}]",
            dataset.len()
        )));
    }
    Ok(BatchIter {
        dataset,
        order: epoch_permutation(dataset.len(), seed, epoch),
        batch_size,
        next: 0,
    })
}

/// Where a dataset comes from: `mnist:<dir>` (training split),
/// `mnist-test:<dir>` (test split) or `synthetic:<d>,<n>,<margin>,<seed>`.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Mnist { dir: PathBuf, split: MnistSplit },
    Synthetic { d: usize, n: usize, margin: f64, seed: u64 },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetSpec::Mnist { dir, split } => load_mnist_dir(dir, *split),
            DatasetSpec::Synthetic { d, n, margin, seed } => Ok(gen_separable(*d, *n, *margin, *seed)?.dataset),
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("bad dataset descriptor `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "mnist" | "mnist-test" if !rest.is_empty() => Ok(DatasetSpec::Mnist {
                dir: PathBuf::from(rest),
                split: if kind == "mnist" { MnistSplit::Train } else { MnistSplit::Test },
            }),
            "synthetic" => {
                let f: Vec<&str> = rest.split(',').map(str::trim).collect();
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(DatasetSpec::Synthetic {
                    d: f[0].parse().map_err(|_| bad())?,
                    n: f[1].parse().map_err(|_| bad())?,
                    margin: f[2].parse().map_err(|_| bad())?,
                    seed: f[3].parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Mnist { dir, split: MnistSplit::Train } => write!(f, "mnist:{}", dir.display()),
            DatasetSpec::Mnist { dir, split: MnistSplit::Test } => write!(f, "mnist-test:{}", dir.display()),
            DatasetSpec::Synthetic { d, n, margin, seed } => write!(f, "synthetic:{d},{n},{margin},{seed}"),
        }
    }
}
