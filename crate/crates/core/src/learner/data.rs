use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// First four bytes of a binary dataset file.
pub const DATASET_MAGIC: [u8; 4] = *b"FDS1";

/// Samples stored row-major, one label per sample.
///
/// `num_classes == 0` marks real-valued targets; otherwise every label is an
/// integer class index in `[0, num_classes)` stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "feature dimension must be >= 1"));
        }
        Error::check_len("feature matrix", labels.len() * dim, features.len())?;
        if features.iter().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite feature or label".into()));
        }
        if num_classes > 0 {
            if let Some(bad) = labels
                .iter()
                .find(|&&y| y < 0.0 || y.fract() != 0.0 || y >= num_classes as f64)
            {
                return Err(Error::Format(format!(
                    "label {bad} is not a class in [0, {num_classes})"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            dim,
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
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Class index of sample `i`; only meaningful for classification data.
    pub fn class(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Copies the given samples into a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::IndexOutOfBounds {
                    index: i,
                    dim: self.len(),
                });
            }
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.num_classes)
    }

    /// Little-endian: magic, `u32` count, `u32` dim, `u32` classes, then per
    /// sample `dim` `f32` features followed by an `f32` label.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let as_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::Overflow(format!("{what} {v} does not fit in u32")))
        };
        w.write_all(&DATASET_MAGIC)?;
        w.write_all(&as_u32(self.len(), "sample count")?.to_le_bytes())?;
        w.write_all(&as_u32(self.dim, "dimension")?.to_le_bytes())?;
        w.write_all(&as_u32(self.num_classes, "class count")?.to_le_bytes())?;
        for i in 0..self.len() {
            for &v in self.features(i) {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            w.write_all(&(self.labels[i] as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format(format!(
                "dataset header needs 16 bytes, got {}",
                bytes.len()
            )));
        }
        if bytes[..4] != DATASET_MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
        let (count, dim, classes) = (word(1), word(2), word(3));
        let body = count
            .checked_mul(dim + 1)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("dataset size overflows".into()))?;
        Error::check_len("dataset body bytes", body, bytes.len() - 16).map_err(|e| Error::Format(e.to_string()))?;
        let mut floats = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        let mut features = Vec::with_capacity(count * dim);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            features.extend(floats.by_ref().take(dim));
            labels.push(floats.next().unwrap());
        }
        Self::new(features, labels, dim, classes)
    }
}

/// `y = xᵀθ* + noise·ε` with standard normal `x`, `θ*` and `ε`.
/// Returns the data and `θ*`.
///
/// `θ*` comes from `truth_rng`, so a train and a test set can share it.
pub fn synthetic_regression<R: Rng + ?Sized, T: Rng + ?Sized>(
    n: usize,
    dim: usize,
    noise: f64,
    truth_rng: &mut T,
    rng: &mut R,
) -> Result<(Dataset, Vec<f64>)> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::invalid("noise", "must be finite and >= 0"));
    }
    let truth: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(truth_rng)).collect();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let eps: f64 = StandardNormal.sample(rng);
        labels.push(x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + noise * eps);
        features.extend(x);
    }
    Ok((Dataset::new(features, labels, dim, 0)?, truth))
}

/// Gaussian blobs: class centers drawn with standard deviation `separation`,
/// samples at unit spread around their center. Classes are balanced.
///
/// Draws the centers from `centers_rng` so that a train and a test set can
/// share them while sampling points from different streams.
pub fn synthetic_classification<R: Rng + ?Sized, C: Rng + ?Sized>(
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    centers_rng: &mut C,
    rng: &mut R,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid("classes", "need at least two classes"));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::invalid("separation", "must be finite and >= 0"));
    }
    let centers: Vec<f64> = (0..classes * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(centers_rng);
            separation * z
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    let mut features = Vec::with_capacity(n * dim);
    for &c in &labels {
        for k in 0..dim {
            let e: f64 = StandardNormal.sample(rng);
            features.push(centers[c * dim + k] + e);
        }
    }
    Dataset::new(features, labels.into_iter().map(|c| c as f64).collect(), dim, classes)
}
