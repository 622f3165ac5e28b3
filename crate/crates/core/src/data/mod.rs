//! Datasets with ground-truth noise masks, label-noise injection and
//! training-time augmentation.

mod augment;
mod blobs;
mod loaders;
mod noise;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub use augment::{augment_pad_crop_flip, pad_crop_flip};
pub use blobs::synth_blobs;
pub use loaders::{
    load_cifar10_bin, load_mnist_idx, read_cifar10_file, read_idx_images, read_idx_labels,
    write_cifar10_bin, write_idx_images, write_idx_labels, CIFAR_RECORD_BYTES, MNIST_FILES,
};
pub use noise::{
    inject_asymmetric_noise, inject_noise, inject_symmetric_noise, pairs_from_groups, NoiseKind,
    NoiseSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Channel-major image geometry of each feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    pub features: Array2<f64>,
    pub true_labels: Vec<usize>,
    pub observed_labels: Vec<usize>,
    /// `noise_mask[i] == (observed_labels[i] != true_labels[i])`
    pub noise_mask: Vec<bool>,
    pub split: Split,
    pub classes: usize,
    pub image_shape: Option<ImageShape>,
}

impl NoisyDataset {
    pub fn clean(
        features: Array2<f64>,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
        image_shape: Option<ImageShape>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Index {
                index: bad,
                len: classes,
            });
        }
        if let Some(shape) = image_shape {
            if shape.len() != features.ncols() {
                return Err(Error::Shape(format!(
                    "image shape holds {} values, rows have {}",
                    shape.len(),
                    features.ncols()
                )));
            }
        }
        let n = labels.len();
        Ok(NoisyDataset {
            features,
            observed_labels: labels.clone(),
            true_labels: labels,
            noise_mask: vec![false; n],
            split,
            classes,
            image_shape,
        })
    }

    /// Replaces the observed labels; the mask is recomputed from them.
    pub fn with_observed(mut self, observed: Vec<usize>) -> Result<Self> {
        if observed.len() != self.true_labels.len() {
            return Err(Error::Shape("observed label count differs".into()));
        }
        if self.split == Split::Test && observed != self.true_labels {
            return Err(Error::InvalidInput("test labels must stay intact".into()));
        }
        if let Some(&bad) = observed.iter().find(|&&y| y >= self.classes) {
            return Err(Error::Index {
                index: bad,
                len: self.classes,
            });
        }
        self.noise_mask = observed
            .iter()
            .zip(&self.true_labels)
            .map(|(o, t)| o != t)
            .collect();
        self.observed_labels = observed;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn noisy_count(&self) -> usize {
        self.noise_mask.iter().filter(|&&m| m).count()
    }

    /// First `n` examples.
    pub fn truncate(mut self, n: usize) -> Self {
        if n < self.len() {
            self.features = self.features.slice_axis(Axis(0), (0..n).into()).to_owned();
            self.true_labels.truncate(n);
            self.observed_labels.truncate(n);
            self.noise_mask.truncate(n);
        }
        self
    }
}

/// A train/test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: NoisyDataset,
    pub test: NoisyDataset,
}
