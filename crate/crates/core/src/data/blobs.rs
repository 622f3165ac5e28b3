use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataSplits, NoisyDataset, Split};
use crate::error::{Error, Result};

/// Centre of class `c`: a scaled one-hot vector when `dim >= classes`,
/// otherwise points on a circle in the first two coordinates (or a line
/// when `dim == 1`).
fn centre(c: usize, classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if dim >= classes {
        v[c] = separation;
    } else if dim == 1 {
        v[0] = separation * c as f64;
    } else {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
        v[0] = separation * angle.cos();
        v[1] = separation * angle.sin();
    }
    v
}

/// Isotropic unit-variance Gaussian blobs, split 80/20 per class.
pub fn synth_blobs(
    classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<DataSplits> {
    if classes < 2 || n_per_class == 0 || dim == 0 {
        return Err(Error::InvalidInput(format!(
            "blobs need >= 2 classes, >= 1 example per class and dim >= 1 \
             (got {classes}, {n_per_class}, {dim})"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "separation must be >= 0, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_train = (n_per_class * 4 + 2) / 5;
    let n_test = n_per_class - n_train;
    let mut train = Vec::with_capacity(classes * n_train * dim);
    let mut test = Vec::with_capacity(classes * n_test * dim);
    let mut train_labels = Vec::new();
    let mut test_labels = Vec::new();
    for c in 0..classes {
        let mu = centre(c, classes, dim, separation);
        for i in 0..n_per_class {
            let (buf, labels) = if i < n_train {
                (&mut train, &mut train_labels)
            } else {
                (&mut test, &mut test_labels)
            };
            buf.extend(mu.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
            labels.push(c);
        }
    }
    let to_array = |v: Vec<f64>, n: usize| {
        Array2::from_shape_vec((n, dim), v).expect("blob buffer matches its shape")
    };
    Ok(DataSplits {
        train: NoisyDataset::clean(
            to_array(train, train_labels.len()),
            train_labels,
            classes,
            Split::Train,
            None,
        )?,
        test: NoisyDataset::clean(
            to_array(test, test_labels.len()),
            test_labels,
            classes,
            Split::Test,
            None,
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = synth_blobs(3, 10, 4, 2.0, 9).unwrap();
        assert_eq!(a.train.len(), 24);
        assert_eq!(a.test.len(), 6);
        assert_eq!(a, synth_blobs(3, 10, 4, 2.0, 9).unwrap());
        assert_ne!(
            a.train.features,
            synth_blobs(3, 10, 4, 2.0, 10).unwrap().train.features
        );
    }

    #[test]
    fn class_means_sit_on_centres() {
        let d = synth_blobs(2, 5000, 2, 10.0, 1).unwrap();
        for c in 0..2 {
            let rows: Vec<_> = d
                .train
                .features
                .outer_iter()
                .zip(&d.train.true_labels)
                .filter(|(_, &y)| y == c)
                .map(|(r, _)| r.to_vec())
                .collect();
            let mean_c = rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
            assert!((mean_c - 10.0).abs() < 0.1, "{mean_c}");
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(synth_blobs(1, 10, 2, 1.0, 0).is_err());
        assert!(synth_blobs(2, 0, 2, 1.0, 0).is_err());
        assert!(synth_blobs(2, 10, 2, -1.0, 0).is_err());
    }
}
