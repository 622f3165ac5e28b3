//! CIFAR-10 binary and MNIST IDX readers (plus writers for fixtures).

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{DataSplits, ImageShape, NoisyDataset, Split};
use crate::error::{Error, Result};

/// One label byte followed by 3x32x32 channel-major pixels.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
const CIFAR_CLASSES: usize = 10;
const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// `(train images, train labels, test images, test labels)`
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Raw labels and pixel bytes of one CIFAR-10 batch file.
pub fn read_cifar10_file(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = read(path)?;
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let record = bytes.len() / CIFAR_RECORD_BYTES;
        return Err(Error::format(
            path,
            format!(
                "truncated record {record} at byte offset {} ({} of {CIFAR_RECORD_BYTES} bytes present)",
                record * CIFAR_RECORD_BYTES,
                bytes.len() % CIFAR_RECORD_BYTES
            ),
        ));
    }
    let records = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(records);
    let mut pixels = Vec::with_capacity(records * (CIFAR_RECORD_BYTES - 1));
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if rec[0] as usize >= CIFAR_CLASSES {
            return Err(Error::format(
                path,
                format!(
                    "record {i} at byte offset {}: label byte {} is not a CIFAR-10 class",
                    i * CIFAR_RECORD_BYTES,
                    rec[0]
                ),
            ));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

pub fn write_cifar10_bin(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    let per = CIFAR_RECORD_BYTES - 1;
    if pixels.len() != labels.len() * per {
        return Err(Error::Shape(format!(
            "{} labels need {} pixel bytes, got {}",
            labels.len(),
            labels.len() * per,
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(labels.len() * CIFAR_RECORD_BYTES);
    for (l, px) in labels.iter().zip(pixels.chunks_exact(per)) {
        out.push(*l);
        out.extend_from_slice(px);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn cifar_split(dir: &Path, files: &[&str]) -> Result<(Vec<usize>, Vec<u8>)> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for f in files {
        let (l, p) = read_cifar10_file(&dir.join(f))?;
        labels.extend(l.into_iter().map(usize::from));
        pixels.extend(p);
    }
    Ok((labels, pixels))
}

/// Loads the five training batches and the test batch. Pixels are scaled
/// to `[0, 1]` and then standardized per channel with training-split statistics.
pub fn load_cifar10_bin(dir: &Path) -> Result<DataSplits> {
    let (train_labels, train_px) = cifar_split(dir, &CIFAR_TRAIN_FILES)?;
    let (test_labels, test_px) = cifar_split(dir, &[CIFAR_TEST_FILE])?;
    let shape = ImageShape {
        channels: 3,
        height: 32,
        width: 32,
    };
    let plane = shape.height * shape.width;

    let mut mean = [0.0f64; 3];
    let mut var = [0.0f64; 3];
    let count = (train_labels.len() * plane) as f64;
    if count > 0.0 {
        for img in train_px.chunks_exact(shape.len()) {
            for c in 0..3 {
                mean[c] += img[c * plane..(c + 1) * plane]
                    .iter()
                    .map(|&b| f64::from(b) / 255.0)
                    .sum::<f64>();
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        for img in train_px.chunks_exact(shape.len()) {
            for c in 0..3 {
                var[c] += img[c * plane..(c + 1) * plane]
                    .iter()
                    .map(|&b| (f64::from(b) / 255.0 - mean[c]).powi(2))
                    .sum::<f64>();
            }
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            if count > 0.0 {
                (v / count).sqrt().max(1e-12)
            } else {
                1.0
            }
        })
        .collect();

    let to_features = |px: &[u8], n: usize| {
        Array2::from_shape_fn((n, shape.len()), |(i, j)| {
            let c = j / plane;
            (f64::from(px[i * shape.len() + j]) / 255.0 - mean[c]) / std[c]
        })
    };
    let train = NoisyDataset::clean(
        to_features(&train_px, train_labels.len()),
        train_labels,
        CIFAR_CLASSES,
        Split::Train,
        Some(shape),
    )?;
    let test = NoisyDataset::clean(
        to_features(&test_px, test_labels.len()),
        test_labels,
        CIFAR_CLASSES,
        Split::Test,
        Some(shape),
    )?;
    Ok(DataSplits { train, test })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, format!("header truncated at byte offset {offset}")))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            path,
            format!("magic number {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x} for images"),
        ));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let expected = n * rows * cols;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "header declares {n}x{rows}x{cols} = {expected} pixel bytes, file holds {} (from byte offset 16)",
                body.len()
            ),
        ));
    }
    Ok((n, rows, cols, body.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            path,
            format!("magic number {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x} for labels"),
        ));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::format(
            path,
            format!(
                "header declares {n} labels, file holds {} (from byte offset 8)",
                body.len()
            ),
        ));
    }
    Ok(body.to_vec())
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || !pixels.len().is_multiple_of(per) {
        return Err(Error::Shape(
            "pixel buffer is not a whole number of images".into(),
        ));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [pixels.len() / per, rows, cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn mnist_split(dir: &Path, images: &str, labels: &str, split: Split) -> Result<NoisyDataset> {
    let img_path = dir.join(images);
    let lbl_path = dir.join(labels);
    let (n, rows, cols, px) = read_idx_images(&img_path)?;
    let lbl = read_idx_labels(&lbl_path)?;
    if lbl.len() != n {
        return Err(Error::format(
            &lbl_path,
            format!(
                "{} labels but {} images in {}",
                lbl.len(),
                n,
                img_path.display()
            ),
        ));
    }
    if let Some((i, &bad)) = lbl.iter().enumerate().find(|(_, &l)| l >= 10) {
        return Err(Error::format(
            &lbl_path,
            format!("label {bad} at byte offset {} is not a digit", 8 + i),
        ));
    }
    let features = Array2::from_shape_fn((n, rows * cols), |(i, j)| {
        f64::from(px[i * rows * cols + j]) / 255.0
    });
    NoisyDataset::clean(
        features,
        lbl.into_iter().map(usize::from).collect(),
        10,
        split,
        Some(ImageShape {
            channels: 1,
            height: rows,
            width: cols,
        }),
    )
}

/// Loads the four uncompressed MNIST IDX files; pixels scaled to `[0, 1]`.
pub fn load_mnist_idx(dir: &Path) -> Result<DataSplits> {
    Ok(DataSplits {
        train: mnist_split(dir, MNIST_FILES[0], MNIST_FILES[1], Split::Train)?,
        test: mnist_split(dir, MNIST_FILES[2], MNIST_FILES[3], Split::Test)?,
    })
}
