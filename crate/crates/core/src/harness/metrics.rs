use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::nn::Model;

pub const METRICS_HEADER: &str = "iteration,test_acc,noisy_acc,clean_acc,hybrid_acc,mean_loss,lr";

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub test_acc: f64,
    /// Fraction of corrupted training examples predicted as their (wrong)
    /// observed label; `None` when nothing was corrupted.
    pub noisy_subset_acc: Option<f64>,
    pub clean_subset_acc: f64,
    /// Accuracy over the test set and the clean training subset pooled together.
    pub hybrid_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub metrics: SplitMetrics,
    pub mean_train_loss: f64,
    pub current_lr: f64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let m = &self.metrics;
        let noisy = m
            .noisy_subset_acc
            .map_or_else(|| "NA".to_string(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            m.test_acc,
            noisy,
            m.clean_subset_acc,
            m.hybrid_acc,
            self.mean_train_loss,
            self.current_lr
        )
    }
}

pub(crate) fn predict_logits(model: &Model, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), model.output_dim()));
    for (start, chunk) in x.axis_chunks_iter(Axis(0), EVAL_CHUNK).enumerate() {
        let logits = model.predict(chunk)?;
        let begin = start * EVAL_CHUNK;
        out.slice_mut(ndarray::s![begin..begin + chunk.nrows(), ..])
            .assign(&logits);
    }
    Ok(out)
}

pub(crate) fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Split metrics from precomputed predictions.
pub(crate) fn split_metrics(
    train: &NoisyDataset,
    train_pred: &[usize],
    test: &NoisyDataset,
    test_pred: &[usize],
) -> SplitMetrics {
    let test_hits = test_pred
        .iter()
        .zip(&test.true_labels)
        .filter(|(p, y)| p == y)
        .count();
    let (mut clean_n, mut clean_hits, mut noisy_n, mut noisy_hits) =
        (0usize, 0usize, 0usize, 0usize);
    for (i, &pred) in train_pred.iter().enumerate() {
        if train.noise_mask[i] {
            noisy_n += 1;
            noisy_hits += usize::from(pred == train.observed_labels[i]);
        } else {
            clean_n += 1;
            clean_hits += usize::from(pred == train.true_labels[i]);
        }
    }
    let ratio = |hits: usize, n: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    SplitMetrics {
        test_acc: ratio(test_hits, test.len()),
        noisy_subset_acc: (noisy_n > 0).then(|| ratio(noisy_hits, noisy_n)),
        clean_subset_acc: ratio(clean_hits, clean_n),
        hybrid_acc: ratio(test_hits + clean_hits, test.len() + clean_n),
    }
}

/// Evaluates `model` on raw (un-augmented) inputs of both splits.
pub fn eval_split_metrics(
    model: &Model,
    train: &NoisyDataset,
    test: &NoisyDataset,
) -> Result<SplitMetrics> {
    let train_pred = argmax_rows(&predict_logits(model, train.features.view())?);
    let test_pred = argmax_rows(&predict_logits(model, test.features.view())?);
    Ok(split_metrics(train, &train_pred, test, &test_pred))
}

/// Best/final view of a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub best_test_acc: f64,
    pub best_iteration: u64,
    pub last: MetricsRecord,
}

pub fn summarize(records: &[MetricsRecord]) -> Option<RunSummary> {
    let last = *records.last()?;
    let mut best = records[0];
    for r in records {
        if r.metrics.test_acc > best.metrics.test_acc {
            best = *r;
        }
    }
    Some(RunSummary {
        best_test_acc: best.metrics.test_acc,
        best_iteration: best.iteration,
        last,
    })
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::format(path, "missing or unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::format(path, format!("line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            Ok(MetricsRecord {
                iteration: f[0].parse().map_err(|_| bad("iteration"))?,
                metrics: SplitMetrics {
                    test_acc: num(f[1], "test_acc")?,
                    noisy_subset_acc: if f[2] == "NA" {
                        None
                    } else {
                        Some(num(f[2], "noisy_acc")?)
                    },
                    clean_subset_acc: num(f[3], "clean_acc")?,
                    hybrid_acc: num(f[4], "hybrid_acc")?,
                },
                mean_train_loss: num(f[5], "mean_loss")?,
                current_lr: num(f[6], "lr")?,
            })
        })
        .collect()
}
