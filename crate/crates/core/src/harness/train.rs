use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Arch, DatasetConfig, TrainConfig};
use super::metrics::{argmax_rows, predict_logits, split_metrics, MetricsRecord, METRICS_HEADER};
use crate::data::{
    augment_pad_crop_flip, inject_noise, load_cifar10_bin, load_mnist_idx, synth_blobs, DataSplits,
    NoiseSpec,
};
use crate::error::{Error, Result};
use crate::losses::{self, batch_loss_and_grads_fast};
use crate::nn::{optimizer_step, Model};

/// Consecutive non-finite batch losses tolerated before a run is aborted.
const MAX_NON_FINITE_STEPS: u32 = 100;

/// Independent random streams derived from the single run seed. None of
/// them depends on the loss, so runs that differ only in the loss see the
/// same data, noise, initialization and batch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Noise = 3,
    Augment = 4,
    Data = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    stream_rng(seed, stream).next_u64()
}

/// Step-function schedule: the initial rate divided by `lr_drop_factor`
/// once for every drop point already reached.
pub fn lr_schedule(step: u64, config: &TrainConfig) -> f64 {
    let drops = config.lr_drop_points.iter().filter(|&&p| step >= p).count();
    config.optim.learning_rate / config.lr_drop_factor.powi(drops as i32)
}

fn require_dir(dir: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    dir.clone().ok_or_else(|| {
        Error::Config(format!(
            "{what} needs a data directory (--data-dir, dataset.dir or {})",
            super::DATA_DIR_ENV
        ))
    })
}

/// Loads the configured dataset and corrupts the training labels.
pub fn load_data(config: &TrainConfig) -> Result<DataSplits> {
    let mut splits = match &config.dataset {
        DatasetConfig::Blobs {
            classes,
            n_per_class,
            dim,
            separation,
        } => synth_blobs(
            *classes,
            *n_per_class,
            *dim,
            *separation,
            stream_seed(config.seed, Stream::Data),
        )?,
        DatasetConfig::Mnist { dir, train_limit } => {
            let mut s = load_mnist_idx(&require_dir(dir, "mnist")?)?;
            if let Some(n) = train_limit {
                s.train = s.train.truncate(*n);
            }
            s
        }
        DatasetConfig::Cifar10 { dir, train_limit } => {
            let mut s = load_cifar10_bin(&require_dir(dir, "cifar10")?)?;
            if let Some(n) = train_limit {
                s.train = s.train.truncate(*n);
            }
            s
        }
    };
    let noise = NoiseSpec {
        seed: stream_seed(config.seed, Stream::Noise),
        ..config.noise.clone()
    };
    let (observed, _) = inject_noise(&splits.train.true_labels, splits.train.classes, &noise)?;
    splits.train = splits.train.with_observed(observed)?;
    Ok(splits)
}

pub fn build_model(config: &TrainConfig, data: &DataSplits) -> Result<Model> {
    let mut rng = stream_rng(config.seed, Stream::Init);
    let inputs = data.train.features.ncols();
    let classes = data.train.classes;
    match &config.arch {
        Arch::Mlp { hidden } => Model::mlp(inputs, hidden, classes, &mut rng),
        Arch::Cnn { filters } => {
            let shape = data.train.image_shape.ok_or_else(|| {
                Error::Config("model.arch = \"cnn\" needs an image dataset".into())
            })?;
            Model::small_cnn(
                shape.channels,
                shape.height,
                shape.width,
                classes,
                *filters,
                &mut rng,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    pub best_test_acc: f64,
    pub final_test_acc: f64,
    pub model: Model,
}

struct MetricsSink {
    out: Option<(PathBuf, BufWriter<File>)>,
}

impl MetricsSink {
    fn open(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(MetricsSink { out: None });
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = MetricsSink {
            out: Some((path, BufWriter::new(file))),
        };
        sink.line(METRICS_HEADER)?;
        Ok(sink)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        if let Some((path, w)) = &mut self.out {
            writeln!(w, "{text}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        Ok(())
    }
}

fn evaluate(
    model: &Model,
    data: &DataSplits,
    config: &TrainConfig,
    iteration: u64,
) -> Result<MetricsRecord> {
    let train_logits = predict_logits(model, data.train.features.view())?;
    let test_logits = predict_logits(model, data.test.features.view())?;
    let metrics = split_metrics(
        &data.train,
        &argmax_rows(&train_logits),
        &data.test,
        &argmax_rows(&test_logits),
    );
    let mean_train_loss = if data.train.is_empty() {
        f64::NAN
    } else {
        batch_loss_and_grads_fast(
            &config.loss,
            train_logits.view(),
            &data.train.observed_labels,
        )?
        .0
    };
    Ok(MetricsRecord {
        iteration,
        metrics,
        mean_train_loss,
        current_lr: lr_schedule(iteration, config),
    })
}

/// Runs the full protocol: shuffle, batch, forward, logit gradients,
/// backward, optimizer step, with periodic evaluation. A record is written
/// at iteration 0, every `eval_every` iterations and once more at the end.
pub fn run_training(config: &TrainConfig) -> Result<RunOutcome> {
    config.validate()?;
    let data = load_data(config)?;
    if data.train.is_empty() && config.total_iterations > 0 {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut model = build_model(config, &data)?;
    let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle);
    let mut augment_rng = stream_rng(config.seed, Stream::Augment);
    let mut sink = MetricsSink::open(config.output_dir.as_deref())?;
    let mut records = Vec::new();

    let mut push = |record: MetricsRecord, records: &mut Vec<MetricsRecord>| -> Result<()> {
        sink.line(&record.csv_row())?;
        records.push(record);
        Ok(())
    };
    push(evaluate(&model, &data, config, 0)?, &mut records)?;

    let n = data.train.len();
    let dim = data.train.features.ncols();
    let batch = config.batch_size.min(n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut bad_steps = 0u32;
    let mut x = Array2::<f64>::zeros((batch, dim));
    let mut labels = vec![0usize; batch];

    for it in 0..config.total_iterations {
        for (row, label) in labels.iter_mut().enumerate() {
            if cursor == n {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            *label = data.train.observed_labels[idx];
            let src = data.train.features.row(idx);
            let mut dst = x.row_mut(row);
            match (config.augment, data.train.image_shape) {
                (true, Some(shape)) => {
                    let img = augment_pad_crop_flip(
                        src.as_slice().expect("standard layout"),
                        shape,
                        config.augment_pad,
                        &mut augment_rng,
                    );
                    dst.iter_mut().zip(img).for_each(|(d, v)| *d = v);
                }
                _ => dst.assign(&src),
            }
        }

        let logits = model.forward(x.view())?;
        let (loss, grads) = match batch_loss_and_grads_fast(&config.loss, logits.view(), &labels) {
            Ok(out) => out,
            Err(Error::Numeric(_)) => (f64::NAN, Vec::new()),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            bad_steps += 1;
            if bad_steps >= MAX_NON_FINITE_STEPS {
                return Err(Error::Numeric(format!(
                    "loss was non-finite for {bad_steps} consecutive steps (last at iteration {it}, {})",
                    config.loss
                )));
            }
        } else {
            bad_steps = 0;
            let param_grads = model.backward(losses::backward_input(&grads).view())?;
            let mut optim = config.optim;
            optim.learning_rate = lr_schedule(it, config);
            optimizer_step(&mut model, &param_grads, &optim, it + 1)?;
        }

        let done = it + 1;
        if done % config.eval_every == 0 {
            push(evaluate(&model, &data, config, done)?, &mut records)?;
        }
    }
    model.clear_cache();
    if config.total_iterations > 0 {
        push(
            evaluate(&model, &data, config, config.total_iterations)?,
            &mut records,
        )?;
    }

    let best_test_acc = records
        .iter()
        .map(|r| r.metrics.test_acc)
        .fold(f64::NEG_INFINITY, f64::max);
    let final_test_acc = records.last().map_or(0.0, |r| r.metrics.test_acc);
    Ok(RunOutcome {
        records,
        best_test_acc,
        final_test_acc,
        model,
    })
}
