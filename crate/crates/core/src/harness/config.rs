//! Run configuration, read from flat dotted-key TOML such as
//!
//! ```toml
//! dataset.kind = "blobs"
//! loss.kind = "imae"
//! loss.T = 8.0
//! optim.kind = "momentum"
//! optim.lr = 0.1
//! noise.kind = "symmetric"
//! noise.rate = 0.4
//! train.iterations = 4000
//! ```
//!
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::data::{NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::nn::{OptimizerKind, OptimizerSpec};

pub const DEFAULT_SEED: u64 = 123;
/// IMAE's T when training labels are clean / noisy and no `loss.T` is given.
pub const DEFAULT_T_CLEAN: f64 = 0.5;
pub const DEFAULT_T_NOISY: f64 = 8.0;
pub const DATA_DIR_ENV: &str = "NLL_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Blobs {
        classes: usize,
        n_per_class: usize,
        dim: usize,
        separation: f64,
    },
    Mnist {
        dir: Option<PathBuf>,
        train_limit: Option<usize>,
    },
    Cifar10 {
        dir: Option<PathBuf>,
        train_limit: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arch {
    /// Dense/ReLU stack; empty `hidden` means a linear classifier.
    Mlp {
        hidden: Vec<usize>,
    },
    Cnn {
        filters: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetConfig,
    pub arch: Arch,
    pub loss: LossSpec,
    pub optim: OptimizerSpec,
    /// `seed` here is ignored; the noise stream derives from `seed` below.
    pub noise: NoiseSpec,
    pub batch_size: usize,
    pub total_iterations: u64,
    pub lr_drop_points: Vec<u64>,
    pub lr_drop_factor: f64,
    pub eval_every: u64,
    pub seed: u64,
    pub augment: bool,
    pub augment_pad: usize,
    pub output_dir: Option<PathBuf>,
}

impl TrainConfig {
    /// A small blobs/MLP run with default hyper-parameters.
    pub fn blobs_default() -> Self {
        TrainConfig {
            dataset: DatasetConfig::Blobs {
                classes: 10,
                n_per_class: 500,
                dim: 20,
                separation: 3.0,
            },
            arch: Arch::Mlp { hidden: vec![64] },
            loss: LossSpec::cce(),
            optim: OptimizerSpec::default(),
            noise: NoiseSpec::none(),
            batch_size: 128,
            total_iterations: 1000,
            lr_drop_points: vec![400, 700],
            lr_drop_factor: 10.0,
            eval_every: 100,
            seed: DEFAULT_SEED,
            augment: false,
            augment_pad: 4,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optim.validate()?;
        self.noise.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("train.eval_every must be >= 1".into()));
        }
        if !(self.lr_drop_factor > 0.0) {
            return Err(Error::Config(
                "train.lr_drop_factor must be positive".into(),
            ));
        }
        for w in self.lr_drop_points.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(
                    "train.lr_drops must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = self.lr_drop_points.last() {
            if self.total_iterations > 0 && last >= self.total_iterations {
                return Err(Error::Config(format!(
                    "lr drop at {last} is not before the end of training ({})",
                    self.total_iterations
                )));
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &Value::Table(table), &mut flat);
        let mut keys = Keys(flat);
        let config = build(&mut keys)?;
        if let Some(k) = keys.0.keys().next() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        config.validate()?;
        Ok(config)
    }

    /// Resolves the dataset directory: explicit override, then the config
    /// file, then `NLL_DATA_DIR`.
    pub fn resolve_data_dir(&mut self, flag: Option<PathBuf>) {
        let env = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        match &mut self.dataset {
            DatasetConfig::Mnist { dir, .. } | DatasetConfig::Cifar10 { dir, .. } => {
                if flag.is_some() {
                    *dir = flag;
                } else if dir.is_none() {
                    *dir = env;
                }
            }
            DatasetConfig::Blobs { .. } => {}
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(type_err(key, "a string", &other)),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(other) => Err(type_err(key, "a number", &other)),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(other) => Err(type_err(key, "a non-negative integer", &other)),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(other) => Err(type_err(key, "a boolean", &other)),
        }
    }

    fn u64_list(&mut self, key: &str) -> Result<Option<Vec<u64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::Integer(i) if i >= 0 => Ok(i as u64),
                    other => Err(type_err(key, "a list of non-negative integers", &other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(other) => Err(type_err(key, "a list", &other)),
        }
    }
}

fn type_err(key: &str, want: &str, got: &Value) -> Error {
    Error::Config(format!("`{key}` must be {want}, got {got}"))
}

/// Parses `"a:b,c:d"` into flip pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("pair `{item}` is not of the form a:b")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad class index `{s}` in pair `{item}`")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn build(k: &mut Keys) -> Result<TrainConfig> {
    let base = TrainConfig::blobs_default();

    let dataset_kind = k.str("dataset.kind")?.unwrap_or_else(|| "blobs".into());
    let dir = k.str("dataset.dir")?.map(PathBuf::from);
    let train_limit = k.usize("dataset.train_limit")?;
    let dataset = match dataset_kind.as_str() {
        "blobs" => {
            let DatasetConfig::Blobs {
                classes,
                n_per_class,
                dim,
                separation,
            } = base.dataset
            else {
                unreachable!("default dataset is blobs")
            };
            DatasetConfig::Blobs {
                classes: k.usize("dataset.classes")?.unwrap_or(classes),
                n_per_class: k.usize("dataset.n_per_class")?.unwrap_or(n_per_class),
                dim: k.usize("dataset.dim")?.unwrap_or(dim),
                separation: k.f64("dataset.separation")?.unwrap_or(separation),
            }
        }
        "mnist" => DatasetConfig::Mnist { dir, train_limit },
        "cifar10" | "cifar-10" => DatasetConfig::Cifar10 { dir, train_limit },
        other => return Err(Error::Config(format!("unknown dataset.kind `{other}`"))),
    };

    let arch = match k.str("model.arch")?.as_deref().unwrap_or("mlp") {
        "linear" => Arch::Mlp { hidden: Vec::new() },
        "mlp" => Arch::Mlp {
            hidden: k
                .u64_list("model.hidden")?
                .map(|h| h.into_iter().map(|v| v as usize).collect())
                .unwrap_or_else(|| vec![64]),
        },
        "cnn" => {
            let f = k.u64_list("model.filters")?.unwrap_or_else(|| vec![16, 32]);
            if f.len() != 2 {
                return Err(Error::Config(
                    "model.filters needs exactly two entries".into(),
                ));
            }
            Arch::Cnn {
                filters: (f[0] as usize, f[1] as usize),
            }
        }
        other => return Err(Error::Config(format!("unknown model.arch `{other}`"))),
    };

    let noise_kind: NoiseKind = k
        .str("noise.kind")?
        .as_deref()
        .unwrap_or("none")
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let noise_rate = k.f64("noise.rate")?.unwrap_or(0.0);
    let pairs = match k.str("noise.pairs")? {
        Some(text) => parse_pairs(&text)?,
        None => Vec::new(),
    };
    let noise = NoiseSpec {
        kind: noise_kind,
        rate: noise_rate,
        pairs,
        seed: 0,
    };

    let loss_kind: LossKind = k
        .str("loss.kind")?
        .as_deref()
        .unwrap_or("cce")
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let default_t = if noise.is_active() {
        DEFAULT_T_NOISY
    } else {
        DEFAULT_T_CLEAN
    };
    let mut loss = LossSpec::new(loss_kind);
    loss.t = k.f64("loss.T")?.unwrap_or(default_t);
    if let Some(q) = k.f64("loss.q")? {
        loss.q = q;
    }
    if let Some(e) = k.f64("loss.epsilon")? {
        loss.epsilon = e;
    }

    let mut optim = base.optim;
    if let Some(kind) = k.str("optim.kind")? {
        optim.kind = kind
            .parse::<OptimizerKind>()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(v) = k.f64("optim.lr")? {
        optim.learning_rate = v;
    }
    if let Some(v) = k.f64("optim.momentum")? {
        optim.momentum = v;
    }
    if let Some(v) = k.f64("optim.beta1")? {
        optim.beta1 = v;
    }
    if let Some(v) = k.f64("optim.beta2")? {
        optim.beta2 = v;
    }
    if let Some(v) = k.f64("optim.delta")? {
        optim.delta = v;
    }
    if let Some(v) = k.f64("optim.weight_decay")? {
        optim.weight_decay = v;
    }

    let total_iterations = k.u64("train.iterations")?.unwrap_or(base.total_iterations);
    let lr_drop_points = k.u64_list("train.lr_drops")?.unwrap_or_else(|| {
        // 40% / 70% of the run
        [4, 7]
            .iter()
            .map(|f| total_iterations * f / 10)
            .filter(|&p| p > 0)
            .collect()
    });
    Ok(TrainConfig {
        dataset,
        arch,
        loss,
        optim,
        noise,
        batch_size: k.usize("train.batch_size")?.unwrap_or(base.batch_size),
        total_iterations,
        lr_drop_points,
        lr_drop_factor: k
            .f64("train.lr_drop_factor")?
            .unwrap_or(base.lr_drop_factor),
        eval_every: k.u64("train.eval_every")?.unwrap_or(base.eval_every),
        seed: k.u64("train.seed")?.unwrap_or(DEFAULT_SEED),
        augment: k.bool("train.augment")?.unwrap_or(false),
        augment_pad: k.usize("train.augment_pad")?.unwrap_or(base.augment_pad),
        output_dir: k.str("output.dir")?.map(PathBuf::from),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys() {
        let cfg = TrainConfig::from_toml_str(
            r#"
            dataset.kind = "blobs"
            dataset.classes = 4
            loss.kind = "imae"
            optim.kind = "adam"
            optim.lr = 0.005
            optim.delta = 0.1
            noise.kind = "symmetric"
            noise.rate = 0.4
            train.iterations = 1000
            train.batch_size = 32
            train.seed = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.loss.kind, LossKind::Imae);
        assert_eq!(cfg.loss.t, DEFAULT_T_NOISY);
        assert_eq!(cfg.optim.kind, OptimizerKind::Adam);
        assert_eq!(cfg.optim.delta, 0.1);
        assert_eq!(cfg.lr_drop_points, vec![400, 700]);
        assert_eq!(cfg.seed, 7);
        assert!(matches!(
            cfg.dataset,
            DatasetConfig::Blobs { classes: 4, .. }
        ));
    }

    #[test]
    fn clean_runs_default_to_small_t() {
        let cfg = TrainConfig::from_toml_str("loss.kind = \"imae\"").unwrap();
        assert_eq!(cfg.loss.t, DEFAULT_T_CLEAN);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        let cfg = TrainConfig::from_toml_str("loss.kind = \"imae\"\nloss.T = 2.0").unwrap();
        assert_eq!(cfg.loss.t, 2.0);
    }

    #[test]
    fn table_syntax_is_equivalent() {
        let a =
            TrainConfig::from_toml_str("[loss]\nkind = \"mae\"\n[train]\niterations = 50").unwrap();
        let b = TrainConfig::from_toml_str("loss.kind = \"mae\"\ntrain.iterations = 50").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "loss.kind = \"focal\"",
            "loss.colour = 3",
            "train.iterations = -4",
            "train.iterations = 100\ntrain.lr_drops = [50, 40]",
            "train.iterations = 100\ntrain.lr_drops = [100]",
            "noise.kind = \"asym\"\nnoise.rate = 0.2\nnoise.pairs = \"0:1,1:2\"",
            "optim.lr = \"fast\"",
            "this is not toml",
        ] {
            assert!(
                TrainConfig::from_toml_str(text).is_err(),
                "accepted: {text}"
            );
        }
    }

    #[test]
    fn pair_syntax() {
        assert_eq!(parse_pairs("0:1, 3:5").unwrap(), vec![(0, 1), (3, 5)]);
        assert!(parse_pairs("0-1").is_err());
    }
}
