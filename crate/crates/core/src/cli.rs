//! `nll` subcommands. Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    export_curve_csv, imae_variance_analytic, weight_curve, weight_variance_numeric,
};
use crate::data::{inject_asymmetric_noise, inject_symmetric_noise, NoiseSpec};
use crate::error::Error;
use crate::harness::{parse_pairs, read_metrics_csv, run_training, summarize, TrainConfig};
use crate::losses::{LossKind, LossSpec};
use crate::math::DEFAULT_SUBDIVISIONS;
use crate::nn::{grad_check, Model, DEFAULT_GRADCHECK_STEP};

/// Thresholds for `gradcheck`: quadrature-based IMAE gets a looser bound.
pub const GRADCHECK_TOL: f64 = 1e-6;
pub const GRADCHECK_TOL_IMAE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "nll", about = "Noise-robust loss experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration and write metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weight curve and weight variance of a loss.
    Analyze {
        #[arg(long)]
        loss: String,
        #[arg(long = "T", alias = "t")]
        t: Option<f64>,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corrupt a label file (one class index per line).
    NoiseGen {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of a tiny network's parameter gradients.
    Gradcheck {
        #[arg(long, default_value = "mlp-tiny")]
        arch: String,
        #[arg(long)]
        loss: String,
        #[arg(long = "T", alias = "t")]
        t: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Best / final / hybrid summary of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn loss_spec(kind: &str, t: Option<f64>) -> Result<LossSpec, Failure> {
    let kind: LossKind = kind
        .parse()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let mut spec = LossSpec::new(kind);
    if let Some(t) = t {
        spec.t = t;
    }
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(spec)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train {
            config,
            data_dir,
            seed,
            out,
        } => {
            if !config.is_file() {
                return Err(Failure::Usage(format!(
                    "config file {} does not exist",
                    config.display()
                )));
            }
            let mut cfg =
                TrainConfig::from_file(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            cfg.resolve_data_dir(data_dir);
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            if cfg.output_dir.is_none() {
                cfg.output_dir = Some(PathBuf::from("runs/latest"));
            }
            let outcome = run_training(&cfg)?;
            let last = outcome.records.last().expect("at least one record");
            println!(
                "loss={} best_test={:.4} final_test={:.4} final_hybrid={:.4}",
                cfg.loss, outcome.best_test_acc, outcome.final_test_acc, last.metrics.hybrid_acc
            );
            println!(
                "metrics: {}",
                cfg.output_dir
                    .expect("set above")
                    .join("metrics.csv")
                    .display()
            );
            Ok(())
        }
        Command::Analyze {
            loss,
            t,
            points,
            out,
        } => {
            let spec = loss_spec(&loss, t)?;
            let curve = weight_curve(&spec, points).map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(path) = &out {
                export_curve_csv(&curve, path)?;
                println!("curve: {} ({} points)", path.display(), curve.samples.len());
            }
            let numeric = weight_variance_numeric(&spec, DEFAULT_SUBDIVISIONS)?;
            println!("loss={spec} variance_numeric={numeric:.6}");
            if spec.kind == LossKind::Imae {
                let analytic = imae_variance_analytic(spec.t)?;
                println!("variance_analytic={analytic:.6}");
                println!("T={} sigma={analytic:.3}", spec.t);
            }
            Ok(())
        }
        Command::NoiseGen {
            labels,
            kind,
            rate,
            pairs,
            classes,
            seed,
            out,
        } => {
            let text = fs::read_to_string(&labels).map_err(|e| Error::io(&labels, e))?;
            let truth = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .enumerate()
                .map(|(i, l)| {
                    l.parse::<usize>().map_err(|_| {
                        Failure::Usage(format!("line {}: `{l}` is not a class index", i + 1))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let classes = classes.unwrap_or_else(|| truth.iter().max().map_or(0, |m| m + 1));
            let (observed, mask) = match kind.as_str() {
                "sym" | "symmetric" => inject_symmetric_noise(&truth, rate, classes, seed)
                    .map_err(|e| Failure::Usage(e.to_string()))?,
                "asym" | "asymmetric" => {
                    let pairs = parse_pairs(pairs.as_deref().unwrap_or(""))
                        .map_err(|e| Failure::Usage(e.to_string()))?;
                    inject_asymmetric_noise(&truth, &NoiseSpec::pairs(rate, pairs, seed))
                        .map_err(|e| Failure::Usage(e.to_string()))?
                }
                other => return Err(Failure::Usage(format!("unknown noise kind `{other}`"))),
            };
            let mut csv = String::from("index,true,observed,noisy\n");
            for (i, ((t, o), m)) in truth.iter().zip(&observed).zip(&mask).enumerate() {
                csv.push_str(&format!("{i},{t},{o},{}\n", u8::from(*m)));
            }
            fs::write(&out, csv).map_err(|e| Error::io(&out, e))?;
            let flipped = mask.iter().filter(|&&m| m).count();
            println!(
                "flipped {flipped} of {} labels ({:.4})",
                truth.len(),
                flipped as f64 / truth.len().max(1) as f64
            );
            Ok(())
        }
        Command::Gradcheck {
            arch,
            loss,
            t,
            seed,
        } => {
            let spec = loss_spec(&loss, t)?;
            let (inputs, hidden, classes) = match arch.as_str() {
                "mlp-tiny" => (4, vec![6], 3),
                "linear-tiny" => (4, Vec::new(), 3),
                other => return Err(Failure::Usage(format!("unknown arch `{other}`"))),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = Model::mlp(inputs, &hidden, classes, &mut rng)?;
            let batch = 8;
            let x = Array2::from_shape_simple_fn((batch, inputs), || rng.gen_range(-1.0..1.0));
            let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
            let err = grad_check(&model, &spec, x.view(), &labels, DEFAULT_GRADCHECK_STEP)?;
            let tol = if spec.kind == LossKind::Imae {
                GRADCHECK_TOL_IMAE
            } else {
                GRADCHECK_TOL
            };
            println!("arch={arch} loss={spec} max_rel_error={err:.3e} tolerance={tol:.0e}");
            if err <= tol {
                Ok(())
            } else {
                Err(Failure::Runtime(format!(
                    "gradient check failed: {err:.3e} > {tol:.0e}"
                )))
            }
        }
        Command::Report { run } => {
            let records = read_metrics_csv(&run.join("metrics.csv"))?;
            let s = summarize(&records)
                .ok_or_else(|| Failure::Runtime("metrics.csv has no records".into()))?;
            let m = s.last.metrics;
            println!("records: {}", records.len());
            println!(
                "best test acc: {:.4} (iteration {})",
                s.best_test_acc, s.best_iteration
            );
            println!(
                "final test acc: {:.4} (iteration {})",
                m.test_acc, s.last.iteration
            );
            match m.noisy_subset_acc {
                Some(v) => println!("final noisy-subset acc: {v:.4}"),
                None => println!("final noisy-subset acc: --"),
            }
            println!("final clean-subset acc: {:.4}", m.clean_subset_acc);
            println!("final hybrid acc: {:.4}", m.hybrid_acc);
            Ok(())
        }
    }
}
