//! Experiment runner: seeded training loop, split metrics and CSV logging.

mod config;
mod metrics;
mod train;

pub use config::{
    parse_pairs, Arch, DatasetConfig, TrainConfig, DATA_DIR_ENV, DEFAULT_SEED, DEFAULT_T_CLEAN,
    DEFAULT_T_NOISY,
};
pub use metrics::{
    eval_split_metrics, read_metrics_csv, summarize, MetricsRecord, RunSummary, SplitMetrics,
    METRICS_HEADER,
};
pub use train::{
    build_model, load_data, lr_schedule, run_training, stream_seed, RunOutcome, Stream,
};
