//! Self-supervised training: configuration, schedules, steps, checkpoints.

mod checkpoint;
mod config;
mod run;
mod schedule;
mod step;

pub use checkpoint::{
    load_checkpoint, read_header, save_checkpoint, Checkpoint, CheckpointHeader, EpochLosses, OptimizerState,
    RngState, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use config::{
    get_path, parse_override, DataConfig, ExperimentConfig, LatentSource, LossVariant, Method, ModuleKind, Precision,
    Preset,
};
pub use run::{
    checkpoint_path, epoch_batches, read_metrics, run_training, CheckpointRecord, CheckpointSeries, RunOptions,
    RunOutcome, StepRecord, Trainer, METRICS_FILE, SERIES_FILE,
};
pub use schedule::lr_at;
pub use step::{train_step_byol, train_step_simclr, TrainBatch, WarpedBatch};
