//! Search and retraining loops, the feature bank behind the batch
//! regularizer, and per-epoch reporting.

pub mod bank;
pub mod config;
pub mod metrics;
pub mod pipeline;

pub use bank::{kcr_batch_loss, refresh_bank, target_rank, FeatureBank, LandmarkState};
pub use config::{DataConfig, ExperimentConfig, RunConfig, Splits, CONFIG_SCHEMA};
pub use metrics::{curves, parse_csv, pearson, to_csv, Curves, EpochRecord, MetricsRow, Phase, CSV_HEADER};
pub use pipeline::{
    evaluate, evaluate_logits, measure, run_pipeline, run_retrain, run_search, search_epoch, train_epoch,
    Evaluation, PipelineOutput, Schedule, SearchOutcome, SearchState,
};
