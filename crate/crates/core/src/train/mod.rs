//! Multitask training: data pipeline, losses, Adam, early stopping,
//! checkpointing, and evaluation.

pub mod adam;
pub mod data;
pub mod fit;
pub mod gradcheck;
pub mod loss;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use data::{make_splits, Dataset, SplitDataset, Standardization};
pub use fit::{
    evaluate, fit, AnyModel, Checkpoint, EpochRecord, FitResult, PipelineInfo, TrainConfig,
};
pub use gradcheck::{run_gradcheck, GradCheckConfig, GradCheckOutcome};
pub use loss::{aggregate_losses, task_loss, TaskTargets};
