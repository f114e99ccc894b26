//! Synthetic multitask dataset generation.
//!
//! Task weight vectors are built so that pairwise cosine similarities match
//! a target correlation matrix exactly; labels are polynomial transforms of
//! the projections with per-task Gaussian noise. A legacy two-task sinusoid
//! generator is included for comparison, along with dataset serialization.

mod config;
mod generate;
mod io;
mod weights;

pub use config::{Correlation, GenConfig, GeneratorConfig, LegacyGenConfig};
pub use generate::{
    correlation_report, generate, generate_legacy_mmoe, task_weights, CorrelationReport,
    PairStat, SyntheticDataset,
};
pub use io::{load_dataset, save_dataset, ColumnKind, DatasetSchema};
pub use weights::{build_correlation_matrix, build_weight_matrix, WeightMatrix};
