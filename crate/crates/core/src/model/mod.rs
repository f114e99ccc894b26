//! The multitask tabular transformer and its MLP baselines.
//!
//! A sample's `d` feature tokens and `t` learned task tokens are embedded,
//! concatenated, and run through encoder blocks that alternate masked
//! inter-feature attention and inter-sample attention, each followed by a
//! feed-forward network under a pre-norm residual layout. Task-token outputs
//! feed per-task MLP heads.

pub mod attention;
pub mod baseline;
pub mod config;
pub mod embed;
pub mod encoder;
pub mod gradcheck;
pub mod mask;
pub mod net;
pub mod params;

pub use attention::{inter_feature_attention, inter_sample_attention, DropoutState};
pub use baseline::{BaselineVariant, MlpBaseline};
pub use config::{
    Arch, Batch, ColumnData, FeatureSchema, MaskScheme, ModelConfig, TaskKind, TaskSpec,
};
pub use embed::embed;
pub use mask::expand_mask;
pub use net::MultiTabNet;
pub use params::{ParamStore, TapedParams};

use crate::numkit::{Rng, Tape, Var};
use crate::Result;

/// Either architecture behind one forward/init surface, selected by
/// [`Arch`].
pub enum AnyModel {
    Transformer(MultiTabNet),
    Baseline(MlpBaseline),
}

impl AnyModel {
    pub fn build(config: ModelConfig, schema: FeatureSchema, tasks: Vec<TaskSpec>) -> Result<Self> {
        match config.arch {
            Arch::Multitab => Ok(AnyModel::Transformer(MultiTabNet::new(config, schema, tasks)?)),
            Arch::Stl => Ok(AnyModel::Baseline(MlpBaseline::new(
                BaselineVariant::Stl,
                config,
                schema,
                tasks,
            )?)),
            Arch::SharedBottom => Ok(AnyModel::Baseline(MlpBaseline::new(
                BaselineVariant::SharedBottom,
                config,
                schema,
                tasks,
            )?)),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            AnyModel::Transformer(m) => &m.config,
            AnyModel::Baseline(m) => &m.config,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        match self {
            AnyModel::Transformer(m) => &m.schema,
            AnyModel::Baseline(m) => &m.schema,
        }
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        match self {
            AnyModel::Transformer(m) => &m.tasks,
            AnyModel::Baseline(m) => &m.tasks,
        }
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamStore {
        match self {
            AnyModel::Transformer(m) => m.init_params(rng),
            AnyModel::Baseline(m) => m.init_params(rng),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &TapedParams,
        batch: &Batch,
        dropout: &mut DropoutState,
    ) -> Vec<Var> {
        match self {
            AnyModel::Transformer(m) => m.forward(tape, params, batch, dropout),
            AnyModel::Baseline(m) => m.forward(tape, params, batch, dropout),
        }
    }
}
