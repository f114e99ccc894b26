//! Model configuration, feature schema, task declarations, and batches.

use serde::{Deserialize, Serialize};

use crate::benchgen::ColumnKind;
use crate::metrics::MetricKind;
use crate::{Error, Result};

/// Which attention connections among feature and task tokens are blocked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScheme {
    /// No masking.
    None,
    /// Feature queries cannot attend to task keys.
    FNotT,
    /// Task queries cannot attend to other tasks' keys (self stays allowed).
    #[default]
    TNotT,
    /// Union of the two schemes above.
    Both,
}

impl MaskScheme {
    pub const ALL: [MaskScheme; 4] = [
        MaskScheme::None,
        MaskScheme::FNotT,
        MaskScheme::TNotT,
        MaskScheme::Both,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MaskScheme::None => "none",
            MaskScheme::FNotT => "f_not_t",
            MaskScheme::TNotT => "t_not_t",
            MaskScheme::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    Multitab,
    Stl,
    SharedBottom,
}

fn default_e() -> usize {
    16
}
fn default_heads() -> usize {
    4
}
fn default_blocks() -> usize {
    2
}
fn default_head_hidden() -> usize {
    16
}
fn default_trunk() -> Vec<usize> {
    vec![64, 32]
}

/// Architecture hyperparameters for the transformer and the MLP baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub arch: Arch,
    /// Embedding size per token.
    #[serde(default = "default_e")]
    pub e: usize,
    /// Attention heads; must divide `e` and `(d + t) * e`.
    #[serde(default = "default_heads")]
    pub h: usize,
    /// Encoder block count.
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    /// FFN hidden width; defaults to `2 * e`.
    #[serde(default)]
    pub ffn_hidden: Option<usize>,
    #[serde(default)]
    pub mask: MaskScheme,
    /// Rotary position encoding inside inter-sample attention.
    #[serde(default)]
    pub use_rope: bool,
    /// One shared task token instead of one per task.
    #[serde(default)]
    pub single_token: bool,
    /// Diagnostic: replace inter-sample attention with the identity so
    /// predictions become per-sample.
    #[serde(default)]
    pub inter_sample_identity: bool,
    /// Dropout on post-softmax attention weights (training only).
    #[serde(default)]
    pub dropout_attention: f64,
    /// Dropout on FFN hidden activations (training only).
    #[serde(default)]
    pub dropout_ffn: f64,
    /// Hidden width of each task head.
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    /// Baseline trunk widths.
    #[serde(default = "default_trunk")]
    pub trunk: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Multitab,
            e: default_e(),
            h: default_heads(),
            n_blocks: default_blocks(),
            ffn_hidden: None,
            mask: MaskScheme::default(),
            use_rope: false,
            single_token: false,
            inter_sample_identity: false,
            dropout_attention: 0.0,
            dropout_ffn: 0.0,
            head_hidden: default_head_hidden(),
            trunk: default_trunk(),
        }
    }
}

impl ModelConfig {
    pub fn ffn_hidden(&self) -> usize {
        self.ffn_hidden.unwrap_or(2 * self.e)
    }

    /// Validate dimension and divisibility constraints for a given feature
    /// count and token count.
    pub fn validate(&self, d: usize, token_count: usize) -> Result<()> {
        if self.e == 0 || self.h == 0 || self.n_blocks == 0 || self.head_hidden == 0 {
            return Err(Error::config("/model", "all dimensions must be >= 1"));
        }
        if self.e % self.h != 0 {
            return Err(Error::config(
                "/model/h",
                format!("heads {} must divide embedding size {}", self.h, self.e),
            ));
        }
        let flat = (d + token_count) * self.e;
        if flat % self.h != 0 {
            return Err(Error::config(
                "/model/h",
                format!("heads {} must divide flattened width {flat}", self.h),
            ));
        }
        for rate in [self.dropout_attention, self.dropout_ffn] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config("/model", format!("dropout {rate} outside [0, 1)")));
            }
        }
        if self.trunk.iter().any(|&w| w == 0) {
            return Err(Error::config("/model/trunk", "trunk widths must be >= 1"));
        }
        Ok(())
    }
}

/// Per-column typing of the feature table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnKind>,
}

impl FeatureSchema {
    pub fn numeric(d: usize) -> Self {
        FeatureSchema {
            columns: vec![ColumnKind::Numeric; d],
        }
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::config("/schema", "need at least one feature column"));
        }
        for (j, col) in self.columns.iter().enumerate() {
            if let ColumnKind::Categorical { cardinality } = col {
                if *cardinality < 2 {
                    return Err(Error::config(
                        format!("/schema/columns/{j}"),
                        format!("categorical cardinality must be >= 2, got {cardinality}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Binary,
    Multiclass { classes: usize },
    Regression,
}

/// One prediction task: its kind fixes the head width and loss; the metric
/// defaults to AUC for classification and EV for regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: TaskKind,
    #[serde(default)]
    pub metric: Option<MetricKind>,
}

impl TaskSpec {
    pub fn binary(name: impl Into<String>) -> Self {
        TaskSpec {
            name: name.into(),
            kind: TaskKind::Binary,
            metric: None,
        }
    }

    pub fn multiclass(name: impl Into<String>, classes: usize) -> Self {
        TaskSpec {
            name: name.into(),
            kind: TaskKind::Multiclass { classes },
            metric: None,
        }
    }

    pub fn regression(name: impl Into<String>) -> Self {
        TaskSpec {
            name: name.into(),
            kind: TaskKind::Regression,
            metric: None,
        }
    }

    /// Output width of this task's head.
    pub fn output_dim(&self) -> usize {
        match self.kind {
            TaskKind::Binary => 1,
            TaskKind::Multiclass { classes } => classes,
            TaskKind::Regression => 1,
        }
    }

    pub fn metric(&self) -> MetricKind {
        self.metric.unwrap_or(match self.kind {
            TaskKind::Binary | TaskKind::Multiclass { .. } => MetricKind::Auc,
            TaskKind::Regression => MetricKind::Ev,
        })
    }

    pub fn lower_is_better(&self) -> bool {
        self.metric().lower_is_better()
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self.kind, TaskKind::Regression)
    }

    pub fn validate(&self) -> Result<()> {
        if let TaskKind::Multiclass { classes } = self.kind {
            if classes < 2 {
                return Err(Error::config(
                    "/tasks",
                    format!("task `{}`: multiclass needs >= 2 classes", self.name),
                ));
            }
        }
        match (self.kind, self.metric) {
            (TaskKind::Regression, Some(MetricKind::Auc)) => Err(Error::config(
                "/tasks",
                format!("task `{}`: AUC is not defined for regression", self.name),
            )),
            (TaskKind::Binary | TaskKind::Multiclass { .. }, Some(m)) if m != MetricKind::Auc => {
                Err(Error::config(
                    "/tasks",
                    format!("task `{}`: classification tasks report AUC", self.name),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// A batch of raw feature columns, in schema order.
#[derive(Clone, Debug)]
pub struct Batch {
    pub n: usize,
    pub columns: Vec<ColumnData>,
}

#[derive(Clone, Debug)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<usize>),
}

impl Batch {
    /// Check the batch against a schema (column count, lengths, index
    /// ranges; the out-of-vocabulary row index `cardinality` is allowed).
    pub fn conforms(&self, schema: &FeatureSchema) -> Result<()> {
        if self.columns.len() != schema.columns.len() {
            return Err(Error::Contract(format!(
                "batch has {} columns, schema {}",
                self.columns.len(),
                schema.columns.len()
            )));
        }
        for (j, (col, kind)) in self.columns.iter().zip(&schema.columns).enumerate() {
            match (col, kind) {
                (ColumnData::Numeric(v), ColumnKind::Numeric) => {
                    if v.len() != self.n {
                        return Err(Error::Contract(format!(
                            "column {j}: {} values for batch of {}",
                            v.len(),
                            self.n
                        )));
                    }
                }
                (ColumnData::Categorical(v), ColumnKind::Categorical { cardinality }) => {
                    if v.len() != self.n {
                        return Err(Error::Contract(format!(
                            "column {j}: {} values for batch of {}",
                            v.len(),
                            self.n
                        )));
                    }
                    if let Some(&bad) = v.iter().find(|&&idx| idx > *cardinality) {
                        return Err(Error::Contract(format!(
                            "column {j}: category index {bad} exceeds cardinality {cardinality}"
                        )));
                    }
                }
                _ => {
                    return Err(Error::Contract(format!(
                        "column {j}: batch data kind does not match schema"
                    )));
                }
            }
        }
        Ok(())
    }
}
