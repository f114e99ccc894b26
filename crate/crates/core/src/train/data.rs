//! Dataset binding, splits, standardization, and batch assembly.

use serde::{Deserialize, Serialize};

use crate::benchgen::{ColumnKind, SyntheticDataset};
use crate::model::{Batch, ColumnData, FeatureSchema, TaskKind, TaskSpec};
use crate::numkit::{Rng, Tensor};
use crate::{Error, Result};

/// Column-typed feature table with per-task targets.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: FeatureSchema,
    /// Feature columns, each holding `n` values.
    pub columns: Vec<ColumnData>,
    /// Targets, `n x t` (multiclass labels stored as small integers).
    pub labels: Tensor,
    pub tasks: Vec<TaskSpec>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.shape()[0]
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    /// Wrap a generated dataset: all-numeric features, one regression task
    /// per label column.
    pub fn from_synthetic(ds: &SyntheticDataset) -> Dataset {
        let (n, d) = ds.features.dims2();
        let columns = (0..d)
            .map(|j| {
                ColumnData::Numeric((0..n).map(|s| ds.features.data()[s * d + j]).collect())
            })
            .collect();
        Dataset {
            schema: FeatureSchema::numeric(d),
            columns,
            labels: ds.labels.clone(),
            tasks: ds.task_names().into_iter().map(TaskSpec::regression).collect(),
        }
    }

    /// Replace the default task list (names must stay aligned with label
    /// columns; kinds are validated against the stored labels).
    pub fn with_tasks(mut self, tasks: Vec<TaskSpec>) -> Result<Dataset> {
        if tasks.len() != self.labels.shape()[1] {
            return Err(Error::Contract(format!(
                "{} tasks declared for {} label columns",
                tasks.len(),
                self.labels.shape()[1]
            )));
        }
        self.tasks = tasks;
        self.validate_labels()?;
        Ok(self)
    }

    fn validate_labels(&self) -> Result<()> {
        let (n, t) = self.labels.dims2();
        for (i, task) in self.tasks.iter().enumerate() {
            task.validate()?;
            match task.kind {
                TaskKind::Binary => {
                    for s in 0..n {
                        let y = self.labels.data()[s * t + i];
                        if y != 0.0 && y != 1.0 {
                            return Err(Error::Contract(format!(
                                "task `{}`: label {y} at row {s} is not 0/1",
                                task.name
                            )));
                        }
                    }
                }
                TaskKind::Multiclass { classes } => {
                    for s in 0..n {
                        let y = self.labels.data()[s * t + i];
                        if y.fract() != 0.0 || y < 0.0 || y >= classes as f64 {
                            return Err(Error::Contract(format!(
                                "task `{}`: label {y} at row {s} is not a class in 0..{classes}",
                                task.name
                            )));
                        }
                    }
                }
                TaskKind::Regression => {}
            }
        }
        Ok(())
    }

    fn label(&self, row: usize, task: usize) -> f64 {
        let t = self.labels.shape()[1];
        self.labels.data()[row * t + task]
    }
}

/// Mean/std pairs fitted on the training split only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Standardization {
    /// Per feature column; `None` for categorical columns.
    pub features: Vec<Option<(f64, f64)>>,
    /// Per task; `None` for classification tasks.
    pub targets: Vec<Option<(f64, f64)>>,
}

/// A dataset with train/val/test index sets and train-fitted statistics.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub dataset: Dataset,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: Standardization,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    // Constant columns standardize to zero rather than blowing up.
    let std = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
    (mean, std)
}

/// Statistics fitted on the rows in `train` only.
pub fn fit_standardization(dataset: &Dataset, train: &[usize]) -> Standardization {
    let features = dataset
        .columns
        .iter()
        .map(|col| match col {
            ColumnData::Numeric(values) => {
                Some(mean_std(train.iter().map(|&i| values[i])))
            }
            ColumnData::Categorical(_) => None,
        })
        .collect();
    let targets = dataset
        .tasks
        .iter()
        .enumerate()
        .map(|(task, spec)| match spec.kind {
            TaskKind::Regression => {
                Some(mean_std(train.iter().map(|&i| dataset.label(i, task))))
            }
            _ => None,
        })
        .collect();
    Standardization { features, targets }
}

/// Seeded shuffle followed by contiguous slicing into train/val/test.
pub fn make_splits(dataset: Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<SplitDataset> {
    let (r_train, r_val, r_test) = ratios;
    if r_train <= 0.0 || r_val <= 0.0 || r_test <= 0.0 {
        return Err(Error::Contract(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    if (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "split ratios must sum to 1, got {}",
            r_train + r_val + r_test
        )));
    }
    let n = dataset.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut order);
    let n_train = (n as f64 * r_train).round() as usize;
    let n_val = (n as f64 * r_val).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Contract(format!(
            "split of {n} rows left an empty part (train {n_train}, val {n_val}, test {})",
            n.saturating_sub(n_train + n_val)
        )));
    }
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    let stats = fit_standardization(&dataset, &train);
    Ok(SplitDataset {
        dataset,
        train,
        val,
        test,
        stats,
    })
}

impl SplitDataset {
    /// Assemble the feature batch for `rows`, standardizing numeric columns
    /// with the train statistics when asked.
    pub fn feature_batch(&self, rows: &[usize], standardize: bool) -> Batch {
        let columns = self
            .dataset
            .columns
            .iter()
            .zip(&self.stats.features)
            .map(|(col, stat)| match col {
                ColumnData::Numeric(values) => {
                    let picked: Vec<f64> = match (standardize, stat) {
                        (true, Some((mean, std))) => {
                            rows.iter().map(|&i| (values[i] - mean) / std).collect()
                        }
                        _ => rows.iter().map(|&i| values[i]).collect(),
                    };
                    ColumnData::Numeric(picked)
                }
                ColumnData::Categorical(values) => {
                    ColumnData::Categorical(rows.iter().map(|&i| values[i]).collect())
                }
            })
            .collect();
        Batch {
            n: rows.len(),
            columns,
        }
    }

    /// Raw targets of one task for `rows`.
    pub fn raw_targets(&self, rows: &[usize], task: usize) -> Vec<f64> {
        rows.iter().map(|&i| self.dataset.label(i, task)).collect()
    }

    /// Targets as used by the training loss: regression targets move to
    /// standardized space, classification targets stay raw.
    pub fn loss_targets(&self, rows: &[usize], task: usize) -> Vec<f64> {
        let raw = self.raw_targets(rows, task);
        match self.stats.targets[task] {
            Some((mean, std)) => raw.iter().map(|y| (y - mean) / std).collect(),
            None => raw,
        }
    }

    /// Map standardized regression predictions back to the original scale.
    pub fn unstandardize_predictions(&self, task: usize, preds: &[f64]) -> Vec<f64> {
        match self.stats.targets[task] {
            Some((mean, std)) => preds.iter().map(|p| p * std + mean).collect(),
            None => preds.to_vec(),
        }
    }
}
