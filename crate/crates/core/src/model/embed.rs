//! Token embedding of raw feature columns.
//!
//! Numeric column `j` maps a value `v` to `v * w_j + b_j` with learned
//! vectors `w_j, b_j` of length `e`. Categorical columns look up a row of
//! their embedding table; the table's last row is reserved for
//! out-of-vocabulary values seen only at inference.

use std::sync::Arc;

use super::config::{Batch, ColumnData, FeatureSchema};
use super::params::TapedParams;
use crate::benchgen::ColumnKind;
use crate::numkit::{Tape, Tensor, Var};

/// Parameter names used by the embedding layer under `prefix`.
pub fn numeric_weight_name(prefix: &str) -> String {
    format!("{prefix}embed.numeric.weight")
}

pub fn numeric_bias_name(prefix: &str) -> String {
    format!("{prefix}embed.numeric.bias")
}

pub fn table_name(prefix: &str, column: usize) -> String {
    format!("{prefix}embed.cat{column}.table")
}

/// Embed a batch into `[n, d, e]` token space (columns in schema order).
pub fn embed(
    tape: &mut Tape,
    params: &TapedParams,
    prefix: &str,
    batch: &Batch,
    schema: &FeatureSchema,
) -> Var {
    assert!(
        batch.columns.len() == schema.columns.len(),
        "batch has {} columns, schema {}",
        batch.columns.len(),
        schema.columns.len()
    );
    let n = batch.n;
    // Numeric columns are embedded in one fused op over an [n, d_num] value
    // matrix; categorical columns are row lookups.
    let numeric_cols: Vec<usize> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, k)| matches!(k, ColumnKind::Numeric))
        .map(|(j, _)| j)
        .collect();
    let numeric_block = if numeric_cols.is_empty() {
        None
    } else {
        let d_num = numeric_cols.len();
        let mut values = vec![0.0; n * d_num];
        for (slot, &j) in numeric_cols.iter().enumerate() {
            let ColumnData::Numeric(col) = &batch.columns[j] else {
                panic!("column {j}: schema says numeric, batch disagrees");
            };
            assert!(col.len() == n, "column {j}: {} values for batch of {n}", col.len());
            for (i, &v) in col.iter().enumerate() {
                values[i * d_num + slot] = v;
            }
        }
        let values = tape.constant(Tensor::new(vec![n, d_num], values));
        let w = params.var(&numeric_weight_name(prefix));
        let b = params.var(&numeric_bias_name(prefix));
        Some(tape.numeric_embed(values, w, b))
    };

    if numeric_cols.len() == schema.columns.len() {
        return numeric_block.expect("all-numeric schema");
    }

    let mut parts = Vec::with_capacity(schema.columns.len());
    let mut numeric_slot = 0usize;
    for (j, kind) in schema.columns.iter().enumerate() {
        match kind {
            ColumnKind::Numeric => {
                let block = numeric_block.expect("numeric block exists");
                parts.push(tape.slice_axis1(block, numeric_slot, 1));
                numeric_slot += 1;
            }
            ColumnKind::Categorical { cardinality } => {
                let ColumnData::Categorical(idx) = &batch.columns[j] else {
                    panic!("column {j}: schema says categorical, batch disagrees");
                };
                assert!(idx.len() == n, "column {j}: {} values for batch of {n}", idx.len());
                for &v in idx {
                    // Index == cardinality is the OOV row.
                    assert!(
                        v <= *cardinality,
                        "column {j}: category index {v} exceeds cardinality {cardinality}"
                    );
                }
                let table = params.var(&table_name(prefix, j));
                let rows = tape.gather_rows(table, Arc::new(idx.clone()));
                let e = tape.value(rows).shape()[1];
                parts.push(tape.reshape(rows, vec![n, 1, e]));
            }
        }
    }
    tape.concat_axis1(&parts)
}

/// Create the embedding parameters for `schema` under `prefix`.
pub fn init_embed_params(
    store: &mut super::params::ParamStore,
    prefix: &str,
    schema: &FeatureSchema,
    e: usize,
    rng: &mut crate::numkit::Rng,
) {
    let bound = 1.0 / (e as f64).sqrt();
    let d_num = schema
        .columns
        .iter()
        .filter(|k| matches!(k, ColumnKind::Numeric))
        .count();
    if d_num > 0 {
        store.insert(
            numeric_weight_name(prefix),
            rng.uniform_tensor(&[d_num, e], -bound, bound),
        );
        store.insert(
            numeric_bias_name(prefix),
            rng.uniform_tensor(&[d_num, e], -bound, bound),
        );
    }
    for (j, kind) in schema.columns.iter().enumerate() {
        if let ColumnKind::Categorical { cardinality } = kind {
            // One extra row for out-of-vocabulary lookups.
            store.insert(
                table_name(prefix, j),
                rng.uniform_tensor(&[cardinality + 1, e], -bound, bound),
            );
        }
    }
}
