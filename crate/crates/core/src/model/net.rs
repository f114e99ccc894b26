//! The full multitask transformer: embeddings, task tokens, encoder blocks,
//! and per-task heads.

use super::attention::DropoutState;
use super::config::{Batch, FeatureSchema, ModelConfig, TaskSpec};
use super::embed::{embed, init_embed_params};
use super::encoder::{encoder_block, init_block_params};
use super::mask::expand_mask;
use super::params::{ParamStore, TapedParams};
use crate::numkit::{Rng, Tape, Tensor, Var};
use crate::{Error, Result};

pub struct MultiTabNet {
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub tasks: Vec<TaskSpec>,
}

impl MultiTabNet {
    pub fn new(config: ModelConfig, schema: FeatureSchema, tasks: Vec<TaskSpec>) -> Result<Self> {
        schema.validate()?;
        if tasks.is_empty() {
            return Err(Error::config("/tasks", "need at least one task"));
        }
        for task in &tasks {
            task.validate()?;
        }
        let mut names: Vec<&str> = tasks.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != tasks.len() {
            return Err(Error::config("/tasks", "task names must be unique"));
        }
        let net = MultiTabNet {
            config,
            schema,
            tasks,
        };
        net.config
            .validate(net.schema.feature_count(), net.token_count())?;
        Ok(net)
    }

    /// Task tokens appended to the feature sequence: one per task, or a
    /// single shared token.
    pub fn token_count(&self) -> usize {
        if self.config.single_token {
            1
        } else {
            self.tasks.len()
        }
    }

    fn flat_width(&self) -> usize {
        (self.schema.feature_count() + self.token_count()) * self.config.e
    }

    /// The additive inter-feature attention mask this model uses.
    pub fn attention_mask(&self) -> Tensor {
        expand_mask(
            self.config.mask,
            self.schema.feature_count(),
            self.token_count(),
        )
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamStore {
        let mut store = ParamStore::new();
        let e = self.config.e;
        init_embed_params(&mut store, "", &self.schema, e, rng);
        // Small-variance tokens keep early attention away from saturation.
        let tokens = rng.normal_tensor(&[self.token_count(), e]).scale(0.02);
        store.insert("task_tokens", tokens);
        for block in 0..self.config.n_blocks {
            init_block_params(
                &mut store,
                &format!("block{block}."),
                &self.config,
                self.flat_width(),
                rng,
            );
        }
        let hh = self.config.head_hidden;
        let b_e = 1.0 / (e as f64).sqrt();
        let b_h = 1.0 / (hh as f64).sqrt();
        for task in &self.tasks {
            let out = task.output_dim();
            store.insert(
                format!("head.{}.w1", task.name),
                rng.uniform_tensor(&[e, hh], -b_e, b_e),
            );
            store.insert(format!("head.{}.b1", task.name), Tensor::zeros(vec![hh]));
            store.insert(
                format!("head.{}.w2", task.name),
                rng.uniform_tensor(&[hh, out], -b_h, b_h),
            );
            store.insert(format!("head.{}.b2", task.name), Tensor::zeros(vec![out]));
        }
        store
    }

    /// Per-task prediction tensors (`[n, 1]` logits/values, `[n, k]` for
    /// multiclass), in task order. Bind the parameter store to the tape
    /// with [`TapedParams::bind`] first.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &TapedParams,
        batch: &Batch,
        dropout: &mut DropoutState,
    ) -> Vec<Var> {
        if let Err(e) = batch.conforms(&self.schema) {
            panic!("batch does not conform to schema: {e}");
        }
        let n = batch.n;
        let d = self.schema.feature_count();

        let features = embed(tape, params, "", batch, &self.schema);
        let tokens = params.var("task_tokens");
        let tokens = tape.broadcast_rows(tokens, n);
        let mut x = tape.concat_axis1(&[features, tokens]);

        let mask = tape.constant(self.attention_mask());
        for block in 0..self.config.n_blocks {
            x = encoder_block(
                tape,
                params,
                &format!("block{block}."),
                x,
                mask,
                &self.config,
                dropout,
            );
        }

        let e = self.config.e;
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, task)| {
                let token_idx = if self.config.single_token { d } else { d + i };
                let tok = tape.slice_axis1(x, token_idx, 1);
                let tok = tape.reshape(tok, vec![n, e]);
                let w1 = params.var(&format!("head.{}.w1", task.name));
                let b1 = params.var(&format!("head.{}.b1", task.name));
                let w2 = params.var(&format!("head.{}.w2", task.name));
                let b2 = params.var(&format!("head.{}.b2", task.name));
                let h = tape.matmul(tok, w1);
                let h = tape.add_bias_last(h, b1);
                let h = tape.gelu(h);
                let out = tape.matmul(h, w2);
                tape.add_bias_last(out, b2)
            })
            .collect()
    }
}
