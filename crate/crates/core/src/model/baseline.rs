//! Single-task and shared-bottom MLP baselines.
//!
//! Both embed features with the same affine/lookup embedding as the
//! transformer, flatten to `n x (d * e)`, and run a GELU MLP trunk. The
//! single-task variant owns one full stack per task (no shared parameters
//! at all); the shared-bottom variant shares the embedding and trunk and
//! branches into per-task linear heads.

use super::attention::DropoutState;
use super::config::{Batch, FeatureSchema, ModelConfig, TaskSpec};
use super::embed::{embed, init_embed_params};
use super::params::{ParamStore, TapedParams};
use crate::numkit::{Rng, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineVariant {
    Stl,
    SharedBottom,
}

pub struct MlpBaseline {
    pub variant: BaselineVariant,
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub tasks: Vec<TaskSpec>,
}

impl MlpBaseline {
    pub fn new(
        variant: BaselineVariant,
        config: ModelConfig,
        schema: FeatureSchema,
        tasks: Vec<TaskSpec>,
    ) -> Result<Self> {
        schema.validate()?;
        if tasks.is_empty() {
            return Err(Error::config("/tasks", "need at least one task"));
        }
        for task in &tasks {
            task.validate()?;
        }
        if config.e == 0 || config.trunk.iter().any(|&w| w == 0) {
            return Err(Error::config("/model", "all dimensions must be >= 1"));
        }
        Ok(MlpBaseline {
            variant,
            config,
            schema,
            tasks,
        })
    }

    fn flat_width(&self) -> usize {
        self.schema.feature_count() * self.config.e
    }

    fn init_trunk(&self, store: &mut ParamStore, prefix: &str, rng: &mut Rng) -> usize {
        let mut width = self.flat_width();
        for (layer, &out) in self.config.trunk.iter().enumerate() {
            let bound = 1.0 / (width as f64).sqrt();
            store.insert(
                format!("{prefix}mlp{layer}.w"),
                rng.uniform_tensor(&[width, out], -bound, bound),
            );
            store.insert(format!("{prefix}mlp{layer}.b"), Tensor::zeros(vec![out]));
            width = out;
        }
        width
    }

    fn init_head(store: &mut ParamStore, prefix: &str, width: usize, out: usize, rng: &mut Rng) {
        let bound = 1.0 / (width as f64).sqrt();
        store.insert(
            format!("{prefix}head.w"),
            rng.uniform_tensor(&[width, out], -bound, bound),
        );
        store.insert(format!("{prefix}head.b"), Tensor::zeros(vec![out]));
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamStore {
        let mut store = ParamStore::new();
        match self.variant {
            BaselineVariant::Stl => {
                for (i, task) in self.tasks.iter().enumerate() {
                    let prefix = format!("task{i}.");
                    init_embed_params(&mut store, &prefix, &self.schema, self.config.e, rng);
                    let width = self.init_trunk(&mut store, &prefix, rng);
                    Self::init_head(&mut store, &prefix, width, task.output_dim(), rng);
                }
            }
            BaselineVariant::SharedBottom => {
                init_embed_params(&mut store, "", &self.schema, self.config.e, rng);
                let width = self.init_trunk(&mut store, "", rng);
                for task in &self.tasks {
                    Self::init_head(
                        &mut store,
                        &format!("head.{}.", task.name),
                        width,
                        task.output_dim(),
                        rng,
                    );
                }
            }
        }
        store
    }

    fn trunk_forward(
        &self,
        tape: &mut Tape,
        params: &TapedParams,
        prefix: &str,
        batch: &Batch,
        dropout: &mut DropoutState,
    ) -> Var {
        let n = batch.n;
        let tokens = embed(tape, params, prefix, batch, &self.schema);
        let mut h = tape.reshape(tokens, vec![n, self.flat_width()]);
        for layer in 0..self.config.trunk.len() {
            let w = params.var(&format!("{prefix}mlp{layer}.w"));
            let b = params.var(&format!("{prefix}mlp{layer}.b"));
            h = tape.matmul(h, w);
            h = tape.add_bias_last(h, b);
            h = tape.gelu(h);
            h = dropout.on_ffn(tape, h);
        }
        h
    }

    fn head_forward(tape: &mut Tape, params: &TapedParams, prefix: &str, h: Var) -> Var {
        let w = params.var(&format!("{prefix}head.w"));
        let b = params.var(&format!("{prefix}head.b"));
        let out = tape.matmul(h, w);
        tape.add_bias_last(out, b)
    }

    /// Per-task predictions in task order.
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
        match self.variant {
            BaselineVariant::Stl => (0..self.tasks.len())
                .map(|i| {
                    let prefix = format!("task{i}.");
                    let h = self.trunk_forward(tape, params, &prefix, batch, dropout);
                    Self::head_forward(tape, params, &prefix, h)
                })
                .collect(),
            BaselineVariant::SharedBottom => {
                let h = self.trunk_forward(tape, params, "", batch, dropout);
                self.tasks
                    .iter()
                    .map(|task| Self::head_forward(tape, params, &format!("head.{}.", task.name), h))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ColumnData;

    fn small_config() -> ModelConfig {
        ModelConfig {
            e: 4,
            trunk: vec![8, 4],
            ..ModelConfig::default()
        }
    }

    fn numeric_batch(n: usize, d: usize, seed: u64) -> Batch {
        let mut rng = Rng::new(seed);
        Batch {
            n,
            columns: (0..d)
                .map(|_| ColumnData::Numeric(rng.normal_vec(n)))
                .collect(),
        }
    }

    fn run(model: &MlpBaseline, params: &ParamStore, batch: &Batch) -> Vec<Tensor> {
        let mut tape = Tape::new();
        let bound = TapedParams::bind(&mut tape, params);
        let preds = model.forward(&mut tape, &bound, batch, &mut DropoutState::off());
        preds.iter().map(|&p| tape.value(p).clone()).collect()
    }

    #[test]
    fn output_shapes() {
        let model = MlpBaseline::new(
            BaselineVariant::SharedBottom,
            small_config(),
            FeatureSchema::numeric(3),
            vec![
                TaskSpec::binary("a"),
                TaskSpec::multiclass("b", 5),
                TaskSpec::regression("c"),
            ],
        )
        .unwrap();
        let mut rng = Rng::new(1);
        let params = model.init_params(&mut rng);
        let preds = run(&model, &params, &numeric_batch(6, 3, 2));
        assert_eq!(preds[0].shape(), &[6, 1]);
        assert_eq!(preds[1].shape(), &[6, 5]);
        assert_eq!(preds[2].shape(), &[6, 1]);
    }

    #[test]
    fn single_task_stl_equals_shared_bottom() {
        // With one task the two variants have the same structure; the same
        // init stream must give identical predictions.
        let schema = FeatureSchema::numeric(3);
        let tasks = vec![TaskSpec::regression("only")];
        let stl = MlpBaseline::new(
            BaselineVariant::Stl,
            small_config(),
            schema.clone(),
            tasks.clone(),
        )
        .unwrap();
        let shared = MlpBaseline::new(BaselineVariant::SharedBottom, small_config(), schema, tasks)
            .unwrap();
        let params_stl = stl.init_params(&mut Rng::new(42));
        let params_shared = shared.init_params(&mut Rng::new(42));
        let batch = numeric_batch(5, 3, 3);
        assert_eq!(run(&stl, &params_stl, &batch), run(&shared, &params_shared, &batch));
    }

    #[test]
    fn stl_parameters_are_isolated_across_tasks() {
        let model = MlpBaseline::new(
            BaselineVariant::Stl,
            small_config(),
            FeatureSchema::numeric(3),
            vec![TaskSpec::regression("t0"), TaskSpec::regression("t1")],
        )
        .unwrap();
        let mut rng = Rng::new(4);
        let params = model.init_params(&mut rng);
        let batch = numeric_batch(4, 3, 5);
        let base = run(&model, &params, &batch);

        // Perturb every task-1 parameter.
        let mut poked = params.clone();
        let names: Vec<String> = params
            .names()
            .filter(|n| n.starts_with("task1."))
            .map(String::from)
            .collect();
        assert!(!names.is_empty());
        for name in names {
            let t = params.get(&name);
            let bumped: Vec<f64> = t.data().iter().map(|v| v + 0.37).collect();
            poked.set(&name, Tensor::new(t.shape().to_vec(), bumped));
        }
        let after = run(&model, &poked, &batch);
        assert_eq!(base[0], after[0], "task-0 predictions changed");
        assert_ne!(base[1], after[1], "task-1 predictions should change");
    }

    #[test]
    fn shared_bottom_trunk_is_actually_shared() {
        let model = MlpBaseline::new(
            BaselineVariant::SharedBottom,
            small_config(),
            FeatureSchema::numeric(3),
            vec![TaskSpec::regression("t0"), TaskSpec::regression("t1")],
        )
        .unwrap();
        let mut rng = Rng::new(6);
        let params = model.init_params(&mut rng);
        let batch = numeric_batch(4, 3, 7);
        let base = run(&model, &params, &batch);
        // Trunk perturbation moves every task.
        let mut poked = params.clone();
        let t = params.get("mlp0.w");
        let bumped: Vec<f64> = t.data().iter().map(|v| v + 0.1).collect();
        poked.set("mlp0.w", Tensor::new(t.shape().to_vec(), bumped));
        let after = run(&model, &poked, &batch);
        assert_ne!(base[0], after[0]);
        assert_ne!(base[1], after[1]);
    }

    #[test]
    fn baseline_gradients_match_finite_differences() {
        use crate::numkit::fd::{central_diff, max_rel_err, FD_STEP, FD_TOL};
        for variant in [BaselineVariant::Stl, BaselineVariant::SharedBottom] {
            let model = MlpBaseline::new(
                variant,
                ModelConfig {
                    e: 3,
                    trunk: vec![4],
                    ..ModelConfig::default()
                },
                FeatureSchema::numeric(2),
                vec![TaskSpec::regression("r"), TaskSpec::binary("c")],
            )
            .unwrap();
            let mut rng = Rng::new(8);
            let params = model.init_params(&mut rng);
            let batch = numeric_batch(3, 2, 9);

            let loss_of = |store: &ParamStore| -> f64 {
                let mut tape = Tape::new();
                let bound = TapedParams::bind(&mut tape, store);
                let preds = model.forward(&mut tape, &bound, &batch, &mut DropoutState::off());
                let g0 = tape.gelu(preds[0]);
                let s0 = tape.sum_all(g0);
                let s1 = tape.sum_all(preds[1]);
                let loss = tape.add(s0, s1);
                tape.value(loss).item()
            };

            let mut tape = Tape::new();
            let bound = TapedParams::bind(&mut tape, &params);
            let binding: Vec<(String, Var)> =
                bound.iter().map(|(n, v)| (n.to_string(), v)).collect();
            let preds = model.forward(&mut tape, &bound, &batch, &mut DropoutState::off());
            let g0 = tape.gelu(preds[0]);
            let s0 = tape.sum_all(g0);
            let s1 = tape.sum_all(preds[1]);
            let loss = tape.add(s0, s1);
            let grads = tape.backward(loss);

            for (name, var) in &binding {
                let analytic = grads
                    .get(*var)
                    .unwrap_or_else(|| panic!("no grad for {name}"))
                    .to_vec();
                let base = params.get(name).clone();
                let fd = central_diff(
                    |at| {
                        let mut probe = params.clone();
                        probe.set(name, at[0].clone());
                        loss_of(&probe)
                    },
                    &[base],
                    FD_STEP,
                );
                let err = max_rel_err(&analytic, fd[0].data());
                assert!(err <= FD_TOL, "{variant:?} {name}: rel err {err:e}");
            }
        }
    }
}
