//! Adam with L2-coupled weight decay, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::model::ParamStore;
use crate::numkit::Tensor;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter, plus the step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    m: ParamStore,
    v: ParamStore,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let mut m = ParamStore::new();
        let mut v = ParamStore::new();
        for (name, tensor) in params.iter() {
            m.insert(name, Tensor::zeros(tensor.shape().to_vec()));
            v.insert(name, Tensor::zeros(tensor.shape().to_vec()));
        }
        AdamState {
            step: 0,
            m,
            v,
        }
    }
}

/// One Adam update. `grads` is aligned with the parameter store's order;
/// a `None` entry means no gradient flowed to that parameter this step
/// (weight decay still applies).
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Option<Vec<f64>>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    let names: Vec<String> = params.names().map(String::from).collect();
    assert!(
        grads.len() == names.len(),
        "{} gradient slots for {} parameters",
        grads.len(),
        names.len()
    );
    state.step += 1;
    let t = state.step;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);
    for (slot, name) in names.iter().enumerate() {
        let theta = params.get(name);
        let mut new_theta = theta.data().to_vec();
        let mut m = state.m.get(name).data().to_vec();
        let mut v = state.v.get(name).data().to_vec();
        let zero;
        let grad: &[f64] = match &grads[slot] {
            Some(g) => {
                assert!(g.len() == new_theta.len(), "gradient shape mismatch for `{name}`");
                g
            }
            None => {
                zero = vec![0.0; new_theta.len()];
                &zero
            }
        };
        for j in 0..new_theta.len() {
            // Decay folds into the gradient before the moment updates.
            let g = grad[j] + cfg.weight_decay * new_theta[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            new_theta[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        let shape = theta.shape().to_vec();
        params.set(name, Tensor::new(shape.clone(), new_theta));
        state.m.set(name, Tensor::new(shape.clone(), m));
        state.v.set(name, Tensor::new(shape, v));
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm when clipping fired.
pub fn clip_global_norm(grads: &mut [Option<Vec<f64>>], max_norm: f64) -> Option<f64> {
    let mut sq = 0.0;
    for g in grads.iter().flatten() {
        for v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm <= max_norm || norm == 0.0 {
        return None;
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut().flatten() {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Some(norm)
}
