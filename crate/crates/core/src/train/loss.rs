//! Per-task losses and their weighted aggregation.
//!
//! Binary heads train with sigmoid cross-entropy from logits, multiclass
//! heads with softmax cross-entropy, regression heads with MSE; every loss
//! is a batch mean.

use std::sync::Arc;

use crate::model::{TaskKind, TaskSpec};
use crate::numkit::{Tape, Var};
use crate::{Error, Result};

/// Targets for one task's batch.
#[derive(Clone, Debug)]
pub enum TaskTargets {
    /// Regression values or 0/1 binary labels.
    Values(Arc<Vec<f64>>),
    /// Multiclass labels in `0..k`.
    Classes(Arc<Vec<usize>>),
}

impl TaskTargets {
    pub fn len(&self) -> usize {
        match self {
            TaskTargets::Values(v) => v.len(),
            TaskTargets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Batch-mean loss of one task's predictions. Non-finite predictions abort
/// with a numeric-failure error naming the task.
pub fn task_loss(tape: &mut Tape, pred: Var, spec: &TaskSpec, targets: &TaskTargets) -> Result<Var> {
    let value = tape.value(pred);
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite predictions for task `{}`",
            spec.name
        )));
    }
    let n = value.shape()[0];
    if targets.len() != n {
        return Err(Error::Contract(format!(
            "task `{}`: {} predictions vs {} targets",
            spec.name,
            n,
            targets.len()
        )));
    }
    let loss = match (&spec.kind, targets) {
        (TaskKind::Binary, TaskTargets::Values(t)) => {
            if let Some(&bad) = t.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(Error::Contract(format!(
                    "task `{}`: binary target {bad} is not 0/1",
                    spec.name
                )));
            }
            let flat = tape.reshape(pred, vec![n]);
            tape.bce_with_logits(flat, Arc::clone(t))
        }
        (TaskKind::Multiclass { classes }, TaskTargets::Classes(t)) => {
            if let Some(&bad) = t.iter().find(|c| **c >= *classes) {
                return Err(Error::Contract(format!(
                    "task `{}`: class label {bad} out of range {classes}",
                    spec.name
                )));
            }
            tape.softmax_cross_entropy(pred, Arc::clone(t))
        }
        (TaskKind::Regression, TaskTargets::Values(t)) => {
            let flat = tape.reshape(pred, vec![n]);
            tape.mse_loss(flat, Arc::clone(t))
        }
        _ => {
            return Err(Error::Contract(format!(
                "task `{}`: target kind does not match task kind",
                spec.name
            )))
        }
    };
    Ok(loss)
}

/// Weighted sum of per-task scalar losses.
pub fn aggregate_losses(tape: &mut Tape, losses: &[Var], weights: &[f64]) -> Result<Var> {
    if losses.is_empty() || losses.len() != weights.len() {
        return Err(Error::Contract(format!(
            "{} losses vs {} weights",
            losses.len(),
            weights.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| **w < 0.0) {
        return Err(Error::Contract(format!("negative task loss weight {w}")));
    }
    let mut total = tape.scale(losses[0], weights[0]);
    for (loss, &w) in losses.iter().zip(weights).skip(1) {
        let scaled = tape.scale(*loss, w);
        total = tape.add(total, scaled);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::fd::{central_diff, FD_STEP};
    use crate::numkit::{Rng, Tensor};

    #[test]
    fn binary_logit_zero_is_ln_two() {
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::new(vec![2, 1], vec![0.0, 0.0]));
        let spec = TaskSpec::binary("b");
        let targets = TaskTargets::Values(Arc::new(vec![0.0, 1.0]));
        let loss = task_loss(&mut tape, pred, &spec, &targets).unwrap();
        assert!((tape.value(loss).item() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_multiclass_logits_cost_ln_k() {
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::zeros(vec![3, 4]));
        let spec = TaskSpec::multiclass("m", 4);
        let targets = TaskTargets::Classes(Arc::new(vec![0, 3, 2]));
        let loss = task_loss(&mut tape, pred, &spec, &targets).unwrap();
        assert!((tape.value(loss).item() - (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_target() {
        let mut rng = Rng::new(1);
        let logits = rng.normal_tensor(&[5, 1]);
        let targets: Vec<f64> = (0..5).map(|i| (i % 2) as f64).collect();
        let spec = TaskSpec::binary("b");

        let mut tape = Tape::new();
        let z = tape.leaf(&logits);
        let loss = task_loss(
            &mut tape,
            z,
            &spec,
            &TaskTargets::Values(Arc::new(targets.clone())),
        )
        .unwrap();
        let grads = tape.backward(loss);
        let analytic = grads.get(z).unwrap();

        // Closed form: (sigmoid(z) - y) / n.
        for (j, (&zv, &y)) in logits.data().iter().zip(&targets).enumerate() {
            let sig = 1.0 / (1.0 + (-zv).exp());
            let expect = (sig - y) / 5.0;
            assert!((analytic[j] - expect).abs() < 1e-12);
        }

        // And finite differences agree.
        let fd = central_diff(
            |at| {
                let mut t = Tape::new();
                let z = t.leaf(&at[0]);
                let loss = task_loss(
                    &mut t,
                    z,
                    &spec,
                    &TaskTargets::Values(Arc::new(targets.clone())),
                )
                .unwrap();
                t.value(loss).item()
            },
            &[logits.clone()],
            FD_STEP,
        );
        for (a, b) in analytic.iter().zip(fd[0].data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_predictions_abort() {
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::new(vec![1, 1], vec![f64::NAN]));
        let spec = TaskSpec::regression("r");
        let err = task_loss(
            &mut tape,
            pred,
            &spec,
            &TaskTargets::Values(Arc::new(vec![0.0])),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains('r'));
    }

    #[test]
    fn aggregate_is_weighted_sum() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1.0));
        let b = tape.constant(Tensor::scalar(2.0));
        let c = tape.constant(Tensor::scalar(3.0));
        let total = aggregate_losses(&mut tape, &[a, b, c], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(tape.value(total).item(), 6.0);
    }

    #[test]
    fn zero_weight_kills_that_tasks_gradient() {
        let mut tape = Tape::new();
        let w0 = tape.leaf(&Tensor::new(vec![2], vec![0.4, -0.2]));
        let w1 = tape.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]));
        let l0 = tape.mse_loss(w0, Arc::new(vec![1.0, 1.0]));
        let l1 = tape.mse_loss(w1, Arc::new(vec![0.0, 0.0]));
        let total = aggregate_losses(&mut tape, &[l0, l1], &[1.0, 0.0]).unwrap();
        let grads = tape.backward(total);
        assert!(grads.get(w0).unwrap().iter().any(|g| *g != 0.0));
        assert!(grads.get(w1).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn doubling_a_weight_doubles_the_loss() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(0.7));
        let b = tape.constant(Tensor::scalar(0.1));
        let one = aggregate_losses(&mut tape, &[a, b], &[1.0, 0.0]).unwrap();
        let two = aggregate_losses(&mut tape, &[a, b], &[2.0, 0.0]).unwrap();
        assert_eq!(tape.value(two).item(), 2.0 * tape.value(one).item());
    }

    #[test]
    fn negative_weight_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1.0));
        assert!(aggregate_losses(&mut tape, &[a], &[-0.1]).is_err());
    }
}
