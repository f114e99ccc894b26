//! Finite-difference verification of analytic gradients, grouped by
//! parameter name.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::numkit::fd::rel_err;
use crate::numkit::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
    pub max_rel_err: f64,
    pub worst_group: String,
    pub passed: bool,
}

/// Compare analytic gradients (by parameter name) against central finite
/// differences of `loss_value` over every element of every parameter.
pub fn check_param_gradients(
    params: &ParamStore,
    analytic: &HashMap<String, Vec<f64>>,
    mut loss_value: impl FnMut(&ParamStore) -> f64,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    let mut groups = Vec::with_capacity(params.len());
    let mut worst = ("".to_string(), 0.0f64);
    for (name, tensor) in params.iter() {
        let grads = analytic
            .get(name)
            .unwrap_or_else(|| panic!("analytic gradients missing group `{name}`"));
        assert!(
            grads.len() == tensor.len(),
            "group `{name}`: {} gradients for {} elements",
            grads.len(),
            tensor.len()
        );
        let mut group_err = 0.0f64;
        for j in 0..tensor.len() {
            let mut plus = tensor.data().to_vec();
            plus[j] += step;
            let mut minus = tensor.data().to_vec();
            minus[j] -= step;
            let mut probe = params.clone();
            probe.set(name, Tensor::new(tensor.shape().to_vec(), plus));
            let up = loss_value(&probe);
            probe.set(name, Tensor::new(tensor.shape().to_vec(), minus));
            let down = loss_value(&probe);
            let numeric = (up - down) / (2.0 * step);
            group_err = group_err.max(rel_err(grads[j], numeric));
        }
        if group_err > worst.1 {
            worst = (name.to_string(), group_err);
        }
        groups.push(GroupCheck {
            name: name.to_string(),
            max_rel_err: group_err,
        });
    }
    GradCheckReport {
        tolerance,
        max_rel_err: worst.1,
        worst_group: worst.0,
        passed: worst.1 <= tolerance,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::fd::FD_STEP;

    #[test]
    fn quadratic_loss_passes_and_corruption_fails() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]));
        let loss = |p: &ParamStore| p.get("w").data().iter().map(|v| v * v).sum::<f64>();
        let mut analytic = HashMap::new();
        analytic.insert("w".to_string(), vec![1.0, -2.0, 4.0]);
        let report = check_param_gradients(&params, &analytic, loss, FD_STEP, 1e-4);
        assert!(report.passed, "max err {}", report.max_rel_err);

        let mut corrupted = analytic.clone();
        corrupted.get_mut("w").unwrap()[1] += 0.05;
        let report = check_param_gradients(&params, &corrupted, loss, FD_STEP, 1e-4);
        assert!(!report.passed);
        assert_eq!(report.worst_group, "w");
    }
}
