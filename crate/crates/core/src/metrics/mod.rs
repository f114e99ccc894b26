//! Evaluation metrics: binary/multiclass AUC, explained variance, MSE,
//! Pearson correlation, and the multitask gain over a single-task baseline.
//!
//! All functions are pure. AUC uses the rank-based Mann-Whitney estimator
//! with midrank tie handling; multiclass AUC is macro-averaged one-vs-rest.
//! Metric values are raw fractions internally; the multitask gain is
//! expressed in percent, matching how results tables are usually read.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Auc,
    Ev,
    Mse,
}

impl MetricKind {
    pub fn lower_is_better(self) -> bool {
        matches!(self, MetricKind::Mse)
    }
}

/// One task's evaluation outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub metric: MetricKind,
    pub value: f64,
    pub lower_is_better: bool,
}

impl TaskResult {
    pub fn new(task: impl Into<String>, metric: MetricKind, value: f64) -> Self {
        TaskResult {
            task: task.into(),
            metric,
            value,
            lower_is_better: metric.lower_is_better(),
        }
    }
}

/// Average signed relative improvement over a baseline, in percent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultitaskGain {
    pub delta_m_percent: f64,
    pub per_task_percent: Vec<PerTaskDelta>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerTaskDelta {
    pub task: String,
    pub delta_percent: f64,
}

fn undefined(message: impl Into<String>) -> Error {
    Error::UndefinedMetric {
        task: String::new(),
        message: message.into(),
    }
}

impl Error {
    /// Attach a task name to an undefined-metric error bubbling out of a
    /// bare metric function.
    pub fn with_task(mut self, name: &str) -> Error {
        if let Error::UndefinedMetric { task, .. } = &mut self {
            if task.is_empty() {
                *task = name.to_string();
            }
        }
        self
    }
}

/// Midranks of `scores` (average rank across ties), 1-based.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j share the same score; ranks are 1-based.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the Mann-Whitney statistic; ties count 1/2.
pub fn auc_binary(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut pos = 0usize;
    for &y in labels {
        if y == 1.0 {
            pos += 1;
        } else if y != 0.0 {
            return Err(Error::Contract(format!("auc labels must be 0 or 1, got {y}")));
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(undefined("both classes must be present"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("auc scores contain NaN".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1.0)
        .map(|(r, _)| r)
        .sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Macro-averaged one-vs-rest AUC over the classes present in `labels`.
pub fn auc_multiclass(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "auc: {} score rows vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let k = scores.first().map_or(0, Vec::len);
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(undefined("fewer than 2 classes present"));
    }
    if let Some(&max) = present.last() {
        if max >= k {
            return Err(Error::Contract(format!(
                "label {max} out of range for {k} score columns"
            )));
        }
    }
    let mut total = 0.0;
    for &class in &present {
        let class_scores: Vec<f64> = scores.iter().map(|row| row[class]).collect();
        let class_labels: Vec<f64> = labels
            .iter()
            .map(|&y| if y == class { 1.0 } else { 0.0 })
            .collect();
        total += auc_binary(&class_scores, &class_labels)?;
    }
    Ok(total / present.len() as f64)
}

/// `1 - Var(target - pred) / Var(target)` with population variances.
pub fn explained_variance(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() < 2 {
        return Err(Error::Contract(format!(
            "explained_variance needs two equal-length samples, got {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let var_t = population_variance(target);
    if var_t == 0.0 {
        return Err(undefined("target variance is zero"));
    }
    let resid: Vec<f64> = target.iter().zip(pred).map(|(t, p)| t - p).collect();
    Ok(1.0 - population_variance(&resid) / var_t)
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "mse needs non-empty equal-length inputs, got {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Product-moment correlation in [-1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!(
            "pearson needs two equal-length samples, got {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(undefined("zero variance"));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Multitask gain: mean over tasks of the signed relative improvement of
/// `method` over `baseline`, in percent. Sign flips for lower-is-better
/// metrics.
pub fn multitask_gain(method: &[TaskResult], baseline: &[TaskResult]) -> Result<MultitaskGain> {
    if method.len() != baseline.len() {
        return Err(Error::Contract(format!(
            "multitask_gain: {} method tasks vs {} baseline tasks",
            method.len(),
            baseline.len()
        )));
    }
    if method.is_empty() {
        return Err(Error::Contract("multitask_gain over zero tasks".into()));
    }
    let mut per_task = Vec::with_capacity(method.len());
    let mut total = 0.0;
    for (m, b) in method.iter().zip(baseline) {
        if m.task != b.task {
            return Err(Error::Contract(format!(
                "task mismatch: method `{}` vs baseline `{}`",
                m.task, b.task
            )));
        }
        if m.lower_is_better != b.lower_is_better {
            return Err(Error::Contract(format!(
                "task `{}` disagrees on metric direction",
                m.task
            )));
        }
        if b.value == 0.0 {
            return Err(Error::Numeric(format!(
                "multitask_gain division by zero: baseline metric for task `{}` is 0",
                m.task
            )));
        }
        let sign = if m.lower_is_better { -1.0 } else { 1.0 };
        let delta = sign * (m.value - b.value) / b.value * 100.0;
        total += delta;
        per_task.push(PerTaskDelta {
            task: m.task.clone(),
            delta_percent: delta,
        });
    }
    Ok(MultitaskGain {
        delta_m_percent: total / method.len() as f64,
        per_task_percent: per_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    /// O(n^2) pair-counting oracle.
    fn auc_pairs(scores: &[f64], labels: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &sp) in scores.iter().enumerate() {
            if labels[i] != 1.0 {
                continue;
            }
            for (j, &sn) in scores.iter().enumerate() {
                if labels[j] != 0.0 {
                    continue;
                }
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_perfect_separation() {
        let auc = auc_binary(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let auc = auc_binary(&[0.5; 6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_worked_example() {
        // Pairs: (.35 vs .1) win, (.35 vs .4) loss, (.8 vs .1) win, (.8 vs .4) win.
        let auc = auc_binary(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_matches_pair_oracle_with_ties() {
        let mut rng = Rng::new(404);
        for _ in 0..100 {
            let n = 2 + rng.below(48);
            // Coarse quantization forces ties.
            let scores: Vec<f64> = (0..n).map(|_| (rng.uniform() * 8.0).floor() / 8.0).collect();
            let mut labels: Vec<f64> = (0..n).map(|_| (rng.below(2)) as f64).collect();
            labels[0] = 0.0;
            labels[n - 1] = 1.0;
            let fast = auc_binary(&scores, &labels).unwrap();
            let slow = auc_pairs(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_single_class_is_undefined() {
        let err = auc_binary(&[0.1, 0.9], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric { .. }));
    }

    #[test]
    fn auc_monotone_transform_invariance() {
        let mut rng = Rng::new(11);
        let scores: Vec<f64> = (0..40).map(|_| rng.uniform()).collect();
        let labels: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        let base = auc_binary(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
        let after = auc_binary(&warped, &labels).unwrap();
        assert!((base - after).abs() < 1e-12);
    }

    #[test]
    fn auc_complement_sums_to_one_without_ties() {
        let mut rng = Rng::new(12);
        let scores: Vec<f64> = (0..31).map(|_| rng.normal()).collect();
        let labels: Vec<f64> = (0..31).map(|i| ((i * 7) % 2) as f64).collect();
        let fwd = auc_binary(&scores, &labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let rev = auc_binary(&neg, &labels).unwrap();
        assert!((fwd + rev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multiclass_binary_reduction() {
        // Softmax-style rows (columns sum to 1) reduce to binary AUC on the
        // class-1 column.
        let mut rng = Rng::new(13);
        let probs: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let p = rng.uniform();
                vec![1.0 - p, p]
            })
            .collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let multi = auc_multiclass(&probs, &labels).unwrap();
        let col1: Vec<f64> = probs.iter().map(|r| r[1]).collect();
        let lab1: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
        let binary = auc_binary(&col1, &lab1).unwrap();
        assert!((multi - binary).abs() < 1e-12);
    }

    #[test]
    fn multiclass_perfect_one_hot() {
        let scores = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ];
        let labels = vec![0, 1, 2, 0];
        assert_eq!(auc_multiclass(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn multiclass_matches_per_class_pair_counting() {
        let mut rng = Rng::new(14);
        let k = 3;
        let scores: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..k).map(|_| (rng.uniform() * 4.0).floor() / 4.0).collect())
            .collect();
        let labels: Vec<usize> = (0..40).map(|_| rng.below(k)).collect();
        let fast = auc_multiclass(&scores, &labels).unwrap();
        let mut present: Vec<usize> = labels.clone();
        present.sort_unstable();
        present.dedup();
        let mut slow = 0.0;
        for &c in &present {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<f64> = labels.iter().map(|&y| (y == c) as u8 as f64).collect();
            slow += auc_pairs(&s, &l);
        }
        slow /= present.len() as f64;
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn multiclass_needs_two_classes() {
        let scores = vec![vec![0.2, 0.8], vec![0.3, 0.7]];
        let err = auc_multiclass(&scores, &[1, 1]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric { .. }));
    }

    #[test]
    fn ev_exact_fit_and_constant_predictor() {
        let target = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(explained_variance(&target, &target).unwrap(), 1.0);
        let mean = vec![2.5; 4];
        let ev = explained_variance(&mean, &target).unwrap();
        assert!(ev.abs() < 1e-12);
    }

    #[test]
    fn ev_ignores_bias_mse_does_not() {
        let target = vec![1.0, 2.0, 3.0, 4.0];
        let shifted: Vec<f64> = target.iter().map(|v| v + 5.0).collect();
        assert!((explained_variance(&shifted, &target).unwrap() - 1.0).abs() < 1e-12);
        assert!((mse(&shifted, &target).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn ev_zero_target_variance_is_undefined() {
        let err = explained_variance(&[1.0, 2.0], &[3.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric { .. }));
    }

    #[test]
    fn mse_examples() {
        let t = vec![1.0, 2.0, 3.0];
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        assert_eq!(mse(&p, &t).unwrap(), 1.0);
        assert!(matches!(mse(&[], &[]).unwrap_err(), Error::Contract(_)));
    }

    #[test]
    fn mse_matches_direct_sum() {
        let mut rng = Rng::new(15);
        let a: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let direct: f64 =
            a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 100.0;
        assert!((mse(&a, &b).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn pearson_identity_and_negation() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_matches_two_pass_oracle() {
        let mut rng = Rng::new(16);
        let a: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let got = pearson(&a, &b).unwrap();
        // Oracle: standardize both, then average the products.
        let ma = a.iter().sum::<f64>() / 1000.0;
        let mb = b.iter().sum::<f64>() / 1000.0;
        let sa = (a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / 1000.0).sqrt();
        let sb = (b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / 1000.0).sqrt();
        let oracle: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) / sa * ((y - mb) / sb))
            .sum::<f64>()
            / 1000.0;
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_exactness() {
        let mut rng = Rng::new(17);
        let a: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let up: Vec<f64> = a.iter().map(|v| 2.5 * v + 1.0).collect();
        let down: Vec<f64> = a.iter().map(|v| -0.7 * v + 3.0).collect();
        assert!((pearson(&a, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &down).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_zero_when_equal() {
        let res = vec![
            TaskResult::new("a", MetricKind::Auc, 0.8),
            TaskResult::new("b", MetricKind::Ev, 0.5),
        ];
        let gain = multitask_gain(&res, &res).unwrap();
        assert_eq!(gain.delta_m_percent, 0.0);
    }

    #[test]
    fn gain_matches_published_two_task_example() {
        let baseline = vec![
            TaskResult::new("click", MetricKind::Auc, 72.07),
            TaskResult::new("conv", MetricKind::Auc, 85.67),
        ];
        let method = vec![
            TaskResult::new("click", MetricKind::Auc, 72.57),
            TaskResult::new("conv", MetricKind::Auc, 86.02),
        ];
        let gain = multitask_gain(&method, &baseline).unwrap();
        assert!((gain.delta_m_percent - 0.5512).abs() < 1e-4, "{}", gain.delta_m_percent);
    }

    #[test]
    fn gain_sign_flips_for_lower_is_better() {
        let baseline = vec![TaskResult::new("reg", MetricKind::Mse, 1.0)];
        let method = vec![TaskResult::new("reg", MetricKind::Mse, 0.5)];
        let gain = multitask_gain(&method, &baseline).unwrap();
        assert!((gain.delta_m_percent - 50.0).abs() < 1e-12);
    }

    #[test]
    fn gain_is_mean_of_per_task_deltas() {
        let baseline = vec![
            TaskResult::new("a", MetricKind::Auc, 0.7),
            TaskResult::new("b", MetricKind::Ev, 0.4),
            TaskResult::new("c", MetricKind::Mse, 2.0),
        ];
        let method = vec![
            TaskResult::new("a", MetricKind::Auc, 0.75),
            TaskResult::new("b", MetricKind::Ev, 0.38),
            TaskResult::new("c", MetricKind::Mse, 1.6),
        ];
        let gain = multitask_gain(&method, &baseline).unwrap();
        let mean: f64 = gain
            .per_task_percent
            .iter()
            .map(|d| d.delta_percent)
            .sum::<f64>()
            / 3.0;
        assert!((gain.delta_m_percent - mean).abs() < 1e-12);
    }

    #[test]
    fn gain_zero_baseline_names_task() {
        let baseline = vec![TaskResult::new("broken", MetricKind::Auc, 0.0)];
        let method = vec![TaskResult::new("broken", MetricKind::Auc, 0.5)];
        let err = multitask_gain(&method, &baseline).unwrap_err();
        assert!(err.to_string().contains("broken"));
    }

    #[test]
    fn gain_task_mismatch_names_first_offender() {
        let baseline = vec![TaskResult::new("x", MetricKind::Auc, 0.5)];
        let method = vec![TaskResult::new("y", MetricKind::Auc, 0.5)];
        let err = multitask_gain(&method, &baseline).unwrap_err();
        assert!(err.to_string().contains('y') && err.to_string().contains('x'));
    }
}
