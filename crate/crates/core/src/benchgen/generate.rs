//! Dataset generation and empirical correlation reporting.

use serde::{Deserialize, Serialize};

use super::config::{GenConfig, GeneratorConfig, LegacyGenConfig};
use super::weights::{build_weight_matrix, WeightMatrix};
use crate::metrics::pearson;
use crate::numkit::{gram_schmidt, splitmix64, Rng, Tensor};
use crate::{Error, Result};

/// Features (`n x d`), labels (`n x t`), and the recipe that produced them.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub features: Tensor,
    pub labels: Tensor,
    pub config: GeneratorConfig,
}

impl SyntheticDataset {
    pub fn sample_count(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn task_count(&self) -> usize {
        self.labels.shape()[1]
    }

    /// Labels of task `i` as a contiguous vector.
    pub fn task_column(&self, i: usize) -> Vec<f64> {
        let (n, t) = self.labels.dims2();
        assert!(i < t, "task {i} out of range {t}");
        (0..n).map(|s| self.labels.data()[s * t + i]).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.feature_dim()).map(|j| format!("x{j}")).collect()
    }

    pub fn task_names(&self) -> Vec<String> {
        (0..self.task_count()).map(|i| format!("y{i}")).collect()
    }
}

/// The task weight matrix a given config would generate (same draws as
/// [`generate`]).
pub fn task_weights(config: &GenConfig) -> Result<WeightMatrix> {
    let mut cfg = config.clone();
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    weights_with_rng(&cfg, &mut rng)
}

fn weights_with_rng(cfg: &GenConfig, rng: &mut Rng) -> Result<WeightMatrix> {
    let p = cfg.correlation_matrix()?;
    build_weight_matrix(&p, cfg.d, rng)
}

/// Generate one dataset: standard-normal features, per-task polynomial
/// labels `y_i = sum_{k=1..degree_i} (w_i . x)^k + noise`.
pub fn generate(config: &GenConfig) -> Result<SyntheticDataset> {
    let mut cfg = config.clone();
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let weights = weights_with_rng(&cfg, &mut rng)?;
    let features = rng.normal_tensor(&[cfg.n, cfg.d]);
    // Projections for all tasks at once: [n, t].
    let proj = features.matmul_nt(&weights.w);
    let mut labels = vec![0.0; cfg.n * cfg.t];
    for task in 0..cfg.t {
        let degree = cfg.degrees[task];
        let sigma = cfg.noise_scales[task];
        for s in 0..cfg.n {
            let lin = proj.data()[s * cfg.t + task];
            let mut term = 1.0;
            let mut acc = 0.0;
            for _ in 0..degree {
                term *= lin;
                acc += term;
            }
            labels[s * cfg.t + task] = acc;
        }
        // The noise stream is consumed even at sigma = 0 so that toggling a
        // task's noise does not shift every later draw.
        let noise = rng.normal_vec(cfg.n);
        if sigma > 0.0 {
            for (s, z) in noise.iter().enumerate() {
                labels[s * cfg.t + task] += sigma * z;
            }
        }
    }
    let labels = Tensor::new(vec![cfg.n, cfg.t], labels);
    if !labels.is_finite() || !features.is_finite() {
        return Err(Error::Numeric(
            "generated dataset contains non-finite values; reduce polynomial degrees".into(),
        ));
    }
    Ok(SyntheticDataset {
        features,
        labels,
        config: GeneratorConfig::MultitabBench(cfg),
    })
}

/// Mean/std of the empirical pairwise Pearson correlation over fresh
/// datasets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub repeats: usize,
    pub pairs: Vec<PairStat>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairStat {
    pub task_a: String,
    pub task_b: String,
    pub mean: f64,
    pub std: f64,
}

/// Empirical label correlations over `repeats` datasets regenerated with
/// per-repeat seeds derived from `config.seed`. `include_self` adds the
/// diagonal (a diagnostic that must report exactly 1).
pub fn correlation_report(
    config: &GenConfig,
    repeats: usize,
    include_self: bool,
) -> Result<CorrelationReport> {
    if repeats < 2 {
        return Err(Error::Contract(format!(
            "correlation_report needs at least 2 repeats, got {repeats}"
        )));
    }
    let mut cfg = config.clone();
    cfg.validate()?;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut pair_index: Vec<(usize, usize)> = Vec::new();
    for r in 0..repeats {
        let mut run = cfg.clone();
        run.seed = splitmix64(cfg.seed.wrapping_add(r as u64));
        let ds = generate(&run)?;
        let correlations = label_correlations(&ds.labels, include_self)?;
        if r == 0 {
            pair_index = correlations.iter().map(|&(i, j, _)| (i, j)).collect();
            samples = vec![Vec::with_capacity(repeats); correlations.len()];
        }
        for (slot, &(_, _, rho)) in samples.iter_mut().zip(&correlations) {
            slot.push(rho);
        }
    }
    let pairs = pair_index
        .iter()
        .zip(&samples)
        .map(|(&(i, j), rhos)| {
            let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
            let var = rhos.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (rhos.len() - 1) as f64;
            PairStat {
                task_a: format!("y{i}"),
                task_b: format!("y{j}"),
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    Ok(CorrelationReport { repeats, pairs })
}

fn label_correlations(labels: &Tensor, include_self: bool) -> Result<Vec<(usize, usize, f64)>> {
    let (n, t) = labels.dims2();
    let columns: Vec<Vec<f64>> = (0..t)
        .map(|i| (0..n).map(|s| labels.data()[s * t + i]).collect())
        .collect();
    for (i, col) in columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        if col.iter().all(|v| (v - mean).abs() == 0.0) {
            return Err(Error::UndefinedMetric {
                task: format!("y{i}"),
                message: "label variance is zero; correlation undefined".into(),
            });
        }
    }
    let mut out = Vec::new();
    for i in 0..t {
        let start = if include_self { i } else { i + 1 };
        for j in start..t {
            let rho = if i == j {
                1.0
            } else {
                pearson(&columns[i], &columns[j]).map_err(|e| e.with_task(format!("y{i}").as_str()))?
            };
            out.push((i, j, rho));
        }
    }
    Ok(out)
}

/// The (2 x d) weight rows the legacy generator would use.
pub fn legacy_weights(config: &LegacyGenConfig) -> Result<Tensor> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    Ok(legacy_weights_with_rng(config, &mut rng))
}

fn legacy_weights_with_rng(cfg: &LegacyGenConfig, rng: &mut Rng) -> Tensor {
    let draws = rng.normal_tensor(&[2, cfg.d]);
    let u = gram_schmidt(&draws, rng);
    let q = (1.0 - cfg.p * cfg.p).sqrt();
    let mut w = vec![0.0; 2 * cfg.d];
    for k in 0..cfg.d {
        w[k] = cfg.c * u.get2(0, k);
        w[cfg.d + k] = cfg.c * (cfg.p * u.get2(0, k) + q * u.get2(1, k));
    }
    Tensor::new(vec![2, cfg.d], w)
}

/// Two-task sinusoid generator:
/// `y_j = w_j.x + sum_i sin(alpha_i w_j.x + beta_i) + noise`.
pub fn generate_legacy_mmoe(config: &LegacyGenConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let w = legacy_weights_with_rng(config, &mut rng);
    let features = rng.normal_tensor(&[config.n, config.d]);
    let proj = features.matmul_nt(&w);
    let mut labels = vec![0.0; config.n * 2];
    for task in 0..2 {
        for s in 0..config.n {
            let lin = proj.data()[s * 2 + task];
            let mut y = lin;
            for (&alpha, &beta) in config.alphas.iter().zip(&config.betas) {
                y += (alpha * lin + beta).sin();
            }
            labels[s * 2 + task] = y;
        }
        let noise = rng.normal_vec(config.n);
        if config.noise_scale > 0.0 {
            for (s, z) in noise.iter().enumerate() {
                labels[s * 2 + task] += config.noise_scale * z;
            }
        }
    }
    Ok(SyntheticDataset {
        features,
        labels: Tensor::new(vec![config.n, 2], labels),
        config: GeneratorConfig::LegacyMmoe(config.clone()),
    })
}
