//! Generator configuration and validation.

use serde::{Deserialize, Serialize};

use crate::numkit::{sym_eig, Tensor};
use crate::{Error, Result};

/// Target pairwise correlation: a single coefficient applied to every task
/// pair, or a full matrix for non-uniform targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correlation {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

fn default_feature_dim() -> usize {
    32
}

fn default_degree() -> usize {
    3
}

fn default_noise() -> f64 {
    0.01
}

/// Full recipe for one synthetic multitask dataset.
///
/// `degrees` and `noise_scales` left empty default to degree 3 and noise
/// scale 0.01 for every task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Number of tasks.
    pub t: usize,
    /// Feature dimension.
    #[serde(default = "default_feature_dim")]
    pub d: usize,
    pub correlation: Correlation,
    /// Per-task polynomial degree.
    #[serde(default)]
    pub degrees: Vec<usize>,
    /// Per-task noise standard deviation.
    #[serde(default)]
    pub noise_scales: Vec<f64>,
    /// Sample count.
    pub n: usize,
    pub seed: u64,
}

impl GenConfig {
    /// Uniform-correlation config with default dimension, degrees, and noise.
    pub fn uniform(t: usize, p: f64, n: usize, seed: u64) -> Self {
        GenConfig {
            t,
            d: default_feature_dim(),
            correlation: Correlation::Uniform(p),
            degrees: vec![default_degree(); t],
            noise_scales: vec![default_noise(); t],
            n,
            seed,
        }
    }

    /// Fill defaulted fields and check every invariant.
    pub fn validate(&mut self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::config("/t", format!("need at least 2 tasks, got {}", self.t)));
        }
        if self.d < self.t {
            return Err(Error::config(
                "/d",
                format!("feature dimension {} must be >= task count {}", self.d, self.t),
            ));
        }
        if self.n == 0 {
            return Err(Error::config("/n", "sample count must be positive"));
        }
        if self.degrees.is_empty() {
            self.degrees = vec![default_degree(); self.t];
        }
        if self.noise_scales.is_empty() {
            self.noise_scales = vec![default_noise(); self.t];
        }
        if self.degrees.len() != self.t {
            return Err(Error::config(
                "/degrees",
                format!("{} degrees for {} tasks", self.degrees.len(), self.t),
            ));
        }
        if self.noise_scales.len() != self.t {
            return Err(Error::config(
                "/noise_scales",
                format!("{} noise scales for {} tasks", self.noise_scales.len(), self.t),
            ));
        }
        if let Some(bad) = self.degrees.iter().position(|&d| d < 1) {
            return Err(Error::config(
                format!("/degrees/{bad}"),
                "polynomial degree must be >= 1",
            ));
        }
        if let Some(bad) = self.noise_scales.iter().position(|&s| !(s >= 0.0)) {
            return Err(Error::config(
                format!("/noise_scales/{bad}"),
                "noise scale must be >= 0",
            ));
        }
        match &self.correlation {
            Correlation::Uniform(p) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config(
                        "/correlation",
                        format!("uniform correlation must lie in [0, 1], got {p}"),
                    ));
                }
            }
            Correlation::Matrix(rows) => {
                validate_matrix(rows, self.t)?;
            }
        }
        Ok(())
    }

    /// The validated correlation matrix as a tensor.
    pub fn correlation_matrix(&self) -> Result<Tensor> {
        match &self.correlation {
            Correlation::Uniform(p) => super::weights::build_correlation_matrix(self.t, *p),
            Correlation::Matrix(rows) => {
                let mut data = Vec::with_capacity(self.t * self.t);
                for row in rows {
                    data.extend_from_slice(row);
                }
                Ok(Tensor::new(vec![self.t, self.t], data))
            }
        }
    }
}

fn validate_matrix(rows: &[Vec<f64>], t: usize) -> Result<()> {
    if rows.len() != t || rows.iter().any(|r| r.len() != t) {
        return Err(Error::config(
            "/correlation",
            format!("correlation matrix must be {t}x{t}"),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if (row[i] - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                format!("/correlation/{i}/{i}"),
                format!("diagonal must be 1, got {}", row[i]),
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    format!("/correlation/{i}/{j}"),
                    format!("entries must lie in [0, 1], got {v}"),
                ));
            }
            if (v - rows[j][i]).abs() > 1e-10 {
                return Err(Error::config(
                    format!("/correlation/{i}/{j}"),
                    format!("matrix is asymmetric: {v} vs {}", rows[j][i]),
                ));
            }
        }
    }
    // PSD check through the eigensolver.
    let mut data = Vec::with_capacity(t * t);
    for row in rows {
        data.extend_from_slice(row);
    }
    let res = sym_eig(&Tensor::new(vec![t, t], data));
    if let Some(&min) = res.eigenvalues.first() {
        if min < -1e-10 {
            return Err(Error::NotPsd(format!("smallest eigenvalue {min:e}")));
        }
    }
    Ok(())
}

/// Configuration of the legacy two-task sinusoid generator.
///
/// The noise term is drawn from `N(0, noise_scale^2)`; the default scale 0.1
/// reproduces the variance-0.01 noise of the original formulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegacyGenConfig {
    pub d: usize,
    /// Weight cosine similarity in [-1, 1].
    pub p: f64,
    /// Weight scale.
    pub c: f64,
    /// Sinusoid count.
    pub m: usize,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default = "default_legacy_noise")]
    pub noise_scale: f64,
    pub n: usize,
    pub seed: u64,
}

fn default_legacy_noise() -> f64 {
    0.1
}

impl LegacyGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::config("/d", "need dimension >= 2 for two orthonormal vectors"));
        }
        if !(-1.0..=1.0).contains(&self.p) {
            return Err(Error::config(
                "/p",
                format!("correlation must lie in [-1, 1], got {}", self.p),
            ));
        }
        if self.alphas.len() != self.m || self.betas.len() != self.m {
            return Err(Error::config(
                "/alphas",
                format!(
                    "alphas/betas must each have m = {} entries, got {}/{}",
                    self.m,
                    self.alphas.len(),
                    self.betas.len()
                ),
            ));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::config("/noise_scale", "noise scale must be >= 0"));
        }
        if self.n == 0 {
            return Err(Error::config("/n", "sample count must be positive"));
        }
        Ok(())
    }
}

/// Which generator produced a dataset; echoed into the schema sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorConfig {
    MultitabBench(GenConfig),
    LegacyMmoe(LegacyGenConfig),
}

impl GeneratorConfig {
    pub fn seed(&self) -> u64 {
        match self {
            GeneratorConfig::MultitabBench(c) => c.seed,
            GeneratorConfig::LegacyMmoe(c) => c.seed,
        }
    }

    pub fn task_count(&self) -> usize {
        match self {
            GeneratorConfig::MultitabBench(c) => c.t,
            GeneratorConfig::LegacyMmoe(_) => 2,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            GeneratorConfig::MultitabBench(c) => c.d,
            GeneratorConfig::LegacyMmoe(c) => c.d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let mut cfg = GenConfig {
            t: 3,
            d: 32,
            correlation: Correlation::Uniform(0.5),
            degrees: vec![],
            noise_scales: vec![],
            n: 10,
            seed: 1,
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.degrees, vec![3, 3, 3]);
        assert_eq!(cfg.noise_scales, vec![0.01, 0.01, 0.01]);
    }

    #[test]
    fn negative_uniform_p_is_rejected() {
        let mut cfg = GenConfig::uniform(2, -0.5, 10, 1);
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn d_smaller_than_t_is_rejected() {
        let mut cfg = GenConfig::uniform(5, 0.2, 10, 1);
        cfg.d = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_psd_matrix_is_rejected() {
        let mut cfg = GenConfig {
            t: 3,
            d: 8,
            correlation: Correlation::Matrix(vec![
                vec![1.0, 1.0, 0.0],
                vec![1.0, 1.0, 1.0],
                vec![0.0, 1.0, 1.0],
            ]),
            degrees: vec![],
            noise_scales: vec![],
            n: 10,
            seed: 1,
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::NotPsd(_)), "{err}");
    }

    #[test]
    fn asymmetric_matrix_is_a_config_error() {
        let mut cfg = GenConfig {
            t: 2,
            d: 4,
            correlation: Correlation::Matrix(vec![vec![1.0, 0.3], vec![0.5, 1.0]]),
            degrees: vec![],
            noise_scales: vec![],
            n: 10,
            seed: 1,
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("asymmetric"));
    }

    #[test]
    fn valid_matrix_form_passes() {
        let mut cfg = GenConfig {
            t: 2,
            d: 4,
            correlation: Correlation::Matrix(vec![vec![1.0, 0.3], vec![0.3, 1.0]]),
            degrees: vec![],
            noise_scales: vec![],
            n: 10,
            seed: 1,
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn correlation_json_roundtrip() {
        let uniform: Correlation = serde_json::from_str("0.6").unwrap();
        assert_eq!(uniform, Correlation::Uniform(0.6));
        let matrix: Correlation = serde_json::from_str("[[1.0, 0.2], [0.2, 1.0]]").unwrap();
        assert!(matches!(matrix, Correlation::Matrix(_)));
    }

    #[test]
    fn legacy_validation() {
        let mut cfg = LegacyGenConfig {
            d: 16,
            p: 0.5,
            c: 1.0,
            m: 2,
            alphas: vec![1.0, 2.0],
            betas: vec![0.0, 0.5],
            noise_scale: 0.1,
            n: 100,
            seed: 3,
        };
        cfg.validate().unwrap();
        cfg.p = 1.5;
        assert!(cfg.validate().is_err());
        cfg.p = 0.5;
        cfg.alphas.pop();
        assert!(cfg.validate().is_err());
    }
}
