//! Task weight vectors with exact pairwise cosine similarity.
//!
//! Given a correlation matrix P = Q Λ Qᵀ and orthonormal directions U, the
//! rows of W = Q Λ^{1/2} Uᵀ are unit vectors whose Gram matrix is exactly P,
//! so cosine(w_i, w_j) = P_ij up to round-off.

use crate::numkit::{gram_schmidt, sym_eig, Rng, Tensor};
use crate::{Error, Result};

// Eigenvalues this far below zero are round-off on an analytically PSD
// matrix and get clamped; anything lower is a genuine PSD violation.
const PSD_SLACK: f64 = -1e-10;

/// Unit-norm task weight rows (`t x d`).
#[derive(Clone, Debug)]
pub struct WeightMatrix {
    pub w: Tensor,
}

impl WeightMatrix {
    pub fn task_count(&self) -> usize {
        self.w.shape()[0]
    }

    /// Row `i`.
    pub fn task_weights(&self, i: usize) -> &[f64] {
        self.w.row(i)
    }

    /// `W Wᵀ`, which should reproduce the correlation matrix.
    pub fn gram(&self) -> Tensor {
        self.w.matmul_nt(&self.w)
    }

    /// Cosine similarity between task rows `i` and `j`.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let a = self.w.row(i);
        let b = self.w.row(j);
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }
}

/// Uniform correlation matrix: ones on the diagonal, `p` elsewhere.
pub fn build_correlation_matrix(t: usize, p: f64) -> Result<Tensor> {
    if t < 2 {
        return Err(Error::Contract(format!("need at least 2 tasks, got {t}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!(
            "uniform correlation must lie in [0, 1] to stay positive semidefinite, got {p}"
        )));
    }
    let mut data = vec![p; t * t];
    for i in 0..t {
        data[i * t + i] = 1.0;
    }
    Ok(Tensor::new(vec![t, t], data))
}

/// Build `W = Q Λ^{1/2} Uᵀ` from a symmetric PSD unit-diagonal matrix.
pub fn build_weight_matrix(p: &Tensor, d: usize, rng: &mut Rng) -> Result<WeightMatrix> {
    let (t, _) = p.dims2();
    if d < t {
        return Err(Error::Contract(format!(
            "feature dimension {d} must be >= task count {t}"
        )));
    }
    let eig = sym_eig(p);
    if let Some(&min) = eig.eigenvalues.first() {
        if min < PSD_SLACK {
            return Err(Error::NotPsd(format!("smallest eigenvalue {min:e}")));
        }
    }
    // Scale eigenvector columns by sqrt(eigenvalue), clamping round-off
    // negatives to zero.
    let q = &eig.eigenvectors;
    let mut scaled = vec![0.0; t * t];
    for r in 0..t {
        for c in 0..t {
            scaled[r * t + c] = q.get2(r, c) * eig.eigenvalues[c].max(0.0).sqrt();
        }
    }
    let draws = rng.normal_tensor(&[t, d]);
    let u_rows = gram_schmidt(&draws, rng);
    let w = Tensor::new(vec![t, t], scaled).matmul(&u_rows);
    Ok(WeightMatrix { w })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_matrix_by_definition() {
        let p = build_correlation_matrix(3, 0.6).unwrap();
        let expect = Tensor::from_rows(&[
            vec![1.0, 0.6, 0.6],
            vec![0.6, 1.0, 0.6],
            vec![0.6, 0.6, 1.0],
        ]);
        assert_eq!(p, expect);
    }

    #[test]
    fn zero_correlation_is_identity() {
        let p = build_correlation_matrix(2, 0.0).unwrap();
        assert_eq!(p, Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
    }

    #[test]
    fn full_correlation_is_all_ones() {
        let p = build_correlation_matrix(5, 1.0).unwrap();
        assert!(p.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn out_of_range_p_is_rejected() {
        assert!(build_correlation_matrix(3, -0.1).is_err());
        assert!(build_correlation_matrix(3, 1.1).is_err());
    }

    #[test]
    fn orthogonal_rows_at_p_zero() {
        let p = build_correlation_matrix(3, 0.0).unwrap();
        let mut rng = Rng::new(2);
        let wm = build_weight_matrix(&p, 8, &mut rng).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((wm.cosine(i, j) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_rows_at_p_one() {
        let p = build_correlation_matrix(3, 1.0).unwrap();
        let mut rng = Rng::new(3);
        let wm = build_weight_matrix(&p, 8, &mut rng).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((wm.cosine(i, j) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cosines_hit_target_at_p_06() {
        let p = build_correlation_matrix(4, 0.6).unwrap();
        let mut rng = Rng::new(4);
        let wm = build_weight_matrix(&p, 32, &mut rng).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(
                        (wm.cosine(i, j) - 0.6).abs() < 1e-8,
                        "cos({i},{j}) = {}",
                        wm.cosine(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn rows_are_unit_norm_and_gram_reproduces_p() {
        let p = build_correlation_matrix(5, 0.35).unwrap();
        let mut rng = Rng::new(5);
        let wm = build_weight_matrix(&p, 16, &mut rng).unwrap();
        let gram = wm.gram();
        assert!(gram.max_abs_diff(&p) < 1e-8);
        for i in 0..5 {
            let norm: f64 = wm.task_weights(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn non_psd_matrix_is_reported() {
        // Unit diagonal, entries in [0,1], but indefinite.
        let p = Tensor::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ]);
        let mut rng = Rng::new(6);
        let err = build_weight_matrix(&p, 8, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NotPsd(_)), "{err}");
    }
}
