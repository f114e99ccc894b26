//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Sized for the small task-correlation matrices this toolkit works with
//! (t up to ~16); rotations sweep row by row until the off-diagonal
//! Frobenius norm drops below 1e-12.

use super::tensor::Tensor;

/// Result of [`sym_eig`]: eigenvalues ascending, eigenvector `k` in column
/// `k` of `eigenvectors`.
#[derive(Clone, Debug)]
pub struct SymEigResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Tensor,
}

const OFFDIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Decompose a symmetric matrix `P = V Λ Vᵀ`.
///
/// Panics if the input is not square or departs from symmetry by more than
/// 1e-10 in any entry.
pub fn sym_eig(p: &Tensor) -> SymEigResult {
    let (t, t2) = p.dims2();
    assert!(t == t2, "sym_eig requires a square matrix, got {:?}", p.shape());
    for i in 0..t {
        for j in (i + 1)..t {
            let asym = (p.get2(i, j) - p.get2(j, i)).abs();
            assert!(
                asym < 1e-10,
                "sym_eig input is asymmetric: |a[{i},{j}] - a[{j},{i}]| = {asym:e}"
            );
        }
    }

    let mut a: Vec<f64> = p.data().to_vec();
    // Accumulated rotations; starts as the identity.
    let mut v = vec![0.0; t * t];
    for i in 0..t {
        v[i * t + i] = 1.0;
    }

    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..t {
            for j in 0..t {
                if i != j {
                    s += a[i * t + j] * a[i * t + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&a) < OFFDIAG_TOL;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        for row in 0..t {
            for col in (row + 1)..t {
                let apq = a[row * t + col];
                if apq == 0.0 {
                    continue;
                }
                let app = a[row * t + row];
                let aqq = a[col * t + col];
                let theta = (aqq - app) / (2.0 * apq);
                let tan = {
                    let s = if theta >= 0.0 { 1.0 } else { -1.0 };
                    s / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + tan * tan).sqrt();
                let s = tan * c;

                a[row * t + row] = app - tan * apq;
                a[col * t + col] = aqq + tan * apq;
                a[row * t + col] = 0.0;
                a[col * t + row] = 0.0;
                for j in 0..t {
                    if j == row || j == col {
                        continue;
                    }
                    let ajp = a[j * t + row];
                    let ajq = a[j * t + col];
                    a[j * t + row] = c * ajp - s * ajq;
                    a[row * t + j] = a[j * t + row];
                    a[j * t + col] = s * ajp + c * ajq;
                    a[col * t + j] = a[j * t + col];
                }
                for j in 0..t {
                    let vjp = v[j * t + row];
                    let vjq = v[j * t + col];
                    v[j * t + row] = c * vjp - s * vjq;
                    v[j * t + col] = s * vjp + c * vjq;
                }
            }
        }
        converged = off(&a) < OFFDIAG_TOL;
    }
    assert!(converged, "Jacobi sweeps did not converge within {MAX_SWEEPS} iterations");

    // Sort eigenpairs ascending.
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&i, &j| a[i * t + i].partial_cmp(&a[j * t + j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&k| a[k * t + k]).collect();
    let mut vectors = vec![0.0; t * t];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..t {
            vectors[r * t + new_col] = v[r * t + old_col];
        }
    }

    SymEigResult {
        eigenvalues,
        eigenvectors: Tensor::new(vec![t, t], vectors),
    }
}

impl SymEigResult {
    /// `V Λ Vᵀ`, for reconstruction checks.
    pub fn reconstruct(&self) -> Tensor {
        let (t, _) = self.eigenvectors.dims2();
        let mut scaled = vec![0.0; t * t];
        for r in 0..t {
            for c in 0..t {
                scaled[r * t + c] = self.eigenvectors.get2(r, c) * self.eigenvalues[c];
            }
        }
        Tensor::new(vec![t, t], scaled).matmul_nt(&self.eigenvectors)
    }
}
