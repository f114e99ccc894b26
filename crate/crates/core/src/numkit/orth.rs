//! Modified Gram-Schmidt orthonormalization of random rows.

use super::rng::Rng;
use super::tensor::{dot, Tensor};

// A row whose post-projection norm falls below this is treated as linearly
// dependent on earlier rows and redrawn.
const DEPENDENT_NORM: f64 = 1e-8;
const MAX_REDRAWS: usize = 100;

/// Orthonormalize the rows of a `t x d` matrix in place, redrawing any row
/// that turns out (numerically) dependent on the rows before it.
///
/// Panics if `t > d` (no orthonormal set of that size exists) or if a row
/// keeps coming back dependent after 100 redraws.
pub fn gram_schmidt(rows: &Tensor, rng: &mut Rng) -> Tensor {
    let (t, d) = rows.dims2();
    assert!(
        t <= d,
        "cannot orthonormalize {t} rows in {d} dimensions (t > d)"
    );
    let mut out: Vec<Vec<f64>> = (0..t).map(|i| rows.row(i).to_vec()).collect();
    for i in 0..t {
        let mut redraws = 0;
        loop {
            // Subtract projections onto the already-orthonormal rows.
            for j in 0..i {
                let coef = dot(&out[i], &out[j]);
                let prev = out[j].clone();
                for (x, p) in out[i].iter_mut().zip(&prev) {
                    *x -= coef * p;
                }
            }
            let norm = dot(&out[i], &out[i]).sqrt();
            if norm >= DEPENDENT_NORM {
                for x in out[i].iter_mut() {
                    *x /= norm;
                }
                break;
            }
            redraws += 1;
            assert!(
                redraws <= MAX_REDRAWS,
                "row {i} stayed linearly dependent after {MAX_REDRAWS} redraws"
            );
            out[i] = rng.normal_vec(d);
        }
    }
    Tensor::from_rows(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_input_is_a_fixed_point() {
        let rows = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let mut rng = Rng::new(1);
        let out = gram_schmidt(&rows, &mut rng);
        assert!(out.max_abs_diff(&rows) < 1e-12);
    }

    #[test]
    fn textbook_two_by_two() {
        let rows = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        let mut rng = Rng::new(1);
        let out = gram_schmidt(&rows, &mut rng);
        let expect = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(out.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn random_rows_give_identity_gram_matrix() {
        let mut rng = Rng::new(17);
        let rows = rng.normal_tensor(&[5, 32]);
        let out = gram_schmidt(&rows, &mut rng);
        let gram = out.matmul_nt(&out);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram.get2(i, j) - expect).abs() < 1e-10,
                    "gram[{i},{j}] = {}",
                    gram.get2(i, j)
                );
            }
        }
    }

    #[test]
    fn unit_norms_are_tight() {
        let mut rng = Rng::new(23);
        let rows = rng.normal_tensor(&[4, 16]);
        let out = gram_schmidt(&rows, &mut rng);
        for i in 0..4 {
            let norm = dot(out.row(i), out.row(i)).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dependent_row_gets_redrawn() {
        // Second row duplicates the first; projection annihilates it and a
        // fresh draw must take its place.
        let rows = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]);
        let mut rng = Rng::new(5);
        let out = gram_schmidt(&rows, &mut rng);
        let g = out.matmul_nt(&out);
        assert!((g.get2(0, 0) - 1.0).abs() < 1e-12);
        assert!((g.get2(1, 1) - 1.0).abs() < 1e-12);
        assert!(g.get2(0, 1).abs() < 1e-10);
    }

    #[test]
    #[should_panic(expected = "t > d")]
    fn too_many_rows_panics() {
        let rows = Tensor::zeros(vec![3, 2]);
        let mut rng = Rng::new(1);
        let _ = gram_schmidt(&rows, &mut rng);
    }
}
