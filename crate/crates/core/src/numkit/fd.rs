//! Central finite differences for gradient verification.

use super::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Relative error with a floor that keeps near-zero gradients comparable.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Central-difference gradients of `f` with respect to every element of
/// every tensor in `at`.
pub fn central_diff<F>(mut f: F, at: &[Tensor], h: f64) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut grads = Vec::with_capacity(at.len());
    for ti in 0..at.len() {
        let mut g = vec![0.0; at[ti].len()];
        for j in 0..at[ti].len() {
            let mut plus: Vec<Tensor> = at.to_vec();
            let mut minus: Vec<Tensor> = at.to_vec();
            let mut pd = at[ti].data().to_vec();
            pd[j] += h;
            plus[ti] = Tensor::new(at[ti].shape().to_vec(), pd);
            let mut md = at[ti].data().to_vec();
            md[j] -= h;
            minus[ti] = Tensor::new(at[ti].shape().to_vec(), md);
            g[j] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        grads.push(Tensor::new(at[ti].shape().to_vec(), g));
    }
    grads
}

/// Worst relative error between an analytic gradient slice and its
/// finite-difference estimate.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert!(analytic.len() == numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max)
}
