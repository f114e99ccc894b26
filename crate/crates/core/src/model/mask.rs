//! Expansion of a masking scheme into the additive attention mask.

use super::config::MaskScheme;
use crate::numkit::Tensor;

/// Build the `(d+t) x (d+t)` additive mask: 0 where attention is allowed,
/// `-inf` where blocked. Rows are queries, columns are keys; feature tokens
/// occupy indices `0..d`, task tokens `d..d+t`.
///
/// Task-to-feature attention is never blocked, and a task token always keeps
/// its own key under `TNotT`.
pub fn expand_mask(scheme: MaskScheme, d: usize, t: usize) -> Tensor {
    assert!(d >= 1 && t >= 1, "mask needs d >= 1 and t >= 1, got d={d} t={t}");
    let s = d + t;
    let mut m = vec![0.0; s * s];
    let block_f_to_t = matches!(scheme, MaskScheme::FNotT | MaskScheme::Both);
    let block_t_to_t = matches!(scheme, MaskScheme::TNotT | MaskScheme::Both);
    if block_f_to_t {
        for q in 0..d {
            for k in d..s {
                m[q * s + k] = f64::NEG_INFINITY;
            }
        }
    }
    if block_t_to_t {
        for i in 0..t {
            for j in 0..t {
                if i != j {
                    m[(d + i) * s + (d + j)] = f64::NEG_INFINITY;
                }
            }
        }
    }
    Tensor::new(vec![s, s], m)
}

/// Number of blocked cells in a mask.
pub fn blocked_cells(mask: &Tensor) -> usize {
    mask.data().iter().filter(|v| **v == f64::NEG_INFINITY).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_masking_is_all_zero() {
        for (d, t) in [(1, 1), (6, 2), (3, 5)] {
            let m = expand_mask(MaskScheme::None, d, t);
            assert!(m.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn t_not_t_blocks_exactly_the_cross_task_cells() {
        // Two tasks and six features: exactly cells (6,7) and (7,6).
        let m = expand_mask(MaskScheme::TNotT, 6, 2);
        assert_eq!(blocked_cells(&m), 2);
        assert_eq!(m.get2(6, 7), f64::NEG_INFINITY);
        assert_eq!(m.get2(7, 6), f64::NEG_INFINITY);
        // Self-attention of task tokens stays allowed.
        assert_eq!(m.get2(6, 6), 0.0);
        assert_eq!(m.get2(7, 7), 0.0);
    }

    #[test]
    fn f_not_t_blocks_feature_rows_task_columns() {
        let m = expand_mask(MaskScheme::FNotT, 6, 2);
        assert_eq!(blocked_cells(&m), 12);
        for q in 0..6 {
            for k in 6..8 {
                assert_eq!(m.get2(q, k), f64::NEG_INFINITY);
            }
        }
        // Task rows never lose access to features.
        for q in 6..8 {
            for k in 0..6 {
                assert_eq!(m.get2(q, k), 0.0);
            }
        }
    }

    #[test]
    fn both_is_the_union() {
        let m = expand_mask(MaskScheme::Both, 6, 2);
        assert_eq!(blocked_cells(&m), 14);
        let f = expand_mask(MaskScheme::FNotT, 6, 2);
        let t = expand_mask(MaskScheme::TNotT, 6, 2);
        for i in 0..m.len() {
            let expect_blocked =
                f.data()[i] == f64::NEG_INFINITY || t.data()[i] == f64::NEG_INFINITY;
            assert_eq!(m.data()[i] == f64::NEG_INFINITY, expect_blocked);
        }
    }

    #[test]
    fn single_token_leaves_t_not_t_empty() {
        let m = expand_mask(MaskScheme::TNotT, 4, 1);
        assert_eq!(blocked_cells(&m), 0);
        let m = expand_mask(MaskScheme::FNotT, 4, 1);
        assert_eq!(blocked_cells(&m), 4);
    }
}
