//! Masked inter-feature attention and inter-sample attention.

use super::params::TapedParams;
use crate::numkit::{Rng, Tape, Tensor, Var};

/// Dropout configuration for one forward pass. With no generator attached
/// (evaluation and every verification mode) it is a no-op.
pub struct DropoutState {
    pub attention: f64,
    pub ffn: f64,
    rng: Option<Rng>,
}

impl DropoutState {
    pub fn off() -> Self {
        DropoutState {
            attention: 0.0,
            ffn: 0.0,
            rng: None,
        }
    }

    pub fn train(attention: f64, ffn: f64, rng: Rng) -> Self {
        DropoutState {
            attention,
            ffn,
            rng: Some(rng),
        }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var, rate: f64) -> Var {
        let Some(rng) = self.rng.as_mut() else { return x };
        if rate <= 0.0 {
            return x;
        }
        let shape = tape.value(x).shape().to_vec();
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..tape.value(x).len())
            .map(|_| if rng.uniform() < keep { scale } else { 0.0 })
            .collect();
        let m = tape.constant(Tensor::new(shape, mask));
        tape.mul_elem(x, m)
    }

    pub fn on_attention(&mut self, tape: &mut Tape, x: Var) -> Var {
        let rate = self.attention;
        self.apply(tape, x, rate)
    }

    pub fn on_ffn(&mut self, tape: &mut Tape, x: Var) -> Var {
        let rate = self.ffn;
        self.apply(tape, x, rate)
    }
}

/// Multi-head attention across the `d + t` tokens of each sample, with an
/// additive mask on the pre-softmax scores. Input and output are
/// `[n, s, e]`; the mask is `[s, s]`.
pub fn inter_feature_attention(
    tape: &mut Tape,
    params: &TapedParams,
    prefix: &str,
    x: Var,
    mask: Var,
    heads: usize,
    dropout: &mut DropoutState,
) -> Var {
    let (n, s, e) = tape.value(x).dims3();
    assert!(e % heads == 0, "heads {heads} must divide embedding size {e}");
    let dk = e / heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let flat = tape.reshape(x, vec![n * s, e]);
    let q = {
        let w = params.var(&format!("{prefix}wq"));
        tape.matmul(flat, w)
    };
    let k = {
        let w = params.var(&format!("{prefix}wk"));
        tape.matmul(flat, w)
    };
    let v = {
        let w = params.var(&format!("{prefix}wv"));
        tape.matmul(flat, w)
    };

    let mut head_outputs = Vec::with_capacity(heads);
    for head in 0..heads {
        let start = head * dk;
        let qh = tape.slice_last_cols(q, start, dk);
        let qh = tape.reshape(qh, vec![n, s, dk]);
        let kh = tape.slice_last_cols(k, start, dk);
        let kh = tape.reshape(kh, vec![n, s, dk]);
        let vh = tape.slice_last_cols(v, start, dk);
        let vh = tape.reshape(vh, vec![n, s, dk]);

        let scores = tape.bmm_nt(qh, kh);
        let scores = tape.scale(scores, scale);
        let masked = tape.add_mask_bcast(scores, mask);
        let attn = tape.softmax_last(masked);
        let attn = dropout.on_attention(tape, attn);
        let ctx = tape.bmm(attn, vh);
        head_outputs.push(tape.reshape(ctx, vec![n * s, dk]));
    }
    let merged = tape.concat_last_cols(&head_outputs);
    let wo = params.var(&format!("{prefix}wo"));
    let out = tape.matmul(merged, wo);
    tape.reshape(out, vec![n, s, e])
}

/// Multi-head attention across the samples of a batch. Each sample's tokens
/// are flattened to one row of width `(d + t) * e`; the score matrix is
/// `n x n` and no masking applies. Optional rotary encoding rotates Q and K
/// with the within-batch row index as the position.
pub fn inter_sample_attention(
    tape: &mut Tape,
    params: &TapedParams,
    prefix: &str,
    x: Var,
    heads: usize,
    use_rope: bool,
    dropout: &mut DropoutState,
) -> Var {
    let (n, s, e) = tape.value(x).dims3();
    let width = s * e;
    assert!(
        width % heads == 0,
        "heads {heads} must divide flattened width {width}"
    );
    let dk = width / heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let flat = tape.reshape(x, vec![n, width]);
    let q = {
        let w = params.var(&format!("{prefix}wq"));
        tape.matmul(flat, w)
    };
    let k = {
        let w = params.var(&format!("{prefix}wk"));
        tape.matmul(flat, w)
    };
    let v = {
        let w = params.var(&format!("{prefix}wv"));
        tape.matmul(flat, w)
    };

    let mut head_outputs = Vec::with_capacity(heads);
    for head in 0..heads {
        let start = head * dk;
        let mut qh = tape.slice_last_cols(q, start, dk);
        let mut kh = tape.slice_last_cols(k, start, dk);
        let vh = tape.slice_last_cols(v, start, dk);
        if use_rope {
            qh = tape.rope(qh);
            kh = tape.rope(kh);
        }
        let scores = tape.matmul_nt(qh, kh);
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax_last(scores);
        let attn = dropout.on_attention(tape, attn);
        head_outputs.push(tape.matmul(attn, vh));
    }
    let merged = tape.concat_last_cols(&head_outputs);
    let wo = params.var(&format!("{prefix}wo"));
    let out = tape.matmul(merged, wo);
    tape.reshape(out, vec![n, s, e])
}

/// Create the four projection matrices for one attention layer.
pub fn init_attention_params(
    store: &mut super::params::ParamStore,
    prefix: &str,
    width: usize,
    rng: &mut Rng,
) {
    let bound = 1.0 / (width as f64).sqrt();
    for name in ["wq", "wk", "wv", "wo"] {
        store.insert(
            format!("{prefix}{name}"),
            rng.uniform_tensor(&[width, width], -bound, bound),
        );
    }
}
