//! Encoder block: pre-norm residual sublayers around the two attention
//! kinds, each followed by a feed-forward network.

use super::attention::{inter_feature_attention, inter_sample_attention, DropoutState};
use super::config::ModelConfig;
use super::params::{ParamStore, TapedParams};
use crate::numkit::{Rng, Tape, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

/// Token-wise two-layer FFN with GELU, `e -> hidden -> e`.
pub fn feed_forward(
    tape: &mut Tape,
    params: &TapedParams,
    prefix: &str,
    x: Var,
    dropout: &mut DropoutState,
) -> Var {
    let (n, s, e) = tape.value(x).dims3();
    let flat = tape.reshape(x, vec![n * s, e]);
    let w1 = params.var(&format!("{prefix}w1"));
    let b1 = params.var(&format!("{prefix}b1"));
    let w2 = params.var(&format!("{prefix}w2"));
    let b2 = params.var(&format!("{prefix}b2"));
    let h = tape.matmul(flat, w1);
    let h = tape.add_bias_last(h, b1);
    let h = tape.gelu(h);
    let h = dropout.on_ffn(tape, h);
    let out = tape.matmul(h, w2);
    let out = tape.add_bias_last(out, b2);
    tape.reshape(out, vec![n, s, e])
}

fn layernorm_sublayer(tape: &mut Tape, params: &TapedParams, prefix: &str, x: Var) -> Var {
    let gain = params.var(&format!("{prefix}gain"));
    let bias = params.var(&format!("{prefix}bias"));
    tape.layernorm_last(x, gain, bias, LN_EPS)
}

/// One encoder block:
/// `x -> LN -> inter-feature attn -> +res -> LN -> FFN -> +res
///    -> LN -> inter-sample attn -> +res -> LN -> FFN -> +res`.
///
/// With `inter_sample_identity` the inter-sample sublayer (and its norm)
/// contributes nothing, keeping every sample independent.
pub fn encoder_block(
    tape: &mut Tape,
    params: &TapedParams,
    prefix: &str,
    x: Var,
    mask: Var,
    config: &ModelConfig,
    dropout: &mut DropoutState,
) -> Var {
    let normed = layernorm_sublayer(tape, params, &format!("{prefix}ln1."), x);
    let attn = inter_feature_attention(
        tape,
        params,
        &format!("{prefix}if."),
        normed,
        mask,
        config.h,
        dropout,
    );
    let h1 = tape.add(x, attn);

    let normed = layernorm_sublayer(tape, params, &format!("{prefix}ln2."), h1);
    let ffn = feed_forward(tape, params, &format!("{prefix}ffn1."), normed, dropout);
    let h2 = tape.add(h1, ffn);

    let h3 = if config.inter_sample_identity {
        h2
    } else {
        let normed = layernorm_sublayer(tape, params, &format!("{prefix}ln3."), h2);
        let attn = inter_sample_attention(
            tape,
            params,
            &format!("{prefix}is."),
            normed,
            config.h,
            config.use_rope,
            dropout,
        );
        tape.add(h2, attn)
    };

    let normed = layernorm_sublayer(tape, params, &format!("{prefix}ln4."), h3);
    let ffn = feed_forward(tape, params, &format!("{prefix}ffn2."), normed, dropout);
    tape.add(h3, ffn)
}

fn init_layernorm(store: &mut ParamStore, prefix: &str, e: usize) {
    store.insert(format!("{prefix}gain"), Tensor::full(vec![e], 1.0));
    store.insert(format!("{prefix}bias"), Tensor::zeros(vec![e]));
}

fn init_ffn(store: &mut ParamStore, prefix: &str, e: usize, hidden: usize, rng: &mut Rng) {
    let b_in = 1.0 / (e as f64).sqrt();
    let b_hid = 1.0 / (hidden as f64).sqrt();
    store.insert(format!("{prefix}w1"), rng.uniform_tensor(&[e, hidden], -b_in, b_in));
    store.insert(format!("{prefix}b1"), Tensor::zeros(vec![hidden]));
    store.insert(format!("{prefix}w2"), rng.uniform_tensor(&[hidden, e], -b_hid, b_hid));
    store.insert(format!("{prefix}b2"), Tensor::zeros(vec![e]));
}

/// Parameters of one encoder block; `flat_width = (d + t) * e` sizes the
/// inter-sample projections.
pub fn init_block_params(
    store: &mut ParamStore,
    prefix: &str,
    config: &ModelConfig,
    flat_width: usize,
    rng: &mut Rng,
) {
    let e = config.e;
    let hidden = config.ffn_hidden();
    init_layernorm(store, &format!("{prefix}ln1."), e);
    super::attention::init_attention_params(store, &format!("{prefix}if."), e, rng);
    init_layernorm(store, &format!("{prefix}ln2."), e);
    init_ffn(store, &format!("{prefix}ffn1."), e, hidden, rng);
    init_layernorm(store, &format!("{prefix}ln3."), e);
    super::attention::init_attention_params(store, &format!("{prefix}is."), flat_width, rng);
    init_layernorm(store, &format!("{prefix}ln4."), e);
    init_ffn(store, &format!("{prefix}ffn2."), e, hidden, rng);
}
