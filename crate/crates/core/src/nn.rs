//! Transformer sublayers shared by the encoder and the memory blocks.

use rand::Rng;

use crate::config::Activation;
use crate::error::{shape_err, ChimeError, Result};
use crate::tensor_core::{Bound, Init, ParamId, ParamStore, Scalar, Tape, Var};

/// Boolean attention permissions, row = query, column = key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttnMask {
    pub rows: usize,
    pub cols: usize,
    pub allow: Vec<bool>,
}

impl AttnMask {
    /// Every query may attend to every key where `keys[j]` holds.
    pub fn keys_only(rows: usize, keys: &[bool]) -> Self {
        let mut allow = Vec::with_capacity(rows * keys.len());
        for _ in 0..rows {
            allow.extend_from_slice(keys);
        }
        AttnMask {
            rows,
            cols: keys.len(),
            allow,
        }
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.cols + j]
    }

    /// 0 where allowed, -inf where forbidden.
    pub fn additive(&self) -> Vec<f64> {
        self.allow
            .iter()
            .map(|&a| if a { 0.0 } else { f64::NEG_INFINITY })
            .collect()
    }

    pub fn to_bit_rows(&self) -> Vec<String> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| if self.allowed(i, j) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub heads: usize,
}

#[derive(Clone, Debug)]
pub struct FeedForwardParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub activation: Activation,
}

/// One post-norm transformer block: attention then feed-forward, each
/// wrapped in residual + layer normalization.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub attn: AttentionParams,
    pub ln1_gain: ParamId,
    pub ln1_shift: ParamId,
    pub ffn: FeedForwardParams,
    pub ln2_gain: ParamId,
    pub ln2_shift: ParamId,
    pub eps: f64,
}

pub(crate) fn weight<T: Scalar>(
    store: &mut ParamStore<T>,
    name: String,
    shape: &[usize],
    std: f64,
    rng: &mut impl Rng,
) -> ParamId {
    store.add(name, shape, Init::TruncNormal(std), true, rng)
}

pub(crate) fn bias<T: Scalar>(store: &mut ParamStore<T>, name: String, n: usize, rng: &mut impl Rng) -> ParamId {
    store.add(name, &[n], Init::Zeros, false, rng)
}

impl BlockParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d: usize,
        heads: usize,
        ff: usize,
        activation: Activation,
        eps: f64,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut w = |n: &str, shape: &[usize], rng: &mut _| weight(store, format!("{prefix}.{n}"), shape, std, rng);
        let (wq, wk, wv, wo) = (
            w("attn.wq", &[d, d], rng),
            w("attn.wk", &[d, d], rng),
            w("attn.wv", &[d, d], rng),
            w("attn.wo", &[d, d], rng),
        );
        let (w1, w2) = (w("ffn.w1", &[d, ff], rng), w("ffn.w2", &[ff, d], rng));
        let mut b = |n: &str, len: usize, rng: &mut _| bias(store, format!("{prefix}.{n}"), len, rng);
        let (bq, bk, bv, bo) = (
            b("attn.bq", d, rng),
            b("attn.bk", d, rng),
            b("attn.bv", d, rng),
            b("attn.bo", d, rng),
        );
        let (b1, b2) = (b("ffn.b1", ff, rng), b("ffn.b2", d, rng));
        let ln1_shift = b("ln1.shift", d, rng);
        let ln2_shift = b("ln2.shift", d, rng);
        let ln1_gain = store.add(format!("{prefix}.ln1.gain"), &[d], Init::Ones, false, rng);
        let ln2_gain = store.add(format!("{prefix}.ln2.gain"), &[d], Init::Ones, false, rng);
        BlockParams {
            attn: AttentionParams {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                heads,
            },
            ln1_gain,
            ln1_shift,
            ffn: FeedForwardParams {
                w1,
                b1,
                w2,
                b2,
                activation,
            },
            ln2_gain,
            ln2_shift,
            eps,
        }
    }
}

pub(crate) fn linear<T: Scalar>(tape: &mut Tape<T>, b: &Bound, x: Var, w: ParamId, bias: ParamId) -> Result<Var> {
    let y = tape.matmul(x, b.get(w))?;
    tape.add_row(y, b.get(bias))
}

/// Scaled dot-product multi-head attention with queries from `query` and
/// keys/values from `kv`, followed by the output projection.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Bound,
    p: &AttentionParams,
    query: Var,
    kv: Var,
    mask: &AttnMask,
) -> Result<Var> {
    let (sq, d) = tape.value(query).dims2()?;
    let sk = tape.value(kv).dims2()?.0;
    if mask.rows != sq || mask.cols != sk {
        return Err(shape_err!(
            "mask {}x{} for attention {sq}x{sk}",
            mask.rows,
            mask.cols
        ));
    }
    let q = linear(tape, b, query, p.wq, p.bq)?;
    let k = linear(tape, b, kv, p.wk, p.bk)?;
    let v = linear(tape, b, kv, p.wv, p.bv)?;
    let dh = d / p.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let bias = mask.additive();
    let mut outs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let (qh, kh, vh) = if p.heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * dh, dh)?,
                tape.slice_cols(k, h * dh, dh)?,
                tape.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = tape.matmul_t(qh, kh)?;
        let scores = tape.scale(scores, scale)?;
        let scores = tape.add_const(scores, &bias)?;
        let weights = tape.softmax(scores, 1)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    linear(tape, b, cat, p.wo, p.bo)
}

pub fn feed_forward<T: Scalar>(tape: &mut Tape<T>, b: &Bound, p: &FeedForwardParams, x: Var) -> Result<Var> {
    let h = linear(tape, b, x, p.w1, p.b1)?;
    let h = match p.activation {
        Activation::Gelu => tape.gelu(h)?,
        Activation::Relu => tape.relu(h)?,
    };
    linear(tape, b, h, p.w2, p.b2)
}

/// `LN(q + MHA(q, kv))` then `LN(x + FFN(x))`.
pub fn transformer_block<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Bound,
    p: &BlockParams,
    query: Var,
    kv: Var,
    mask: &AttnMask,
) -> Result<Var> {
    let a = multi_head_attention(tape, b, &p.attn, query, kv, mask)?;
    let x = tape.add(query, a)?;
    let x = tape.layer_norm(x, b.get(p.ln1_gain), b.get(p.ln1_shift), p.eps)?;
    let f = feed_forward(tape, b, &p.ffn, x)?;
    let y = tape.add(x, f)?;
    tape.layer_norm(y, b.get(p.ln2_gain), b.get(p.ln2_shift), p.eps)
}

pub(crate) fn ensure_finite<T: Scalar>(tape: &Tape<T>, v: Var, what: &str) -> Result<()> {
    if tape.value(v).is_finite() {
        Ok(())
    } else {
        Err(ChimeError::Numeric(format!("non-finite activations in {what}")))
    }
}
