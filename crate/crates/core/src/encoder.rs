//! Summed token/segment/position embeddings fed through a stack of
//! transformer blocks under the prefix-bidirectional, suffix-causal mask.

use std::rc::Rc;

use rand::Rng;

use crate::config::ModelConfig;
use crate::data::InstanceTensors;
use crate::error::{arg_err, Result};
use crate::nn::{ensure_finite, transformer_block, weight, AttnMask, BlockParams};
use crate::tensor_core::{Bound, ParamId, ParamStore, Scalar, Tape, Var};

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub token_emb: ParamId,
    pub segment_emb: ParamId,
    pub position_emb: ParamId,
    pub blocks: Vec<BlockParams>,
    pub d_model: usize,
    pub max_len: usize,
}

impl EncoderParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        let std = cfg.init_std;
        let token_emb = weight(store, "enc.token_emb".into(), &[cfg.vocab_size, d], std, rng);
        let segment_emb = weight(store, "enc.segment_emb".into(), &[2, d], std, rng);
        let position_emb = weight(store, "enc.position_emb".into(), &[cfg.seq_len(), d], std, rng);
        let blocks = (0..cfg.blocks)
            .map(|i| {
                BlockParams::new(
                    store,
                    &format!("enc.block{i}"),
                    d,
                    cfg.heads,
                    cfg.ff_inner,
                    cfg.activation,
                    cfg.layer_norm_eps,
                    std,
                    rng,
                )
            })
            .collect();
        EncoderParams {
            token_emb,
            segment_emb,
            position_emb,
            blocks,
            d_model: d,
            max_len: cfg.seq_len(),
        }
    }
}

/// Hidden states of one encoded instance.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// All rows, `N_x x d`.
    pub hidden: Var,
    /// Part-1 rows, `N_S1 x d`.
    pub context: Var,
    /// Part-2 rows, `N_S2 x d`.
    pub answer: Var,
}

/// `E_t(x) + E_s(x) + E_p(x)` per position.
pub fn embed<T: Scalar>(tape: &mut Tape<T>, b: &Bound, p: &EncoderParams, x: &InstanceTensors) -> Result<Var> {
    if x.len() > p.max_len {
        return Err(arg_err!("instance of length {} exceeds position table {}", x.len(), p.max_len));
    }
    let tok: Vec<usize> = x.tokens.iter().map(|&t| t as usize).collect();
    let seg: Vec<usize> = x.segments.iter().map(|&s| s as usize).collect();
    let e_t = tape.gather_rows(b.get(p.token_emb), &tok)?;
    let e_s = tape.gather_rows(b.get(p.segment_emb), &seg)?;
    let e_p = tape.gather_rows(b.get(p.position_emb), &x.positions)?;
    let sum = tape.add(e_t, e_s)?;
    tape.add(sum, e_p)
}

/// Row `i` may attend to column `j` iff `j` is a real token and either both
/// lie in Part 1, or `i` lies in Part 2 and `j` is in Part 1 or at or before
/// `i`. Part-1 queries never see Part 2.
pub fn seq2seq_mask(part1_len: usize, part2_len: usize, pad_mask: &[bool]) -> Result<AttnMask> {
    if part1_len == 0 || part2_len == 0 {
        return Err(arg_err!("both parts must be non-empty"));
    }
    let n = part1_len + part2_len;
    if pad_mask.len() != n {
        return Err(arg_err!("pad mask of length {} for {n} positions", pad_mask.len()));
    }
    let mut allow = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let visible = if i < part1_len { j < part1_len } else { j <= i };
            allow[i * n + j] = visible && pad_mask[j];
        }
    }
    Ok(AttnMask {
        rows: n,
        cols: n,
        allow,
    })
}

/// Runs the encoder. Padding rows of the output are zeroed, so nothing
/// downstream can depend on the content of padded positions.
pub fn encode<T: Scalar>(tape: &mut Tape<T>, b: &Bound, p: &EncoderParams, x: &InstanceTensors) -> Result<Encoded> {
    let mask = seq2seq_mask(x.part1_len, x.part2_len, &x.pad_mask)?;
    let mut h = embed(tape, b, p, x)?;
    ensure_finite(tape, h, "embeddings")?;
    for (i, block) in p.blocks.iter().enumerate() {
        h = transformer_block(tape, b, block, h, h, &mask)?;
        ensure_finite(tape, h, &format!("encoder block {i}"))?;
    }
    if x.pad_mask.iter().any(|&m| !m) {
        let d = p.d_model;
        let keep: Vec<f64> = x
            .pad_mask
            .iter()
            .flat_map(|&m| std::iter::repeat(if m { 1.0 } else { 0.0 }).take(d))
            .collect();
        h = tape.mul_const(h, Rc::new(keep))?;
    }
    let context = tape.slice_rows(h, 0, x.part1_len)?;
    let answer = tape.slice_rows(h, x.part1_len, x.part2_len)?;
    Ok(Encoded {
        hidden: h,
        context,
        answer,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::{assemble_triple, AnswerPart, Caps};

    fn small_cfg(blocks: usize) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            blocks,
            heads: 2,
            ff_inner: 16,
            vocab_size: 20,
            caps: Caps {
                question: 2,
                passage: 3,
                answer: 3,
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn hand_mask() {
        let m = seq2seq_mask(2, 2, &[true; 4]).unwrap();
        assert_eq!(m.to_bit_rows(), vec!["1100", "1100", "1110", "1111"]);
        let single = seq2seq_mask(3, 1, &[true; 4]).unwrap();
        assert_eq!(single.to_bit_rows()[3], "1111");
        let padded = seq2seq_mask(2, 3, &[true, true, true, true, false]).unwrap();
        assert!((0..5).all(|i| !padded.allowed(i, 4)));
        assert!(seq2seq_mask(0, 2, &[true; 2]).is_err());
    }

    #[test]
    fn zero_tables_embed_to_zero_and_single_position_sums() {
        let cfg = small_cfg(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let p = EncoderParams::new(&mut store, &cfg, &mut rng);
        let x = assemble_triple(&[5], &[6, 7], AnswerPart::Gold(&[8]), &cfg.caps).unwrap();

        let mut zeroed = store.clone();
        for id in [p.token_emb, p.segment_emb, p.position_emb] {
            zeroed.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut t = Tape::new();
        let b = zeroed.bind(&mut t, false);
        let e = embed(&mut t, &b, &p, &x).unwrap();
        assert!(t.value(e).data().iter().all(|&v| v == 0.0));

        let mut t = Tape::new();
        let b = store.bind(&mut t, false);
        let e = embed(&mut t, &b, &p, &x).unwrap();
        let row = 3; // passage token 6, segment B
        let expect: Vec<f64> = (0..cfg.d_model)
            .map(|j| {
                store.get(p.token_emb).at(&[6, j])
                    + store.get(p.segment_emb).at(&[1, j])
                    + store.get(p.position_emb).at(&[row, j])
            })
            .collect();
        assert_eq!(t.value(e).row(row), expect.as_slice());
    }

    #[test]
    fn segment_change_shifts_by_segment_difference() {
        let cfg = small_cfg(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let p = EncoderParams::new(&mut store, &cfg, &mut rng);
        let x = assemble_triple(&[5], &[6, 7], AnswerPart::Gold(&[8]), &cfg.caps).unwrap();
        let mut y = x.clone();
        y.segments[3] = 0;
        let mut t = Tape::new();
        let b = store.bind(&mut t, false);
        let ex = embed(&mut t, &b, &p, &x).unwrap();
        let ey = embed(&mut t, &b, &p, &y).unwrap();
        let seg = store.get(p.segment_emb);
        for i in 0..x.len() {
            for j in 0..cfg.d_model {
                let diff = t.value(ex).at(&[i, j]) - t.value(ey).at(&[i, j]);
                let want = if i == 3 { seg.at(&[1, j]) - seg.at(&[0, j]) } else { 0.0 };
                assert!((diff - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_blocks_is_identity_and_shape_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = assemble_triple(&[5, 9], &[6, 7, 4], AnswerPart::Gold(&[8, 9, 10]), &small_cfg(0).caps).unwrap();
        for blocks in [0, 2] {
            let cfg = small_cfg(blocks);
            let mut store = ParamStore::<f64>::new();
            let p = EncoderParams::new(&mut store, &cfg, &mut rng);
            let mut t = Tape::new();
            let b = store.bind(&mut t, false);
            let enc = encode(&mut t, &b, &p, &x).unwrap();
            assert_eq!(t.shape(enc.hidden), &[x.len(), cfg.d_model]);
            assert_eq!(t.shape(enc.context), &[x.part1_len, cfg.d_model]);
            assert_eq!(t.shape(enc.answer), &[x.part2_len, cfg.d_model]);
            if blocks == 0 {
                let e = embed(&mut t, &b, &p, &x).unwrap();
                assert_eq!(t.value(enc.hidden), t.value(e));
            }
        }
    }

    #[test]
    fn later_answer_tokens_do_not_leak_backwards() {
        let cfg = small_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let p = EncoderParams::new(&mut store, &cfg, &mut rng);
        let x = assemble_triple(&[5, 9], &[6, 7, 4], AnswerPart::Gold(&[8, 9, 10]), &cfg.caps).unwrap();
        let t_pos = x.part1_len + 2;
        let mut y = x.clone();
        y.tokens[t_pos] = 13;
        let mut t = Tape::new();
        let b = store.bind(&mut t, false);
        let hx = encode(&mut t, &b, &p, &x).unwrap().hidden;
        let hy = encode(&mut t, &b, &p, &y).unwrap().hidden;
        for i in 0..t_pos {
            assert_eq!(t.value(hx).row(i), t.value(hy).row(i), "row {i}");
        }
        assert_ne!(t.value(hx).row(t_pos), t.value(hy).row(t_pos));
    }

    #[test]
    fn non_finite_parameters_name_the_stage() {
        let cfg = small_cfg(1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::<f64>::new();
        let p = EncoderParams::new(&mut store, &cfg, &mut rng);
        let ff = p.blocks[0].ffn.b2;
        store.get_mut(ff).data_mut()[0] = f64::NAN;
        let x = assemble_triple(&[5], &[6], AnswerPart::Gold(&[8]), &cfg.caps).unwrap();
        let mut t = Tape::new();
        let b = store.bind(&mut t, false);
        let err = encode(&mut t, &b, &p, &x).unwrap_err().to_string();
        assert!(err.contains("encoder block 0"), "{err}");
    }
}
