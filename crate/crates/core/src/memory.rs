//! Cross-passage hierarchical memory.
//!
//! After the first passage both memories are the encoder states. For every
//! later passage the context memory is updated first,
//!
//! ```text
//! Z_c = Block(M_c, H_c)            G_c = σ(M_c W_mc + Z_c W_zc + b_c)
//! M_c = G_c ⊙ M_c + (1 - G_c) ⊙ H_c
//! ```
//!
//! and the answer memory second, reading the fresh context memory:
//!
//! ```text
//! Z_a = Block(H_a, M_c)            G_a = σ(H_a W_ha + Z_a W_za + b_a)
//! M_a = G_a ⊙ H_a + (1 - G_a) ⊙ M_a
//! ```
//!
//! `Block(q, kv)` is a one-block transformer whose queries come from `q` and
//! keys/values from `kv`. Gate weights are `d x d` and applied per position;
//! one parameter set is shared by every passage index.

use rand::Rng;

use crate::config::{ModelConfig, Variant};
use crate::encoder::Encoded;
use crate::error::{arg_err, Result};
use crate::nn::{bias, ensure_finite, transformer_block, weight, AttnMask, BlockParams};
use crate::tensor_core::{Bound, ParamId, ParamStore, Scalar, Tape, Var};

#[derive(Clone, Debug)]
pub struct GateParams {
    /// Weight on the retained/current state (`W_mc` or `W_ha`).
    pub w_state: ParamId,
    /// Weight on the attention summary (`W_zc` or `W_za`).
    pub w_summary: ParamId,
    pub bias: ParamId,
}

impl GateParams {
    fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, d: usize, std: f64, rng: &mut impl Rng) -> Self {
        GateParams {
            w_state: weight(store, format!("{prefix}.w_state"), &[d, d], std, rng),
            w_summary: weight(store, format!("{prefix}.w_summary"), &[d, d], std, rng),
            bias: bias(store, format!("{prefix}.bias"), d, rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MemoryParams {
    pub variant: Variant,
    /// Absent under [`Variant::ChimeC`].
    pub context_block: Option<BlockParams>,
    pub context_gate: Option<GateParams>,
    pub answer_block: BlockParams,
    /// Absent under [`Variant::ChimeA`].
    pub answer_gate: Option<GateParams>,
}

impl MemoryParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        let block = |name: &str, store: &mut ParamStore<T>, rng: &mut _| {
            BlockParams::new(
                store,
                name,
                d,
                cfg.memory_heads,
                cfg.memory_ff_inner,
                cfg.activation,
                cfg.layer_norm_eps,
                cfg.init_std,
                rng,
            )
        };
        let has_context = cfg.variant != Variant::ChimeC;
        let context_block = has_context.then(|| block("mem.context", store, rng));
        let answer_block = block("mem.answer", store, rng);
        let context_gate = has_context.then(|| GateParams::new(store, "mem.context_gate", d, cfg.init_std, rng));
        let answer_gate = (cfg.variant != Variant::ChimeA)
            .then(|| GateParams::new(store, "mem.answer_gate", d, cfg.init_std, rng));
        MemoryParams {
            variant: cfg.variant,
            context_block,
            context_gate,
            answer_block,
            answer_gate,
        }
    }
}

/// Memory contents after reading `passages_read` passages.
#[derive(Clone, Copy, Debug)]
pub struct MemoryState {
    /// `N_S1 x d`. Under CHIME-c this is the latest context states.
    pub context: Var,
    /// `N_S2 x d`. Under CHIME-a this is the latest answer-side summary.
    pub answer: Var,
    pub passages_read: usize,
}

/// Snapshot after one passage.
#[derive(Clone, Copy, Debug)]
pub struct StepTrace {
    pub passage: usize,
    /// What the decoder would read if reading stopped here.
    pub decoder_input: Var,
    pub context_gate: Option<Var>,
    pub answer_gate: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Reading {
    pub state: MemoryState,
    /// `N_S2 x d` rows handed to the vocabulary projection.
    pub decoder_input: Var,
    /// One entry per passage when tracing, otherwise empty.
    pub trace: Vec<StepTrace>,
}

/// Encoder output for one passage plus which Part-1 rows are real tokens.
#[derive(Clone, Debug)]
pub struct PassageStates {
    pub encoded: Encoded,
    pub context_valid: Vec<bool>,
}

fn check_same<T: Scalar>(tape: &Tape<T>, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(arg_err!("{what}: {:?} vs {:?}", tape.shape(a), tape.shape(b)));
    }
    Ok(())
}

/// One-block transformer with queries from `query` and keys/values from the
/// rows of `kv` where `kv_valid` holds. Output has the query's shape.
pub fn cross_attend<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Bound,
    block: &BlockParams,
    query: Var,
    kv: Var,
    kv_valid: &[bool],
) -> Result<Var> {
    let (sq, d) = tape.value(query).dims2()?;
    let (sk, dk) = tape.value(kv).dims2()?;
    if d != dk || kv_valid.len() != sk {
        return Err(arg_err!("cross_attend query {sq}x{d}, kv {sk}x{dk}, {} validity flags", kv_valid.len()));
    }
    if !kv_valid.iter().any(|&v| v) {
        return Err(arg_err!("cross_attend with no valid key rows"));
    }
    let mask = AttnMask::keys_only(sq, kv_valid);
    let z = transformer_block(tape, b, block, query, kv, &mask)?;
    ensure_finite(tape, z, "memory attention block")?;
    Ok(z)
}

/// `σ(state · W_state + summary · W_summary + bias)`, position-wise.
pub fn gate<T: Scalar>(tape: &mut Tape<T>, b: &Bound, p: &GateParams, state: Var, summary: Var) -> Result<Var> {
    check_same(tape, state, summary, "gate inputs")?;
    let x = tape.matmul(state, b.get(p.w_state))?;
    let y = tape.matmul(summary, b.get(p.w_summary))?;
    let s = tape.add(x, y)?;
    let s = tape.add_row(s, b.get(p.bias))?;
    tape.sigmoid(s)
}

/// `g ⊙ first + (1 - g) ⊙ second`
pub fn convex_mix<T: Scalar>(tape: &mut Tape<T>, g: Var, first: Var, second: Var) -> Result<Var> {
    check_same(tape, first, second, "mix sources")?;
    check_same(tape, g, first, "gate vs source")?;
    let a = tape.mul(g, first)?;
    let inv = tape.one_minus(g)?;
    let c = tape.mul(inv, second)?;
    tape.add(a, c)
}

#[derive(Clone, Copy, Debug)]
pub struct GatedUpdate {
    pub memory: Var,
    pub gate: Var,
}

fn need<'a, P>(p: &'a Option<P>, what: &str) -> Result<&'a P> {
    p.as_ref()
        .ok_or_else(|| arg_err!("this variant has no {what}"))
}

/// Context update: retained memory weighted by the gate.
pub fn update_context<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Bound,
    p: &MemoryParams,
    prev: Var,
    hidden: Var,
    hidden_valid: &[bool],
) -> Result<GatedUpdate> {
    check_same(tape, prev, hidden, "update_context")?;
    let block = need(&p.context_block, "context memory")?;
    let gp = need(&p.context_gate, "context gate")?;
    let z = cross_attend(tape, b, block, prev, hidden, hidden_valid)?;
    let g = gate(tape, b, gp, prev, z)?;
    Ok(GatedUpdate {
        memory: convex_mix(tape, g, prev, hidden)?,
        gate: g,
    })
}

/// Answer update: current answer states weighted by the gate. `source` is the
/// fresh context memory (full model) or the current context states (CHIME-c).
pub fn update_answer<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Bound,
    p: &MemoryParams,
    prev: Var,
    hidden: Var,
    source: Var,
    source_valid: &[bool],
) -> Result<GatedUpdate> {
    check_same(tape, prev, hidden, "update_answer")?;
    let gp = need(&p.answer_gate, "answer memory")?;
    let z = cross_attend(tape, b, &p.answer_block, hidden, source, source_valid)?;
    let g = gate(tape, b, gp, hidden, z)?;
    Ok(GatedUpdate {
        memory: convex_mix(tape, g, hidden, prev)?,
        gate: g,
    })
}

/// Reads passages in order and returns the final memories. With `trace`,
/// also records what the decoder would see after each passage.
pub fn read_passages<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Bound,
    p: &MemoryParams,
    passages: &[PassageStates],
    trace: bool,
) -> Result<Reading> {
    let first = passages.first().ok_or_else(|| arg_err!("read_passages needs at least one passage"))?;
    let variant = p.variant;
    let mut steps = Vec::new();

    let mut m_c = first.encoded.context;
    let mut m_a = first.encoded.answer;
    let mut valid = first.context_valid.clone();

    let summarize = |tape: &mut Tape<T>, h_a: Var, m_c: Var, valid: &[bool]| {
        cross_attend(tape, b, &p.answer_block, h_a, m_c, valid)
    };

    let last = passages.len() - 1;
    let mut decoder_input = if variant == Variant::ChimeA && (trace || last == 0) {
        summarize(tape, m_a, m_c, &valid)?
    } else {
        m_a
    };
    if trace {
        steps.push(StepTrace {
            passage: 1,
            decoder_input,
            context_gate: None,
            answer_gate: None,
        });
    }

    for (k, ps) in passages.iter().enumerate().skip(1) {
        let (h_c, h_a) = (ps.encoded.context, ps.encoded.answer);
        let mut context_gate = None;
        let mut answer_gate = None;
        match variant {
            Variant::Full => {
                let c = update_context(tape, b, p, m_c, h_c, &ps.context_valid)?;
                m_c = c.memory;
                context_gate = Some(c.gate);
                valid.iter_mut().zip(&ps.context_valid).for_each(|(v, &n)| *v |= n);
                let a = update_answer(tape, b, p, m_a, h_a, m_c, &valid)?;
                m_a = a.memory;
                answer_gate = Some(a.gate);
                decoder_input = m_a;
            }
            Variant::ChimeC => {
                m_c = h_c;
                let a = update_answer(tape, b, p, m_a, h_a, h_c, &ps.context_valid)?;
                m_a = a.memory;
                answer_gate = Some(a.gate);
                decoder_input = m_a;
            }
            Variant::ChimeA => {
                let c = update_context(tape, b, p, m_c, h_c, &ps.context_valid)?;
                m_c = c.memory;
                context_gate = Some(c.gate);
                valid.iter_mut().zip(&ps.context_valid).for_each(|(v, &n)| *v |= n);
                if trace || k == last {
                    decoder_input = summarize(tape, h_a, m_c, &valid)?;
                }
                m_a = decoder_input;
            }
        }
        if trace {
            steps.push(StepTrace {
                passage: k + 1,
                decoder_input,
                context_gate,
                answer_gate,
            });
        }
    }
    if variant == Variant::ChimeA {
        m_a = decoder_input;
    }
    Ok(Reading {
        state: MemoryState {
            context: m_c,
            answer: m_a,
            passages_read: passages.len(),
        },
        decoder_input,
        trace: steps,
    })
}
