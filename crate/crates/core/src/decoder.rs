//! Vocabulary projection, teacher-forced loss, and greedy/beam decoding.

use std::cmp::Ordering;

use rand::Rng;

use crate::data::SEP;
use crate::error::{arg_err, ChimeError, Result};
use crate::nn::{bias, linear, weight};
use crate::tensor_core::{Bound, ParamId, ParamStore, Scalar, Tape, Var};

#[derive(Clone, Debug)]
pub struct OutputParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl OutputParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, d: usize, vocab: usize, std: f64, rng: &mut impl Rng) -> Self {
        OutputParams {
            w: weight(store, "output.w".into(), &[d, vocab], std, rng),
            b: bias(store, "output.b".into(), vocab, rng),
        }
    }
}

/// `M_a · W + b`, one logit row per answer position.
pub fn project_vocab<T: Scalar>(tape: &mut Tape<T>, b: &Bound, p: &OutputParams, memory: Var) -> Result<Var> {
    linear(tape, b, memory, p.w, p.b)
}

/// Mean next-token cross-entropy over positions whose target is real.
pub fn answer_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, targets: &[u32], mask: &[bool]) -> Result<Var> {
    let t: Vec<usize> = targets.iter().map(|&x| x as usize).collect();
    tape.cross_entropy(logits, &t, mask)
}

/// Anything that can score the next token given the answer so far.
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    /// Probabilities over the vocabulary; sums to one.
    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>>;
}

impl<F: Fn(&[u32]) -> Vec<f64>> StepModel for (usize, F) {
    fn vocab_size(&self) -> usize {
        self.0
    }
    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        Ok((self.1)(prefix))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenerationConfig {
    /// Body tokens emitted before giving up on the end token.
    pub max_len: usize,
    pub beam_width: usize,
    pub end_token: u32,
    /// Exponent `α` in `log p / len^α`.
    pub length_penalty: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_len: 82,
            beam_width: 3,
            end_token: SEP,
            length_penalty: 1.0,
        }
    }
}

impl GenerationConfig {
    fn check(&self, vocab: usize) -> Result<()> {
        if self.beam_width == 0 {
            return Err(arg_err!("beam width must be at least 1"));
        }
        if self.end_token as usize >= vocab {
            return Err(arg_err!("end token {} outside vocabulary of {vocab}", self.end_token));
        }
        Ok(())
    }
}

/// A decoded answer. `tokens` excludes the end token.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// Length-normalized score used for ranking.
    pub score: f64,
    /// Whether the end token was produced.
    pub finished: bool,
}

/// `log_prob / len^α`; the end token counts toward `len` when emitted.
pub fn length_normalized(log_prob: f64, len: usize, alpha: f64) -> f64 {
    log_prob / (len.max(1) as f64).powf(alpha)
}

fn finalize(tokens: Vec<u32>, log_prob: f64, finished: bool, alpha: f64) -> Hypothesis {
    let len = tokens.len() + usize::from(finished);
    Hypothesis {
        score: length_normalized(log_prob, len, alpha),
        tokens,
        log_prob,
        finished,
    }
}

fn checked_dist<M: StepModel + ?Sized>(model: &M, prefix: &[u32]) -> Result<Vec<f64>> {
    let p = model.next_distribution(prefix)?;
    if p.len() != model.vocab_size() {
        return Err(arg_err!("distribution has {} entries, vocabulary {}", p.len(), model.vocab_size()));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(ChimeError::Numeric(format!("non-finite probability after prefix {prefix:?}")));
    }
    Ok(p)
}

/// Picks the most probable token each step; ties go to the lowest id.
pub fn greedy_decode<M: StepModel + ?Sized>(model: &M, cfg: &GenerationConfig) -> Result<Hypothesis> {
    cfg.check(model.vocab_size())?;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while tokens.len() < cfg.max_len {
        let p = checked_dist(model, &tokens)?;
        let (best, &pb) = p
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (i, v)| match acc {
                Some((_, bv)) if *bv >= *v => acc,
                _ => Some((i, v)),
            })
            .expect("non-empty vocabulary");
        log_prob += pb.ln();
        if best as u32 == cfg.end_token {
            return Ok(finalize(tokens, log_prob, true, cfg.length_penalty));
        }
        tokens.push(best as u32);
    }
    Ok(finalize(tokens, log_prob, false, cfg.length_penalty))
}

fn by_logp_desc(a: &(Vec<u32>, f64), b: &(Vec<u32>, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Beam search over body tokens.
///
/// Each step expands every live hypothesis by every token and keeps the
/// `beam_width` expansions with the highest cumulative log-probability
/// (ties by token sequence). Kept expansions ending in the end token are
/// complete; the rest stay live. Hypotheses still live after `max_len`
/// tokens are completed unterminated. The result is every completed
/// hypothesis ranked by length-normalized score, best first.
pub fn beam_decode<M: StepModel + ?Sized>(model: &M, cfg: &GenerationConfig) -> Result<Vec<Hypothesis>> {
    cfg.check(model.vocab_size())?;
    let end = cfg.end_token;
    let mut alive: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut done = Vec::new();
    for _ in 0..cfg.max_len {
        if alive.is_empty() {
            break;
        }
        let mut cand = Vec::with_capacity(alive.len() * model.vocab_size());
        for (prefix, lp) in &alive {
            let p = checked_dist(model, prefix)?;
            for (tok, &pt) in p.iter().enumerate() {
                let mut seq = prefix.clone();
                seq.push(tok as u32);
                cand.push((seq, lp + pt.ln()));
            }
        }
        cand.sort_by(by_logp_desc);
        cand.truncate(cfg.beam_width);
        alive.clear();
        for (mut seq, lp) in cand {
            if *seq.last().expect("expanded") == end {
                seq.pop();
                done.push(finalize(seq, lp, true, cfg.length_penalty));
            } else {
                alive.push((seq, lp));
            }
        }
    }
    done.extend(
        alive
            .into_iter()
            .map(|(seq, lp)| finalize(seq, lp, false, cfg.length_penalty)),
    );
    if done.is_empty() {
        done.push(finalize(Vec::new(), 0.0, false, cfg.length_penalty));
    }
    done.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
    Ok(done)
}
