use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

use super::vocab::{CLS, PAD, SEP};

pub const SEGMENT_A: u8 = 0;
pub const SEGMENT_B: u8 = 1;

/// Token caps that fix the two part lengths of every assembled instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub question: usize,
    pub passage: usize,
    pub answer: usize,
}

impl Caps {
    /// `[CLS] question [SEP] passage`
    pub fn part1_len(&self) -> usize {
        self.question + self.passage + 2
    }

    /// `[SEP] answer [SEP]`
    pub fn part2_len(&self) -> usize {
        self.answer + 2
    }

    pub fn total_len(&self) -> usize {
        self.part1_len() + self.part2_len()
    }
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            question: 40,
            passage: 124,
            answer: 82,
        }
    }
}

/// What goes into Part 2.
#[derive(Clone, Copy, Debug)]
pub enum AnswerPart<'a> {
    /// Teacher forcing: `[SEP] answer [SEP]`, with next-token targets.
    Gold(&'a [u32]),
    /// Generation: `[SEP] prefix`, no targets.
    Prefix(&'a [u32]),
}

/// Model-ready arrays for one (question, passage, answer) triple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceTensors {
    pub tokens: Vec<u32>,
    pub segments: Vec<u8>,
    pub positions: Vec<usize>,
    pub part1_len: usize,
    pub part2_len: usize,
    /// True at real tokens, false at padding.
    pub pad_mask: Vec<bool>,
    /// Next-token target for each Part-2 position.
    pub targets: Vec<u32>,
    pub target_mask: Vec<bool>,
}

impl InstanceTensors {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn part1_pad_mask(&self) -> &[bool] {
        &self.pad_mask[..self.part1_len]
    }

    pub fn part2_pad_mask(&self) -> &[bool] {
        &self.pad_mask[self.part1_len..]
    }

    /// Number of real Part-2 tokens.
    pub fn part2_real(&self) -> usize {
        self.part2_pad_mask().iter().filter(|&&m| m).count()
    }

    /// Checks the layout invariants; used by tests and by the trainer.
    pub fn check(&self, caps: &Caps) -> Result<()> {
        let n = self.tokens.len();
        if self.part1_len != caps.part1_len() || self.part2_len != caps.part2_len() {
            return Err(arg_err!("part lengths differ from caps"));
        }
        if n != self.part1_len + self.part2_len
            || self.segments.len() != n
            || self.positions.len() != n
            || self.pad_mask.len() != n
            || self.targets.len() != self.part2_len
            || self.target_mask.len() != self.part2_len
        {
            return Err(arg_err!("array lengths inconsistent"));
        }
        if self.tokens[0] != CLS || self.tokens[self.part1_len] != SEP {
            return Err(arg_err!("missing [CLS] or Part-2 [SEP]"));
        }
        for (i, (&t, &m)) in self.tokens.iter().zip(&self.pad_mask).enumerate() {
            if m == (t == PAD) {
                return Err(arg_err!("pad mask disagrees with token at {i}"));
            }
        }
        if self.positions.iter().enumerate().any(|(i, &p)| p != i) {
            return Err(arg_err!("positions not 0..n"));
        }
        Ok(())
    }
}

/// Lays out `[CLS] q [SEP] r [PAD].. | [SEP] a [SEP] [PAD]..`.
///
/// Segments are A over `[CLS] q [SEP]`, B over the passage (and its padding),
/// A over Part 2. Targets are Part 2 shifted left by one; only positions whose
/// target is a real token count toward the loss.
pub fn assemble_triple(
    question: &[u32],
    passage: &[u32],
    answer: AnswerPart<'_>,
    caps: &Caps,
) -> Result<InstanceTensors> {
    if question.len() > caps.question {
        return Err(arg_err!("question of {} tokens over cap {}", question.len(), caps.question));
    }
    if passage.len() > caps.passage {
        return Err(arg_err!("passage of {} tokens over cap {}", passage.len(), caps.passage));
    }
    let (n1, n2) = (caps.part1_len(), caps.part2_len());

    let mut tokens = Vec::with_capacity(n1 + n2);
    let mut segments = Vec::with_capacity(n1 + n2);
    tokens.push(CLS);
    tokens.extend_from_slice(question);
    tokens.push(SEP);
    segments.resize(tokens.len(), SEGMENT_A);
    tokens.extend_from_slice(passage);
    tokens.resize(n1, PAD);
    segments.resize(n1, SEGMENT_B);

    let mut part2 = vec![SEP];
    let gold = match answer {
        AnswerPart::Gold(a) => {
            if a.len() > caps.answer {
                return Err(arg_err!("answer of {} tokens over cap {}", a.len(), caps.answer));
            }
            part2.extend_from_slice(a);
            part2.push(SEP);
            true
        }
        AnswerPart::Prefix(p) => {
            if p.len() + 1 > n2 {
                return Err(arg_err!("prefix of {} tokens does not fit Part 2 of {n2}", p.len()));
            }
            part2.extend_from_slice(p);
            false
        }
    };
    let real2 = part2.len();
    part2.resize(n2, PAD);

    let mut targets = vec![PAD; n2];
    let mut target_mask = vec![false; n2];
    if gold {
        for i in 0..real2 - 1 {
            targets[i] = part2[i + 1];
            target_mask[i] = true;
        }
    }
    tokens.extend_from_slice(&part2);
    segments.resize(n1 + n2, SEGMENT_A);
    let pad_mask = tokens.iter().map(|&t| t != PAD).collect();

    Ok(InstanceTensors {
        positions: (0..tokens.len()).collect(),
        tokens,
        segments,
        part1_len: n1,
        part2_len: n2,
        pad_mask,
        targets,
        target_mask,
    })
}
