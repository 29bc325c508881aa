//! The assembled network: shared encoder, cross-passage memory, projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::data::{assemble_triple, AnswerPart, InstanceTensors, SEP};
use crate::decoder::{answer_loss, project_vocab, OutputParams, StepModel};
use crate::encoder::{encode, EncoderParams};
use crate::error::{arg_err, Result};
use crate::memory::{read_passages, MemoryParams, PassageStates, Reading};
use crate::tensor_core::{softmax, Bound, ParamStore, Scalar, Tape, Var};

#[derive(Clone, Debug)]
pub struct Chime<T: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub encoder: EncoderParams,
    pub memory: MemoryParams,
    pub output: OutputParams,
}

/// Per-passage diagnostics for one question.
#[derive(Clone, Debug, Serialize)]
pub struct PassageTrace {
    pub passage: usize,
    pub context_gate_mean: Option<f64>,
    pub answer_gate_mean: Option<f64>,
    /// Argmax token at each real Part-2 position if reading stopped here.
    pub argmax_tokens: Vec<u32>,
}

impl<T: Scalar> Chime<T> {
    /// Builds a model with parameters drawn from `ChaCha8(config.seed)`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = EncoderParams::new(&mut store, &config, rng);
        let memory = MemoryParams::new(&mut store, &config, rng);
        let output = OutputParams::new(&mut store, config.d_model, config.vocab_size, config.init_std, rng);
        Ok(Chime {
            config,
            store,
            encoder,
            memory,
            output,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.numel()
    }

    /// One assembled triple per passage.
    pub fn instances(&self, question: &[u32], passages: &[Vec<u32>], answer: AnswerPart<'_>) -> Result<Vec<InstanceTensors>> {
        if passages.is_empty() {
            return Err(arg_err!("question has no passages"));
        }
        let v = self.config.vocab_size as u32;
        let oob = question
            .iter()
            .chain(passages.iter().flatten())
            .chain(match answer {
                AnswerPart::Gold(a) | AnswerPart::Prefix(a) => a.iter(),
            })
            .find(|&&t| t >= v);
        if let Some(t) = oob {
            return Err(arg_err!("token id {t} outside vocabulary of {v}"));
        }
        passages
            .iter()
            .map(|p| assemble_triple(question, p, answer, &self.config.caps))
            .collect()
    }

    /// Encodes every passage and runs the memory.
    pub fn read(&self, tape: &mut Tape<T>, b: &Bound, instances: &[InstanceTensors], trace: bool) -> Result<Reading> {
        let states = instances
            .iter()
            .map(|x| {
                Ok(PassageStates {
                    encoded: encode(tape, b, &self.encoder, x)?,
                    context_valid: x.part1_pad_mask().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        read_passages(tape, b, &self.memory, &states, trace)
    }

    /// Teacher-forced answer loss for one question group. With
    /// `per_passage_loss`, the loss is averaged over every prefix of passages.
    pub fn loss(&self, tape: &mut Tape<T>, b: &Bound, question: &[u32], passages: &[Vec<u32>], answer: &[u32]) -> Result<Var> {
        let xs = self.instances(question, passages, AnswerPart::Gold(answer))?;
        let (targets, mask) = (&xs[0].targets, &xs[0].target_mask);
        let per_passage = self.config.per_passage_loss && xs.len() > 1;
        let reading = self.read(tape, b, &xs, per_passage)?;
        if !per_passage {
            let logits = project_vocab(tape, b, &self.output, reading.decoder_input)?;
            return answer_loss(tape, logits, targets, mask);
        }
        let mut total: Option<Var> = None;
        for step in &reading.trace {
            let logits = project_vocab(tape, b, &self.output, step.decoder_input)?;
            let l = answer_loss(tape, logits, targets, mask)?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let n = reading.trace.len() as f64;
        tape.scale(total.expect("at least one passage"), 1.0 / n)
    }

    /// Next-token distribution after `[SEP] prefix`, reading all passages.
    pub fn next_distribution(&self, question: &[u32], passages: &[Vec<u32>], prefix: &[u32]) -> Result<Vec<f64>> {
        let xs = self.instances(question, passages, AnswerPart::Prefix(prefix))?;
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape, false);
        let reading = self.read(&mut tape, &b, &xs, false)?;
        let row = tape.slice_rows(reading.decoder_input, prefix.len(), 1)?;
        let logits = project_vocab(&mut tape, &b, &self.output, row)?;
        let p = softmax(tape.value(logits), 1)?;
        Ok(p.to_f64_vec())
    }

    /// Gate statistics and per-passage readouts with Part 2 set to
    /// `[SEP] answer [SEP]`.
    pub fn trace(&self, question: &[u32], passages: &[Vec<u32>], answer: &[u32]) -> Result<Vec<PassageTrace>> {
        let cap = self.config.caps.answer;
        let answer = &answer[..answer.len().min(cap)];
        let xs = self.instances(question, passages, AnswerPart::Gold(answer))?;
        let real = xs[0].target_mask.iter().filter(|&&m| m).count();
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape, false);
        let reading = self.read(&mut tape, &b, &xs, true)?;
        let mean = |tape: &Tape<T>, v: Option<Var>| {
            v.map(|v| {
                let d = tape.value(v).data();
                d.iter().map(|x| x.as_f64()).sum::<f64>() / d.len() as f64
            })
        };
        reading
            .trace
            .iter()
            .map(|s| {
                let logits = project_vocab(&mut tape, &b, &self.output, s.decoder_input)?;
                let lv = tape.value(logits);
                let argmax_tokens = (0..real)
                    .map(|r| {
                        let row = lv.row(r);
                        let mut best = 0;
                        for (i, v) in row.iter().enumerate() {
                            if *v > row[best] {
                                best = i;
                            }
                        }
                        best as u32
                    })
                    .collect();
                Ok(PassageTrace {
                    passage: s.passage,
                    context_gate_mean: mean(&tape, s.context_gate),
                    answer_gate_mean: mean(&tape, s.answer_gate),
                    argmax_tokens,
                })
            })
            .collect()
    }

    /// Binds this model to one question for decoding.
    pub fn question<'a>(&'a self, question: &'a [u32], passages: &'a [Vec<u32>]) -> QuestionModel<'a, T> {
        QuestionModel {
            model: self,
            question,
            passages,
        }
    }
}

/// A model plus one question's inputs, ready to decode.
pub struct QuestionModel<'a, T: Scalar> {
    pub model: &'a Chime<T>,
    pub question: &'a [u32],
    pub passages: &'a [Vec<u32>],
}

impl<T: Scalar> StepModel for QuestionModel<'_, T> {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        self.model.next_distribution(self.question, self.passages, prefix)
    }
}

/// End token used by generation.
pub const END: u32 = SEP;
