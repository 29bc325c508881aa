//! Training loop, metrics log, and checkpoints.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::QaRecord;
use crate::error::{arg_err, ChimeError, Result};
use crate::model::Chime;
use crate::tensor_core::{adamw_step, clip_global_norm, OptimState, Precision, Scalar, Tape, Tensor};

/// One question with its passages and the answer used for teacher forcing.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainGroup {
    pub id: String,
    pub question: Vec<u32>,
    pub passages: Vec<Vec<u32>>,
    pub answer: Vec<u32>,
}

impl TrainGroup {
    /// Uses the vote-selected best answer.
    pub fn from_record(r: &QaRecord) -> Result<Self> {
        Ok(TrainGroup {
            id: r.id.clone(),
            question: r.question.clone(),
            passages: r.passages.clone(),
            answer: r.best_answer()?.to_vec(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

pub fn write_metrics_csv(path: impl AsRef<Path>, log: &[StepLog]) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| ChimeError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut put = |s: String| w.write_all(s.as_bytes()).map_err(|e| ChimeError::io(path, e));
    put("step,lr,loss,grad_norm\n".into())?;
    for l in log {
        put(format!("{},{:e},{},{}\n", l.step, l.lr, l.loss, l.grad_norm))?;
    }
    w.flush().map_err(|e| ChimeError::io(path, e))
}

/// Owns the model, optimizer state, and data order.
pub struct Trainer<T: Scalar> {
    pub model: Chime<T>,
    pub optim: OptimState<T>,
    pub step: u64,
    pub epoch: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    data: Vec<TrainGroup>,
}

impl<T: Scalar> Trainer<T> {
    /// Parameters and the epoch shuffles both come from `ChaCha8(config.seed)`.
    pub fn new(config: ModelConfig, data: Vec<TrainGroup>) -> Result<Self> {
        if data.is_empty() {
            return Err(arg_err!("training set is empty"));
        }
        check_precision::<T>(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Chime::with_rng(config, &mut rng)?;
        let optim = OptimState::new(&model.store.tensors());
        let n = data.len();
        Ok(Trainer {
            model,
            optim,
            step: 0,
            epoch: 0,
            rng,
            order: (0..n).collect(),
            cursor: n,
            data,
        })
    }

    /// Continues from a checkpoint. `data` must be the set it was trained on.
    pub fn resume(ckpt: Checkpoint<T>, data: Vec<TrainGroup>) -> Result<Self> {
        if data.len() != ckpt.order.len() {
            return Err(ChimeError::Incompatible(format!(
                "checkpoint was trained on {} groups, got {}",
                ckpt.order.len(),
                data.len()
            )));
        }
        let mut model = Chime::new(ckpt.config.clone())?;
        model.store.load_tensors(ckpt.params)?;
        Ok(Trainer {
            model,
            optim: ckpt.optim,
            step: ckpt.step,
            epoch: ckpt.epoch,
            rng: ckpt.rng,
            order: ckpt.order,
            cursor: ckpt.cursor,
            data,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.data.len().div_ceil(self.config().accumulation) as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_epoch() * self.config().epochs as u64
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total_steps()
    }

    /// Indices of the groups for the next optimizer step. A step never
    /// spans two epochs.
    fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.config().accumulation).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// Loss and parameter gradients for one group.
    pub fn group_gradients(&self, g: &TrainGroup) -> Result<(f64, Vec<Vec<T>>)> {
        let mut tape = Tape::new();
        let b = self.model.store.bind(&mut tape, true);
        let loss = self.model.loss(&mut tape, &b, &g.question, &g.passages, &g.answer)?;
        let value = tape.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(ChimeError::Numeric(format!(
                "non-finite loss {value} at step {} on question {}",
                self.step, g.id
            )));
        }
        let mut grads = tape.backward(loss)?;
        let out = b
            .vars()
            .iter()
            .zip(self.model.store.params())
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| vec![T::zero(); p.tensor.len()]))
            .collect();
        Ok((value, out))
    }

    /// One optimizer step: forward/backward over the next group(s), clip,
    /// AdamW with the scheduled learning rate.
    pub fn step_once(&mut self) -> Result<StepLog> {
        let total = self.total_steps();
        if self.step >= total {
            return Err(arg_err!("training already finished ({total} steps)"));
        }
        let lr = self.config().schedule(total).at(self.step)?;
        let batch = self.next_batch();
        let mut loss = 0.0;
        let mut sum: Option<Vec<Vec<T>>> = None;
        for &i in &batch {
            let (l, g) = self.group_gradients(&self.data[i])?;
            loss += l;
            sum = Some(match sum {
                None => g,
                Some(mut acc) => {
                    for (a, b) in acc.iter_mut().zip(g) {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + y);
                    }
                    acc
                }
            });
        }
        let n = batch.len() as f64;
        let mut grads = sum.expect("non-empty batch");
        if batch.len() > 1 {
            let inv = T::of(1.0 / n);
            grads.iter_mut().flatten().for_each(|x| *x = *x * inv);
        }
        let grad_norm = {
            let mut views: Vec<&mut [T]> = grads.iter_mut().map(Vec::as_mut_slice).collect();
            clip_global_norm(&mut views, self.config().clip_norm)?
        };
        let hp = self.config().optimizer.clone();
        let decay: Vec<bool> = self.model.store.params().iter().map(|p| p.decay).collect();
        let params = self.model.store.params_mut();
        for (p, g) in params.iter_mut().zip(grads) {
            p.tensor.set_grad(g)?;
        }
        let mut tensors: Vec<&mut Tensor<T>> = params.iter_mut().map(|p| &mut p.tensor).collect();
        adamw_step(&mut tensors, &decay, &mut self.optim, lr, &hp)?;
        self.model.store.zero_grad();
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            lr,
            loss: loss / n,
            grad_norm,
        })
    }

    /// Runs up to `max_steps` more steps (or to the end of training).
    pub fn run(&mut self, max_steps: Option<u64>) -> Result<Vec<StepLog>> {
        let mut log = Vec::new();
        let stop = max_steps.map_or(u64::MAX, |m| self.step.saturating_add(m));
        while !self.is_done() && self.step < stop {
            let l = self.step_once()?;
            log::debug!("step {} lr {:.3e} loss {:.5} grad_norm {:.4}", l.step, l.lr, l.loss, l.grad_norm);
            log.push(l);
        }
        Ok(log)
    }

    /// Mean loss over every training group without updating anything.
    pub fn mean_loss(&self) -> Result<f64> {
        let mut total = 0.0;
        for g in &self.data {
            let mut tape = Tape::new();
            let b = self.model.store.bind(&mut tape, false);
            let l = self.model.loss(&mut tape, &b, &g.question, &g.passages, &g.answer)?;
            total += tape.value(l).data()[0].as_f64();
        }
        Ok(total / self.data.len() as f64)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            config: self.model.config.clone(),
            names: self.model.store.params().iter().map(|p| p.name.clone()).collect(),
            params: self.model.store.tensors(),
            optim: self.optim.clone(),
            step: self.step,
            epoch: self.epoch,
            order: self.order.clone(),
            cursor: self.cursor,
            rng: self.rng.clone(),
        }
    }
}

fn check_precision<T: Scalar>(config: &ModelConfig) -> Result<()> {
    if config.precision != T::PRECISION {
        return Err(ChimeError::Incompatible(format!(
            "config asks for {:?} but the trainer runs at {:?}",
            config.precision,
            T::PRECISION
        )));
    }
    Ok(())
}

/// Trains from scratch to the end of the schedule.
pub fn train<T: Scalar>(config: ModelConfig, data: Vec<TrainGroup>) -> Result<(Checkpoint<T>, Vec<StepLog>)> {
    let mut t = Trainer::new(config, data)?;
    let log = t.run(None)?;
    Ok((t.checkpoint(), log))
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CHIMECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Scalar> {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor<T>>,
    pub optim: OptimState<T>,
    pub step: u64,
    pub epoch: usize,
    pub order: Vec<usize>,
    pub cursor: usize,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

/// JSON header stored after the magic bytes and version.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub precision: Precision,
    pub step: u64,
    pub adam_t: u64,
    pub epoch: usize,
    pub order: Vec<usize>,
    pub cursor: usize,
    rng: ChaCha8Rng,
    tensors: Vec<TensorMeta>,
}

fn incompatible(path: &Path, msg: impl std::fmt::Display) -> ChimeError {
    ChimeError::Incompatible(format!("{}: {msg}", path.display()))
}

/// Reads magic, version and header; returns the header and remaining bytes.
fn read_header(path: &Path) -> Result<(CheckpointHeader, Vec<u8>)> {
    let mut f = fs::File::open(path).map_err(|e| ChimeError::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| ChimeError::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(incompatible(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(incompatible(
            path,
            format!("checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}"),
        ));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.split_off(20);
    if body.len() < hlen {
        return Err(incompatible(path, "truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| incompatible(path, format!("bad header: {e}")))?;
    Ok((header, body[hlen..].to_vec()))
}

/// Header only; useful for picking the precision before a full load.
pub fn peek_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    read_header(path.as_ref()).map(|(h, _)| h)
}

impl<T: Scalar> Checkpoint<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = CheckpointHeader {
            config: self.config.clone(),
            precision: T::PRECISION,
            step: self.step,
            adam_t: self.optim.t,
            epoch: self.epoch,
            order: self.order.clone(),
            cursor: self.cursor,
            rng: self.rng.clone(),
            tensors: self
                .names
                .iter()
                .zip(&self.params)
                .map(|(n, t)| TensorMeta {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let blocks = self
            .params
            .iter()
            .map(Tensor::data)
            .chain(self.optim.m.iter().map(Vec::as_slice))
            .chain(self.optim.v.iter().map(Vec::as_slice));
        for block in blocks {
            for &x in block {
                x.write_le(&mut out);
            }
        }
        fs::write(path, out).map_err(|e| ChimeError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (h, body) = read_header(path)?;
        if h.precision != T::PRECISION {
            return Err(incompatible(
                path,
                format!("stored at {:?}, requested {:?}", h.precision, T::PRECISION),
            ));
        }
        let sizes: Vec<usize> = h.tensors.iter().map(|t| t.shape.iter().product()).collect();
        let n: usize = sizes.iter().sum();
        if body.len() != 3 * n * T::BYTES {
            return Err(incompatible(
                path,
                format!("payload has {} bytes, header describes {}", body.len(), 3 * n * T::BYTES),
            ));
        }
        let mut chunks = body.chunks_exact(T::BYTES).map(T::read_le);
        let mut take = |k: usize| -> Vec<T> { chunks.by_ref().take(k).collect() };
        let mut params = Vec::with_capacity(sizes.len());
        for t in &h.tensors {
            params.push(Tensor::new(t.shape.clone(), take(t.shape.iter().product()))?.with_grad());
        }
        let m = sizes.iter().map(|&k| take(k)).collect();
        let v = sizes.iter().map(|&k| take(k)).collect();
        let ckpt = Checkpoint {
            names: h.tensors.into_iter().map(|t| t.name).collect(),
            config: h.config,
            params,
            optim: OptimState { m, v, t: h.adam_t },
            step: h.step,
            epoch: h.epoch,
            order: h.order,
            cursor: h.cursor,
            rng: h.rng,
        };
        ckpt.check_layout()?;
        Ok(ckpt)
    }

    /// The stored tensors must match what the stored config builds.
    fn check_layout(&self) -> Result<()> {
        let fresh = Chime::<T>::new(self.config.clone())?;
        let want = fresh.store.params();
        if want.len() != self.params.len() {
            return Err(ChimeError::Incompatible(format!(
                "config builds {} tensors, checkpoint holds {}",
                want.len(),
                self.params.len()
            )));
        }
        for ((p, name), t) in want.iter().zip(&self.names).zip(&self.params) {
            if &p.name != name || p.tensor.shape() != t.shape() {
                return Err(ChimeError::Incompatible(format!(
                    "tensor {name} {:?} does not match {} {:?}",
                    t.shape(),
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        Ok(())
    }

    /// Errors unless `config` describes the same network as this checkpoint.
    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        let a = &self.config;
        let diffs: Vec<String> = [
            ("d_model", a.d_model, config.d_model),
            ("blocks", a.blocks, config.blocks),
            ("heads", a.heads, config.heads),
            ("ff_inner", a.ff_inner, config.ff_inner),
            ("memory_heads", a.memory_heads, config.memory_heads),
            ("memory_ff_inner", a.memory_ff_inner, config.memory_ff_inner),
            ("vocab_size", a.vocab_size, config.vocab_size),
            ("question cap", a.caps.question, config.caps.question),
            ("passage cap", a.caps.passage, config.caps.passage),
            ("answer cap", a.caps.answer, config.caps.answer),
        ]
        .iter()
        .filter(|(_, x, y)| x != y)
        .map(|(n, x, y)| format!("{n} {x} vs {y}"))
        .collect();
        let mut diffs = diffs;
        if a.variant != config.variant {
            diffs.push(format!("variant {} vs {}", a.variant, config.variant));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(ChimeError::Incompatible(format!("checkpoint/config mismatch: {}", diffs.join(", "))))
        }
    }

    /// A model carrying the stored parameters.
    pub fn into_model(self) -> Result<Chime<T>> {
        let mut model = Chime::new(self.config)?;
        model.store.load_tensors(self.params)?;
        Ok(model)
    }
}
