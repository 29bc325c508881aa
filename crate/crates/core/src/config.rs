use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Caps;
use crate::error::{arg_err, ChimeError, Result};
use crate::tensor_core::{AdamW, LrSchedule, Precision};

/// Which memory wiring to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Context memory and answer memory, answer updated from context memory.
    Full,
    /// No context memory; the answer side attends to the current passage.
    ChimeC,
    /// No answer memory; the last answer-side attention output is decoded.
    ChimeA,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" | "chime" => Ok(Variant::Full),
            "chime_c" | "chime-c" => Ok(Variant::ChimeC),
            "chime_a" | "chime-a" => Ok(Variant::ChimeA),
            o => Err(format!("unknown variant '{o}' (full|chime_c|chime_a)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::ChimeC => "chime_c",
            Variant::ChimeA => "chime_a",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Relu,
}

/// Architecture and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ff_inner: usize,
    /// Heads and inner size of the two memory-side transformer blocks.
    pub memory_heads: usize,
    pub memory_ff_inner: usize,
    pub vocab_size: usize,
    pub caps: Caps,
    /// Passages read per question (K).
    pub passages: usize,
    pub variant: Variant,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    pub init_std: f64,
    pub optimizer: AdamW,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    /// Question groups whose gradients are averaged into one optimizer step.
    pub accumulation: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Adds a decoding loss after every passage, not only the last.
    pub per_passage_loss: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            blocks: 2,
            heads: 4,
            ff_inner: 256,
            memory_heads: 4,
            memory_ff_inner: 256,
            vocab_size: 32,
            caps: Caps::default(),
            passages: 10,
            variant: Variant::Full,
            activation: Activation::Gelu,
            layer_norm_eps: 1e-5,
            init_std: 0.02,
            optimizer: AdamW::default(),
            peak_lr: 1e-5,
            warmup_fraction: 0.2,
            clip_norm: 1.0,
            epochs: 3,
            accumulation: 1,
            seed: 0,
            precision: Precision::F32,
            per_passage_loss: false,
        }
    }
}

impl ModelConfig {
    /// Full-size settings (hidden 768, 8-head memory blocks with 2048 inner).
    pub fn full_scale(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 768,
            blocks: 12,
            heads: 12,
            ff_inner: 3072,
            memory_heads: 8,
            memory_ff_inner: 2048,
            vocab_size,
            ..ModelConfig::default()
        }
    }

    pub fn part1_len(&self) -> usize {
        self.caps.part1_len()
    }

    pub fn part2_len(&self) -> usize {
        self.caps.part2_len()
    }

    pub fn seq_len(&self) -> usize {
        self.caps.total_len()
    }

    pub fn schedule(&self, total_steps: u64) -> LrSchedule {
        LrSchedule {
            peak: self.peak_lr,
            total_steps,
            warmup_fraction: self.warmup_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.memory_heads == 0 {
            return Err(arg_err!("d_model and head counts must be positive"));
        }
        if self.d_model % self.heads != 0 || self.d_model % self.memory_heads != 0 {
            return Err(arg_err!(
                "head counts {}/{} must divide d_model {}",
                self.heads,
                self.memory_heads,
                self.d_model
            ));
        }
        if self.ff_inner == 0 || self.memory_ff_inner == 0 {
            return Err(arg_err!("feed-forward sizes must be positive"));
        }
        if self.vocab_size < crate::data::RESERVED.len() {
            return Err(arg_err!("vocab_size {} below reserved count", self.vocab_size));
        }
        if self.accumulation == 0 {
            return Err(arg_err!("accumulation must be at least 1"));
        }
        if self.passages == 0 {
            return Err(arg_err!("passages must be at least 1"));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(arg_err!("layer_norm_eps must be positive"));
        }
        if !(self.warmup_fraction >= 0.0 && self.warmup_fraction <= 1.0) {
            return Err(arg_err!("warmup_fraction must lie in [0, 1]"));
        }
        if !(self.peak_lr >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(arg_err!("peak_lr must be >= 0 and clip_norm > 0"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ModelConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_json()?).map_err(|e| ChimeError::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = fs::read_to_string(path.as_ref()).map_err(|e| ChimeError::io(path.as_ref(), e))?;
        Self::from_json(&s)
    }
}
