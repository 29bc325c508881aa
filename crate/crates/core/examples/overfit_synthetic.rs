//! Memorizes a 32-question synthetic set, then regenerates every answer
//! with greedy decoding. Takes about half a minute in release mode.

use chime::config::ModelConfig;
use chime::data::{gen_synthetic, Caps, SynthSpec};
use chime::decoder::{greedy_decode, GenerationConfig};
use chime::tensor_core::Precision;
use chime::trainer::{TrainGroup, Trainer};

fn main() -> chime::Result<()> {
    let spec = SynthSpec::default();
    let corpus = gen_synthetic(&spec)?;
    let groups: Vec<TrainGroup> = corpus.records.iter().map(TrainGroup::from_record).collect::<Result<_, _>>()?;
    let cfg = ModelConfig {
        vocab_size: spec.vocab_size,
        caps: Caps { question: spec.max_question_len(), passage: spec.passage_len, answer: 1 },
        passages: spec.passages,
        peak_lr: 1e-3,
        epochs: 62,
        precision: Precision::F32,
        ..ModelConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(cfg, groups.clone())?;
    let total = trainer.total_steps();
    while !trainer.is_done() {
        let log = trainer.run(Some(total / 8))?;
        let avg = log.iter().map(|s| s.loss).sum::<f64>() / log.len().max(1) as f64;
        println!("step {:>5}: mean loss {avg:.4}, lr {:.2e}", trainer.step, log.last().map_or(0.0, |s| s.lr));
    }
    let gen = GenerationConfig { max_len: 1, beam_width: 1, ..GenerationConfig::default() };
    let mut hits = 0;
    for g in &groups {
        let h = greedy_decode(&trainer.model.question(&g.question, &g.passages), &gen)?;
        hits += usize::from(h.tokens == g.answer);
    }
    println!("per-token loss {:.4}, regenerated {hits}/{}", trainer.mean_loss()?, groups.len());
    Ok(())
}
