//! Trains briefly on the synthetic key-lookup task and prints how the gates
//! and the intermediate answer evolve as passages are read.

use chime::config::ModelConfig;
use chime::data::{gen_synthetic, Caps, SynthSpec, SynthTask};
use chime::tensor_core::Precision;
use chime::trainer::{TrainGroup, Trainer};

fn main() -> chime::Result<()> {
    let spec = SynthSpec { seed: 3, questions: 16, passages: 4, task: SynthTask::KeyLookup, ..SynthSpec::default() };
    let corpus = gen_synthetic(&spec)?;
    let groups: Vec<TrainGroup> = corpus.records.iter().map(TrainGroup::from_record).collect::<Result<_, _>>()?;
    let cfg = ModelConfig {
        vocab_size: spec.vocab_size,
        caps: Caps { question: 6, passage: spec.passage_len, answer: 1 },
        passages: spec.passages,
        peak_lr: 1e-3,
        epochs: 60,
        precision: Precision::F32,
        ..ModelConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(cfg, groups.clone())?;
    trainer.run(None)?;
    println!("mean loss after training: {:.4}", trainer.mean_loss()?);

    let g = &groups[0];
    println!("question: {}", corpus.vocab.decode(&g.question));
    for (k, p) in g.passages.iter().enumerate() {
        println!("  passage {k}: {}", corpus.vocab.decode(p));
    }
    println!("gold: {}", corpus.vocab.decode(&g.answer));
    for step in trainer.model.trace(&g.question, &g.passages, &g.answer)? {
        let fmt = |g: Option<f64>| g.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "after passage {}: context gate {}, answer gate {}, argmax {}",
            step.passage,
            fmt(step.context_gate_mean),
            fmt(step.answer_gate_mean),
            corpus.vocab.decode(&step.argmax_tokens)
        );
    }
    Ok(())
}
