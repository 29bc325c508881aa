//! Trains the full model and both ablations on the majority-opinion task
//! and reports held-out exact match. Arguments: `[epochs] [seeds]`.

use chime::config::{ModelConfig, Variant};
use chime::data::{gen_synthetic, Caps, SynthSpec, SynthTask};
use chime::decoder::{greedy_decode, GenerationConfig};
use chime::tensor_core::Precision;
use chime::trainer::{TrainGroup, Trainer};

fn groups(seed: u64, n: usize) -> chime::Result<Vec<TrainGroup>> {
    let spec = SynthSpec { seed, questions: n, task: SynthTask::Majority, ..SynthSpec::default() };
    gen_synthetic(&spec)?.records.iter().map(TrainGroup::from_record).collect()
}

fn main() -> chime::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(15);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let (train, test) = (groups(100, 200)?, groups(200, 50)?);
    let gen = GenerationConfig { max_len: 1, beam_width: 1, ..GenerationConfig::default() };

    for variant in [Variant::Full, Variant::ChimeC, Variant::ChimeA] {
        let mut scores = Vec::new();
        for seed in 0..seeds {
            let cfg = ModelConfig {
                d_model: 32,
                ff_inner: 128,
                memory_ff_inner: 128,
                vocab_size: 32,
                caps: Caps { question: 4, passage: 6, answer: 1 },
                passages: 5,
                variant,
                peak_lr: 2e-3,
                epochs,
                seed,
                precision: Precision::F32,
                ..ModelConfig::default()
            };
            let mut t = Trainer::<f32>::new(cfg, train.clone())?;
            t.run(None)?;
            let hits = test
                .iter()
                .filter(|g| {
                    greedy_decode(&t.model.question(&g.question, &g.passages), &gen)
                        .map(|h| h.tokens == g.answer)
                        .unwrap_or(false)
                })
                .count();
            scores.push(100.0 * hits as f64 / test.len() as f64);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        println!("{variant:<8} params {:>7}  exact match {mean:.1}%  {scores:?}", {
            let cfg = ModelConfig { d_model: 32, ff_inner: 128, memory_ff_inner: 128, variant, ..ModelConfig::default() };
            chime::model::Chime::<f32>::new(cfg)?.num_params()
        });
    }
    Ok(())
}
