//! Stops training halfway, saves a checkpoint, resumes from disk and checks
//! that the final parameters match an uninterrupted run.

use chime::config::ModelConfig;
use chime::data::{gen_synthetic, Caps, SynthSpec};
use chime::tensor_core::Precision;
use chime::trainer::{peek_checkpoint, Checkpoint, TrainGroup, Trainer};

fn main() -> chime::Result<()> {
    let spec = SynthSpec { questions: 6, ..SynthSpec::default() };
    let groups: Vec<TrainGroup> =
        gen_synthetic(&spec)?.records.iter().map(TrainGroup::from_record).collect::<Result<_, _>>()?;
    let cfg = ModelConfig {
        d_model: 16,
        blocks: 1,
        ff_inner: 32,
        memory_ff_inner: 32,
        vocab_size: spec.vocab_size,
        caps: Caps { question: 6, passage: 6, answer: 1 },
        passages: 5,
        epochs: 4,
        precision: Precision::F32,
        ..ModelConfig::default()
    };

    let mut straight = Trainer::<f32>::new(cfg.clone(), groups.clone())?;
    straight.run(None)?;

    let path = std::env::temp_dir().join("chime_example.ckpt");
    let mut first = Trainer::<f32>::new(cfg, groups.clone())?;
    first.run(Some(straight.step / 2))?;
    first.checkpoint().save(&path)?;
    let header = peek_checkpoint(&path)?;
    println!("saved at step {} (epoch {}), precision {:?}", header.step, header.epoch, header.precision);

    let mut resumed = Trainer::resume(Checkpoint::<f32>::load(&path)?, groups)?;
    resumed.run(None)?;
    let same = resumed.model.store.tensors() == straight.model.store.tensors();
    println!("resumed run finished at step {}; parameters identical: {same}", resumed.step);
    let _ = std::fs::remove_file(path);
    Ok(())
}
