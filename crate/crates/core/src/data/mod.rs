//! Vocabulary, tokenization, record ingestion and instance assembly.

mod instance;
mod record;
mod synth;
mod tokenize;
mod vocab;

pub use instance::{assemble_triple, AnswerPart, Caps, InstanceTensors, SEGMENT_A, SEGMENT_B};
pub use record::{
    clean_record, read_jsonl, select_best_answer, write_jsonl, FilterConfig, QaRecord, RawAnswer,
    RawRecord, Rejection,
};
pub use synth::{gen_synthetic, majority, synthetic_vocab, SynthSpec, SynthTask, SyntheticCorpus};
pub use tokenize::{contains_url, detokenize, split_sentences, strip_urls, tokenize};
pub use vocab::{build_vocab, Vocab, CLS, PAD, RESERVED, SEP, UNK};
