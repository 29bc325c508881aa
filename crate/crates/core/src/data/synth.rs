//! Seeded synthetic QA corpus with two task families.
//!
//! * key lookup: one passage holds `key K val V`; the question names `K`,
//!   the answer is `V`.
//! * majority opinion: every passage holds `opinion yes` or `opinion no`,
//!   with a strict majority; the answer is the majority token.
//!
//! The remaining passage slots are filled with distractor tokens.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

use super::record::QaRecord;
use super::vocab::{Vocab, RESERVED};

const FIXED: [&str; 9] = ["what", "is", "the", "opinion", "key", "val", "of", "yes", "no"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthTask {
    KeyLookup,
    Majority,
    Mixed,
}

impl std::str::FromStr for SynthTask {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "key_lookup" | "key-lookup" => Ok(SynthTask::KeyLookup),
            "majority" => Ok(SynthTask::Majority),
            "mixed" => Ok(SynthTask::Mixed),
            o => Err(format!("unknown task '{o}' (key_lookup|majority|mixed)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub questions: usize,
    pub passages: usize,
    pub vocab_size: usize,
    pub passage_len: usize,
    pub task: SynthTask,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            questions: 32,
            passages: 5,
            vocab_size: 32,
            passage_len: 6,
            task: SynthTask::Mixed,
        }
    }
}

impl SynthSpec {
    /// Question cap that fits every generated question.
    pub fn max_question_len(&self) -> usize {
        6
    }

    pub fn max_answer_len(&self) -> usize {
        1
    }
}

pub struct SyntheticCorpus {
    pub vocab: Vocab,
    pub records: Vec<QaRecord>,
}

/// Vocabulary shared by every synthetic corpus of this size.
pub fn synthetic_vocab(vocab_size: usize) -> Result<Vocab> {
    let fixed = RESERVED.len() + FIXED.len();
    if vocab_size < 16 {
        return Err(arg_err!("synthetic vocabulary needs at least 16 entries, got {vocab_size}"));
    }
    Vocab::from_tokens(
        FIXED
            .iter()
            .map(|s| s.to_string())
            .chain((0..vocab_size - fixed).map(|i| format!("w{i}"))),
    )
}

/// Majority label of a list of yes/no votes (`true` = yes).
pub fn majority(labels: &[bool]) -> Option<bool> {
    let yes = labels.iter().filter(|&&l| l).count();
    let no = labels.len() - yes;
    match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Some(true),
        std::cmp::Ordering::Less => Some(false),
        std::cmp::Ordering::Equal => None,
    }
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    if spec.passages == 0 {
        return Err(arg_err!("need at least one passage"));
    }
    let vocab = synthetic_vocab(spec.vocab_size)?;
    let min_len = match spec.task {
        SynthTask::Majority => 2,
        _ => 4,
    };
    if spec.passage_len < min_len {
        return Err(arg_err!(
            "passage_len {} too short for the task (needs {min_len})",
            spec.passage_len
        ));
    }
    let content: Vec<u32> = (RESERVED.len() + FIXED.len()..spec.vocab_size)
        .map(|i| i as u32)
        .collect();
    let w = |s: &str| vocab.id(s);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.questions);

    for qi in 0..spec.questions {
        let key_task = match spec.task {
            SynthTask::KeyLookup => true,
            SynthTask::Majority => false,
            SynthTask::Mixed => rng.random_bool(0.5),
        };
        let filler = |rng: &mut ChaCha8Rng, n: usize| -> Vec<u32> {
            (0..n).map(|_| *content.choose(rng).unwrap()).collect()
        };
        let (question, passages, answer) = if key_task {
            let key = *content.choose(&mut rng).unwrap();
            let value = *content.choose(&mut rng).unwrap();
            let holder = rng.random_range(0..spec.passages);
            let passages = (0..spec.passages)
                .map(|p| {
                    let (k, v) = if p == holder {
                        (key, value)
                    } else {
                        let other: Vec<u32> = content.iter().copied().filter(|&c| c != key).collect();
                        (*other.choose(&mut rng).unwrap(), *content.choose(&mut rng).unwrap())
                    };
                    let mut body = filler(&mut rng, spec.passage_len - 4);
                    let at = rng.random_range(0..=body.len());
                    body.splice(at..at, [w("key"), k, w("val"), v]);
                    body
                })
                .collect::<Vec<_>>();
            let q = vec![w("what"), w("is"), w("val"), w("of"), w("key"), key];
            (q, passages, vec![value])
        } else {
            let winner = rng.random_bool(0.5);
            let minority_max = (spec.passages - 1) / 2;
            let minority = rng.random_range(0..=minority_max);
            let mut labels: Vec<bool> = (0..spec.passages).map(|i| (i >= minority) == winner).collect();
            labels.shuffle(&mut rng);
            debug_assert_eq!(majority(&labels), Some(winner));
            let passages = labels
                .iter()
                .map(|&yes| {
                    let mut body = filler(&mut rng, spec.passage_len - 2);
                    let at = rng.random_range(0..=body.len());
                    body.splice(at..at, [w("opinion"), if yes { w("yes") } else { w("no") }]);
                    body
                })
                .collect();
            let q = vec![w("what"), w("is"), w("the"), w("opinion")];
            (q, passages, vec![if winner { w("yes") } else { w("no") }])
        };
        let votes = rng.random_range(1..=5u32);
        records.push(QaRecord {
            id: format!("syn-{}-{qi}", spec.seed),
            question,
            passages,
            answers: vec![answer],
            votes: vec![(votes, votes)],
            answerable: true,
            descriptive: true,
        });
    }
    Ok(SyntheticCorpus { vocab, records })
}
