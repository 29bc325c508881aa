use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, ChimeError, Result};

use super::tokenize::{detokenize, strip_urls, tokenize};
use super::vocab::Vocab;

/// One AmazonQA-style input line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question_text: String,
    pub review_snippets: Vec<String>,
    pub answers: Vec<RawAnswer>,
    pub is_answerable: bool,
    pub question_type: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub text: String,
    /// `[positive votes, total votes]`
    pub helpful_votes: [u32; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub passages: usize,
    pub max_question_tokens: usize,
    pub max_passage_tokens: usize,
    pub max_answer_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            passages: 10,
            max_question_tokens: 40,
            max_passage_tokens: 124,
            max_answer_tokens: 82,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    NotAnswerable,
    NotDescriptive,
    PassageCount { found: usize, expected: usize },
    NoAnswers,
    InvalidVotes { answer: usize },
    EmptyQuestion,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NotAnswerable => write!(f, "not answerable"),
            Rejection::NotDescriptive => write!(f, "not descriptive"),
            Rejection::PassageCount { found, expected } => {
                write!(f, "passage count ({found}, expected {expected})")
            }
            Rejection::NoAnswers => write!(f, "no answers"),
            Rejection::InvalidVotes { answer } => write!(f, "invalid votes on answer {answer}"),
            Rejection::EmptyQuestion => write!(f, "empty question"),
        }
    }
}

fn clean_text(text: &str, cap: usize) -> String {
    let mut toks = tokenize(&strip_urls(text));
    toks.truncate(cap);
    detokenize(&toks)
}

/// Applies the dataset filter: answerable descriptive questions with exactly
/// `passages` snippets, URLs removed, every field truncated to its token cap.
/// Passage order is preserved. The output is in normalized (lowercased,
/// space-joined) form, so cleaning is idempotent.
pub fn clean_record(raw: &RawRecord, cfg: &FilterConfig) -> std::result::Result<RawRecord, Rejection> {
    if !raw.is_answerable {
        return Err(Rejection::NotAnswerable);
    }
    if !raw.question_type.eq_ignore_ascii_case("descriptive") {
        return Err(Rejection::NotDescriptive);
    }
    if raw.review_snippets.len() != cfg.passages {
        return Err(Rejection::PassageCount {
            found: raw.review_snippets.len(),
            expected: cfg.passages,
        });
    }
    if raw.answers.is_empty() {
        return Err(Rejection::NoAnswers);
    }
    if let Some(i) = raw
        .answers
        .iter()
        .position(|a| a.helpful_votes[0] > a.helpful_votes[1])
    {
        return Err(Rejection::InvalidVotes { answer: i });
    }
    let question_text = clean_text(&raw.question_text, cfg.max_question_tokens);
    if question_text.is_empty() {
        return Err(Rejection::EmptyQuestion);
    }
    Ok(RawRecord {
        id: raw.id.clone(),
        question_text,
        review_snippets: raw
            .review_snippets
            .iter()
            .map(|s| clean_text(s, cfg.max_passage_tokens))
            .collect(),
        answers: raw
            .answers
            .iter()
            .map(|a| RawAnswer {
                text: clean_text(&a.text, cfg.max_answer_tokens),
                helpful_votes: a.helpful_votes,
            })
            .collect(),
        is_answerable: true,
        question_type: "descriptive".into(),
    })
}

/// A filtered question group in token-id form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub question: Vec<u32>,
    pub passages: Vec<Vec<u32>>,
    pub answers: Vec<Vec<u32>>,
    /// `(positive, total)` per answer.
    pub votes: Vec<(u32, u32)>,
    pub answerable: bool,
    pub descriptive: bool,
}

impl QaRecord {
    /// Cleans `raw` and maps it through `vocab`.
    pub fn from_raw(
        raw: &RawRecord,
        cfg: &FilterConfig,
        vocab: &Vocab,
        fallback_id: &str,
    ) -> std::result::Result<Self, Rejection> {
        let c = clean_record(raw, cfg)?;
        Ok(QaRecord {
            id: c.id.clone().unwrap_or_else(|| fallback_id.to_string()),
            question: vocab.encode(&c.question_text),
            passages: c.review_snippets.iter().map(|s| vocab.encode(s)).collect(),
            answers: c.answers.iter().map(|a| vocab.encode(&a.text)).collect(),
            votes: c
                .answers
                .iter()
                .map(|a| (a.helpful_votes[0], a.helpful_votes[1]))
                .collect(),
            answerable: true,
            descriptive: true,
        })
    }

    pub fn validate(&self, cfg: &FilterConfig) -> Result<()> {
        if self.passages.len() != cfg.passages {
            return Err(arg_err!(
                "record {}: {} passages, expected {}",
                self.id,
                self.passages.len(),
                cfg.passages
            ));
        }
        if self.question.len() > cfg.max_question_tokens
            || self.passages.iter().any(|p| p.len() > cfg.max_passage_tokens)
            || self.answers.iter().any(|a| a.len() > cfg.max_answer_tokens)
        {
            return Err(arg_err!("record {}: field over its token cap", self.id));
        }
        if self.answers.len() != self.votes.len() {
            return Err(arg_err!("record {}: answers and votes differ in count", self.id));
        }
        if self.votes.iter().any(|&(p, t)| p > t) {
            return Err(arg_err!("record {}: positive votes exceed total", self.id));
        }
        Ok(())
    }

    pub fn best_answer(&self) -> Result<&[u32]> {
        let i = select_best_answer(&self.votes)?;
        Ok(&self.answers[i])
    }
}

/// Index of the answer with the highest positive-vote rate. Ties go to the
/// larger vote total, then to the lowest index. Zero-vote answers rate 0.
pub fn select_best_answer(votes: &[(u32, u32)]) -> Result<usize> {
    if votes.is_empty() {
        return Err(arg_err!("no answers to choose from"));
    }
    if let Some(i) = votes.iter().position(|&(p, t)| p > t) {
        return Err(arg_err!("answer {i}: positive votes exceed total"));
    }
    // Compare p1/t1 vs p2/t2 by cross-multiplication; 0/0 counts as rate 0.
    let better = |a: (u32, u32), b: (u32, u32)| -> bool {
        let lhs = a.0 as u64 * b.1.max(1) as u64;
        let rhs = b.0 as u64 * a.1.max(1) as u64;
        lhs > rhs || (lhs == rhs && a.1 > b.1)
    };
    let mut best = 0;
    for i in 1..votes.len() {
        if better(votes[i], votes[best]) {
            best = i;
        }
    }
    Ok(best)
}

/// Reads a JSON-lines file; blank lines are skipped. Malformed lines fail
/// with their 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let f = fs::File::open(path.as_ref()).map_err(|e| ChimeError::io(path.as_ref(), e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| ChimeError::io(path.as_ref(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| ChimeError::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path.as_ref()).map_err(|e| ChimeError::io(path.as_ref(), e))?;
    f.write_all(&buf).map_err(|e| ChimeError::io(path.as_ref(), e))
}
