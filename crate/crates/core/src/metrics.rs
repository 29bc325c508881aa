//! BLEU-1/2 and ROUGE-L F1 with multi-reference aggregation, and corpus
//! reports over prediction/gold JSON-lines files.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{read_jsonl, tokenize};
use crate::error::{arg_err, ChimeError, Result};

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram precision: each candidate n-gram counts at most as often
/// as it appears in the reference that contains it most.
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], references: &[Vec<T>], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let total: usize = cand.values().sum();
    if total == 0 {
        return 0.0;
    }
    let refs: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
    let clipped: usize = cand
        .iter()
        .map(|(g, &c)| {
            let max_ref = refs.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            c.min(max_ref)
        })
        .sum();
    clipped as f64 / total as f64
}

/// Reference length closest to `c`; ties go to the shorter one.
fn closest_ref_len<T>(c: usize, references: &[Vec<T>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

/// Sentence BLEU with uniform weights over orders `1..=n`.
pub fn bleu_n<T: Eq + Hash>(candidate: &[T], references: &[Vec<T>], n: usize) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(arg_err!("BLEU order {n} not supported"));
    }
    if candidate.is_empty() {
        log::warn!("empty candidate scores BLEU 0");
        return Ok(0.0);
    }
    if references.is_empty() {
        log::warn!("no references; BLEU 0");
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let p = modified_precision(candidate, references, k);
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    let c = candidate.len();
    let r = closest_ref_len(c, references);
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / n as f64).exp())
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 against each reference; the best reference counts.
pub fn rouge_l_f1<T: Eq>(candidate: &[T], references: &[Vec<T>]) -> f64 {
    if candidate.is_empty() || references.iter().all(Vec::is_empty) {
        log::warn!("empty input scores ROUGE-L 0");
        return 0.0;
    }
    references
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let (p, rc) = (l / candidate.len() as f64, l / r.len() as f64);
            2.0 * p * rc / (p + rc)
        })
        .fold(0.0, f64::max)
}

/// Metrics for one prediction, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SampleScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub rouge_l: f64,
}

pub fn score_sample(candidate: &[String], references: &[Vec<String>]) -> Result<SampleScores> {
    Ok(SampleScores {
        bleu1: bleu_n(candidate, references, 1)?,
        bleu2: bleu_n(candidate, references, 2)?,
        rouge_l: rouge_l_f1(candidate, references),
    })
}

/// Corpus means on a 0-100 scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub samples: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub rouge_l_f1: f64,
}

impl Report {
    pub fn from_scores(name: impl Into<String>, scores: &[SampleScores]) -> Result<Self> {
        if scores.is_empty() {
            return Err(arg_err!("no samples to report"));
        }
        let n = scores.len() as f64;
        let mean = |f: fn(&SampleScores) -> f64| 100.0 * scores.iter().map(f).sum::<f64>() / n;
        Ok(Report {
            name: name.into(),
            samples: scores.len(),
            bleu1: mean(|s| s.bleu1),
            bleu2: mean(|s| s.bleu2),
            rouge_l_f1: mean(|s| s.rouge_l),
        })
    }

    pub fn csv_header() -> &'static str {
        "model,samples,bleu1,bleu2,rouge_l_f1"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{:.3}",
            self.name, self.samples, self.bleu1, self.bleu2, self.rouge_l_f1
        )
    }

    pub fn to_csv(reports: &[Report]) -> String {
        let mut s = String::from(Self::csv_header());
        s.push('\n');
        for r in reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    /// Aligned text table with a note on how references are combined.
    pub fn to_table(reports: &[Report]) -> String {
        let w = reports.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<w$}  {:>7}  {:>7}  {:>7}  {:>10}", "model", "n", "Bleu-1", "Bleu-2", "Rouge-L F1");
        for r in reports {
            let _ = writeln!(
                s,
                "{:<w$}  {:>7}  {:>7.3}  {:>7.3}  {:>10.3}",
                r.name, r.samples, r.bleu1, r.bleu2, r.rouge_l_f1
            );
        }
        s.push_str("BLEU clips n-gram counts against all references jointly; ROUGE-L takes the best reference.\n");
        s
    }
}

/// A generated answer keyed by question id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
}

/// Reference answers keyed by question id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswers {
    pub id: String,
    pub references: Vec<String>,
}

fn field<'a>(v: &'a Value, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| v.get(*n))
}

fn string_id(v: &Value, line: usize) -> Result<String> {
    match field(v, &["id", "question_id"]) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(ChimeError::Parse {
            line,
            msg: "missing id".into(),
        }),
    }
}

fn texts(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(xs) => xs.iter().flat_map(texts).collect(),
        Value::Object(_) => field(v, &["text", "answerText"]).map(texts).unwrap_or_default(),
        _ => Vec::new(),
    }
}

/// Reads predictions; accepts `id`/`question_id` and `text`/`generated_text`.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let rows: Vec<Value> = read_jsonl(path.as_ref())?;
    if rows.is_empty() {
        return Err(arg_err!("{}: no predictions", path.as_ref().display()));
    }
    rows.iter()
        .enumerate()
        .map(|(i, v)| {
            let text = match field(v, &["text", "generated_text", "prediction"]) {
                Some(Value::String(s)) => s.clone(),
                _ => {
                    return Err(ChimeError::Parse {
                        line: i + 1,
                        msg: "missing text".into(),
                    })
                }
            };
            Ok(Prediction {
                id: string_id(v, i + 1)?,
                text,
            })
        })
        .collect()
}

/// Reads references; accepts `references`, `answers` (strings or objects
/// with `text`), or a single `text`.
pub fn read_gold(path: impl AsRef<Path>) -> Result<Vec<GoldAnswers>> {
    let rows: Vec<Value> = read_jsonl(path.as_ref())?;
    rows.iter()
        .enumerate()
        .map(|(i, v)| {
            let references = field(v, &["references", "answers", "text"]).map(texts).unwrap_or_default();
            if references.is_empty() {
                return Err(ChimeError::Parse {
                    line: i + 1,
                    msg: "no reference answers".into(),
                });
            }
            Ok(GoldAnswers {
                id: string_id(v, i + 1)?,
                references,
            })
        })
        .collect()
}

/// Scores every gold question. Predictions and gold must cover the same ids.
pub fn evaluate_pairs(name: &str, predictions: &[Prediction], gold: &[GoldAnswers], workers: usize) -> Result<Report> {
    if predictions.is_empty() {
        return Err(arg_err!("no predictions"));
    }
    let pred: HashMap<&str, &str> = predictions.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let mut missing: Vec<String> = gold_ids
        .iter()
        .filter(|id| !pred.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    missing.extend(
        predictions
            .iter()
            .filter(|p| !gold_ids.contains(p.id.as_str()))
            .map(|p| format!("{} (no gold)", p.id)),
    );
    if !missing.is_empty() {
        return Err(ChimeError::MissingIds(missing));
    }
    let score = |g: &GoldAnswers| {
        let refs: Vec<Vec<String>> = g.references.iter().map(|r| tokenize(r)).collect();
        score_sample(&tokenize(pred[g.id.as_str()]), &refs)
    };
    let scores: Vec<SampleScores> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| arg_err!("thread pool: {e}"))?;
        pool.install(|| gold.par_iter().map(score).collect::<Result<_>>())?
    } else {
        gold.iter().map(score).collect::<Result<_>>()?
    };
    Report::from_scores(name, &scores)
}

pub fn evaluate(predictions: impl AsRef<Path>, gold: impl AsRef<Path>, workers: usize) -> Result<Report> {
    let name = predictions
        .as_ref()
        .file_stem()
        .map_or_else(|| "predictions".into(), |s| s.to_string_lossy().into_owned());
    evaluate_pairs(&name, &read_predictions(predictions)?, &read_gold(gold)?, workers)
}
