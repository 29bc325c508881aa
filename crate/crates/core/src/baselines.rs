//! Sentence-picking baselines: a random review sentence, and the review
//! sentence closest to the question under some sentence embedding.

use rand::Rng;

use crate::data::{detokenize, split_sentences, tokenize, Vocab};
use crate::model::Chime;
use crate::tensor_core::Scalar;

/// Both baselines cut their answer to this many tokens.
pub const BASELINE_MAX_TOKENS: usize = 120;

/// Maps a tokenized sentence to a fixed-size vector.
pub trait SentenceEmbedder {
    fn embed(&self, tokens: &[String]) -> Vec<f64>;
}

/// Token counts over a vocabulary (unknown tokens share one slot).
pub struct BagOfWords<'a> {
    pub vocab: &'a Vocab,
}

impl SentenceEmbedder for BagOfWords<'_> {
    fn embed(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        for t in tokens {
            v[self.vocab.id(t) as usize] += 1.0;
        }
        v
    }
}

/// Mean of a trained model's token embeddings.
pub struct MeanTokenEmbedding<'a, T: Scalar> {
    pub model: &'a Chime<T>,
    pub vocab: &'a Vocab,
}

impl<T: Scalar> SentenceEmbedder for MeanTokenEmbedding<'_, T> {
    fn embed(&self, tokens: &[String]) -> Vec<f64> {
        let table = self.model.store.get(self.model.encoder.token_emb);
        let d = self.model.config.d_model;
        let mut v = vec![0.0; d];
        if tokens.is_empty() {
            return v;
        }
        for t in tokens {
            let id = (self.vocab.id(t) as usize).min(self.model.config.vocab_size - 1);
            for (acc, x) in v.iter_mut().zip(table.row(id)) {
                *acc += x.as_f64();
            }
        }
        v.iter_mut().for_each(|x| *x /= tokens.len() as f64);
        v
    }
}

/// Cosine similarity; a zero vector on either side gives -1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return -1.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn sentences<S: AsRef<str>>(reviews: &[S]) -> Vec<Vec<String>> {
    reviews
        .iter()
        .flat_map(|r| split_sentences(r.as_ref()))
        .map(|s| {
            let mut t = tokenize(&s);
            t.truncate(BASELINE_MAX_TOKENS);
            t
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// A sentence drawn uniformly from all sentences of all reviews.
pub fn random_sentence_baseline<S: AsRef<str>>(reviews: &[S], rng: &mut impl Rng) -> String {
    let s = sentences(reviews);
    if s.is_empty() {
        log::warn!("no sentences to choose from; empty answer");
        return String::new();
    }
    detokenize(&s[rng.random_range(0..s.len())])
}

/// The sentence with the highest cosine similarity to the question; ties
/// go to the earliest sentence.
pub fn retrieval_sentence_baseline<S: AsRef<str>>(question: &str, reviews: &[S], embedder: &dyn SentenceEmbedder) -> String {
    let s = sentences(reviews);
    if s.is_empty() {
        log::warn!("no sentences to choose from; empty answer");
        return String::new();
    }
    let q = embedder.embed(&tokenize(question));
    let mut best = (0, f64::NEG_INFINITY);
    for (i, sent) in s.iter().enumerate() {
        let c = cosine(&q, &embedder.embed(sent));
        if c > best.1 {
            best = (i, c);
        }
    }
    detokenize(&s[best.0])
}
