use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{arg_err, ChimeError, Result};

use super::tokenize::tokenize;

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const UNK: u32 = 3;

pub const RESERVED: [&str; 4] = ["[PAD]", "[CLS]", "[SEP]", "[UNK]"];

/// Token/id bijection with the four reserved tokens at ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds from an ordered token list; reserved tokens are prepended.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if v.index.contains_key(&t) {
                return Err(arg_err!("duplicate token '{t}'"));
            }
            v.index.insert(t.clone(), v.tokens.len() as u32);
            v.tokens.push(t);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .map_or(RESERVED[UNK as usize], String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Joins tokens with single spaces.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }

    /// Writes one `token<TAB>id` line per entry.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            s.push('\t');
            s.push_str(&i.to_string());
            s.push('\n');
        }
        fs::write(path.as_ref(), s).map_err(|e| ChimeError::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            fs::read_to_string(path.as_ref()).map_err(|e| ChimeError::io(path.as_ref(), e))?;
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let parse = |msg: String| ChimeError::Parse { line: n + 1, msg };
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse("expected token<TAB>id".into()))?;
            let id: usize = id.parse().map_err(|_| parse(format!("bad id '{id}'")))?;
            if id != tokens.len() {
                return Err(parse(format!("id {id} out of sequence")));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(ChimeError::Incompatible(
                "vocabulary file does not start with the reserved tokens".into(),
            ));
        }
        Vocab::from_tokens(tokens.into_iter().skip(RESERVED.len()))
    }
}

/// Frequency-ranked vocabulary over tokenized `corpus`, capped at `max_size`
/// entries including the reserved tokens. Ties are broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(arg_err!("empty corpus"));
    }
    if max_size < RESERVED.len() {
        return Err(arg_err!(
            "max_size {max_size} smaller than the {} reserved tokens",
            RESERVED.len()
        ));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus {
        for t in tokenize(text.as_ref()) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED.len());
    Vocab::from_tokens(ranked.into_iter().map(|(t, _)| t))
}
