use std::sync::OnceLock;

use regex::Regex;

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}_]+|[^\s\p{L}\p{N}_]").unwrap())
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|ftp://|www\.)\S*").unwrap())
}

/// Lowercases and splits into word runs and single punctuation marks.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_re()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn strip_urls(text: &str) -> String {
    url_re().replace_all(text, " ").into_owned()
}

pub fn contains_url(text: &str) -> bool {
    url_re().is_match(text)
}

/// Splits on `.`, `!` or `?` followed by whitespace. The terminator stays
/// with its sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for w in chars.windows(2) {
        let ((i, c), (_, next)) = (w[0], w[1]);
        if matches!(c, '.' | '!' | '?') && next.is_whitespace() {
            let s = text[start..i + c.len_utf8()].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            start = i + c.len_utf8();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(tokenize("  it's  "), vec!["it", "'", "s"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn removes_urls() {
        let s = strip_urls("see https://example.com/x?y=1 and www.foo.org now");
        assert!(!contains_url(&s));
        assert_eq!(tokenize(&s), vec!["see", "and", "now"]);
    }

    #[test]
    fn sentences() {
        assert_eq!(
            split_sentences("Great fit. Runs small! Would buy? yes"),
            vec!["Great fit.", "Runs small!", "Would buy?", "yes"]
        );
        assert_eq!(split_sentences("v1.2 is out"), vec!["v1.2 is out"]);
        assert!(split_sentences("  ").is_empty());
    }
}
