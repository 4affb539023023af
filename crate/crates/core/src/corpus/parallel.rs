use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One source sentence and its correction, as whitespace-split tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl SentencePair {
    pub fn new(source: &str, target: &str) -> Self {
        SentencePair {
            source: tokenize(source),
            target: tokenize(target),
        }
    }
}

/// Noise filter for crowd-sourced pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusFilter {
    /// Pairs whose source or target exceeds this many tokens are dropped.
    pub max_tokens: usize,
    /// Pairs whose target is shorter than `min_ratio * source` are dropped.
    pub min_ratio: f64,
}

impl Default for CorpusFilter {
    fn default() -> Self {
        CorpusFilter {
            max_tokens: 100,
            min_ratio: 0.5,
        }
    }
}

impl CorpusFilter {
    pub fn keeps(&self, pair: &SentencePair) -> bool {
        let (s, t) = (pair.source.len(), pair.target.len());
        s <= self.max_tokens && t <= self.max_tokens && (t as f64) >= self.min_ratio * s as f64
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        Error::parse(path.display().to_string(), line, "invalid UTF-8")
    })
}

/// Parses `source<TAB>target` lines. Blank lines are skipped.
pub fn parse_parallel(text: &str, origin: &str, filter: Option<CorpusFilter>) -> Result<Vec<SentencePair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(src), Some(tgt), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(origin, i + 1, "expected exactly one TAB"));
        };
        let pair = SentencePair::new(src, tgt);
        if pair.source.is_empty() {
            return Err(Error::parse(origin, i + 1, "empty source sentence"));
        }
        if filter.map_or(true, |f| f.keeps(&pair)) {
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

pub fn load_parallel_corpus(path: &Path, filter: Option<CorpusFilter>) -> Result<Vec<SentencePair>> {
    let text = read_utf8(path)?;
    parse_parallel(&text, &path.display().to_string(), filter)
}

/// One tokenized sentence per line; blank lines become empty sentences so
/// line numbers stay aligned with the input.
pub fn load_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_utf8(path)?;
    Ok(text.lines().map(tokenize).collect())
}
