use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::parallel::SentencePair;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
const RESERVED_WORDS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

pub const CHAR_PAD: u32 = 0;
pub const BOW: u32 = 1;
pub const EOW: u32 = 2;
pub const CHAR_UNK: u32 = 3;
const RESERVED_CHARS: usize = 4;

/// Frequency-ranked word vocabulary with four reserved ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_word: Vec<String>,
    #[serde(skip)]
    word_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from kept words in rank order.
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let id_to_word: Vec<String> = RESERVED_WORDS
            .iter()
            .map(|s| s.to_string())
            .chain(words)
            .collect();
        let mut v = Vocabulary {
            id_to_word,
            word_to_id: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.word_to_id = self
            .id_to_word
            .iter()
            .enumerate()
            .skip(RESERVED_WORDS.len())
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
    }

    /// Total number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.len() == RESERVED_WORDS.len()
    }

    /// Number of kept corpus words.
    pub fn kept(&self) -> usize {
        self.id_to_word.len() - RESERVED_WORDS.len()
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.word_to_id.get(word).copied()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.get(word).unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_to_id.contains_key(word)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.id_to_word[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_word[RESERVED_WORDS.len()..]
    }
}

/// How source and target occurrences are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabMode {
    /// One vocabulary from the summed source and target counts.
    Combined,
    /// Independent source and target vocabularies.
    Separate,
}

/// Source and target vocabularies; identical in combined mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabPair {
    pub mode: VocabMode,
    pub source: Vocabulary,
    pub target: Vocabulary,
    pub chars: CharVocabulary,
}

impl VocabPair {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut v: VocabPair =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("vocabulary: {e}")))?;
        v.source.reindex();
        v.target.reindex();
        v.chars.reindex();
        Ok(v)
    }
}

/// Keeps the `k` most frequent tokens; ties go to the earliest first
/// appearance.
fn rank<'a, I: IntoIterator<Item = &'a String>>(tokens: I, k: usize) -> Vec<String> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, t) in tokens.into_iter().enumerate() {
        counts.entry(t.as_str()).or_insert((0, pos)).0 += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(w, (c, f))| (w, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.into_iter().take(k).map(|(w, _, _)| w.to_string()).collect()
}

/// Builds word vocabularies of `k` kept words plus the character
/// vocabulary over every character in the corpus.
pub fn build_vocab(pairs: &[SentencePair], k: usize, mode: VocabMode) -> Result<VocabPair> {
    if pairs.is_empty() {
        return Err(Error::Invalid("cannot build a vocabulary from an empty corpus".into()));
    }
    if k == 0 {
        return Err(Error::Invalid("vocabulary size must be at least 1".into()));
    }
    let (source, target) = match mode {
        VocabMode::Combined => {
            // pair by pair, source before target
            let all = pairs.iter().flat_map(|p| p.source.iter().chain(&p.target));
            let v = Vocabulary::from_words(rank(all, k));
            (v.clone(), v)
        }
        VocabMode::Separate => (
            Vocabulary::from_words(rank(pairs.iter().flat_map(|p| &p.source), k)),
            Vocabulary::from_words(rank(pairs.iter().flat_map(|p| &p.target), k)),
        ),
    };
    let chars = CharVocabulary::build(pairs.iter().flat_map(|p| p.source.iter().chain(&p.target)));
    Ok(VocabPair {
        mode,
        source,
        target,
        chars,
    })
}

/// Character inventory of the training data, plus padding, word-boundary
/// and unknown-character symbols.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharVocabulary {
    id_to_char: Vec<char>,
    #[serde(skip)]
    char_to_id: HashMap<char, u32>,
}

impl CharVocabulary {
    /// Characters are numbered in order of first appearance.
    pub fn build<'a, I: IntoIterator<Item = &'a String>>(words: I) -> Self {
        let mut id_to_char = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in words {
            for c in w.chars() {
                if seen.insert(c) {
                    id_to_char.push(c);
                }
            }
        }
        let mut v = CharVocabulary {
            id_to_char,
            char_to_id: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.char_to_id = self
            .id_to_char
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, (i + RESERVED_CHARS) as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.id_to_char.len() + RESERVED_CHARS
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_char.is_empty()
    }

    pub fn id(&self, c: char) -> u32 {
        self.char_to_id.get(&c).copied().unwrap_or(CHAR_UNK)
    }

    /// The printable character of an id; `None` for reserved symbols.
    pub fn char(&self, id: u32) -> Option<char> {
        (id as usize)
            .checked_sub(RESERVED_CHARS)
            .and_then(|i| self.id_to_char.get(i).copied())
    }

    /// `BOW c1 .. cM EOW`.
    pub fn frame(&self, word: &str) -> Vec<u32> {
        std::iter::once(BOW)
            .chain(word.chars().map(|c| self.id(c)))
            .chain(std::iter::once(EOW))
            .collect()
    }

    /// Renders ids back to a string, dropping framing and padding symbols.
    /// Unknown characters render as U+FFFD.
    pub fn render(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i != BOW && i != EOW && i != CHAR_PAD)
            .map(|&i| self.char(i).unwrap_or('\u{FFFD}'))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<SentencePair> {
        vec![SentencePair::new("a a b", "a c")]
    }

    #[test]
    fn combined_keeps_most_frequent() {
        let v = build_vocab(&corpus(), 2, VocabMode::Combined).unwrap();
        assert_eq!(v.source.words(), &["a", "b"]);
        assert_eq!(v.source, v.target);
        assert_eq!(v.source.id("a"), 4);
        assert_eq!(v.source.id("c"), UNK);
    }

    #[test]
    fn large_k_keeps_everything() {
        let v = build_vocab(&corpus(), 10, VocabMode::Combined).unwrap();
        assert_eq!(v.source.words(), &["a", "b", "c"]);
        assert_eq!(v.source.len(), 7);
    }

    #[test]
    fn separate_counts_each_side() {
        let v = build_vocab(&corpus(), 2, VocabMode::Separate).unwrap();
        assert_eq!(v.source.words(), &["a", "b"]);
        assert_eq!(v.target.words(), &["a", "c"]);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(build_vocab(&[], 5, VocabMode::Combined).is_err());
    }

    #[test]
    fn bijection_and_reserved_ids() {
        let pairs = vec![
            SentencePair::new("the cat sat on the mat", "the cat sat on the mat ."),
            SentencePair::new("<unk> looks like a token", "it is one"),
        ];
        let v = build_vocab(&pairs, 100, VocabMode::Combined).unwrap();
        for (i, w) in v.source.words().iter().enumerate() {
            let id = v.source.id(w);
            assert_eq!(id as usize, i + 4);
            assert_eq!(v.source.word(id), w);
        }
        // a corpus word spelled like a reserved symbol still gets its own id
        assert!(v.source.id("<unk>") >= 4);
    }

    #[test]
    fn deterministic_ids() {
        let pairs = vec![
            SentencePair::new("x y z z y", "q y"),
            SentencePair::new("z q", "x x"),
        ];
        let a = build_vocab(&pairs, 3, VocabMode::Combined).unwrap();
        let b = build_vocab(&pairs, 3, VocabMode::Combined).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn char_framing() {
        let pairs = vec![SentencePair::new("violets", "violates")];
        let v = build_vocab(&pairs, 1, VocabMode::Combined).unwrap();
        let ids = v.chars.frame("violets");
        assert_eq!(ids.first(), Some(&BOW));
        assert_eq!(ids.last(), Some(&EOW));
        assert_eq!(ids.len(), 9);
        assert_eq!(v.chars.render(&ids), "violets");
        assert_eq!(v.chars.id('#'), CHAR_UNK);
    }

    #[test]
    fn json_round_trip() {
        let v = build_vocab(&corpus(), 2, VocabMode::Separate).unwrap();
        let back = VocabPair::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.target.id("c"), 5);
    }
}
