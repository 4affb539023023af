use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{SentencePair, EOS, UNK};
use crate::decoder::search::Hypothesis;
use crate::error::{Error, Result};
use crate::eval::extract_edits;

/// Source word to ranked corrections observed in parallel data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrectionLexicon {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl CorrectionLexicon {
    /// Candidates for `word`, most probable first.
    pub fn candidates(&self, word: &str) -> &[(String, f64)] {
        self.entries.get(word).map_or(&[], Vec::as_slice)
    }

    pub fn best(&self, word: &str) -> Option<&str> {
        self.candidates(word).first().map(|(w, _)| w.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tab-separated `source target probability` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (src, cands) in &self.entries {
            for (tgt, p) in cands {
                out.push_str(&format!("{src}\t{tgt}\t{p}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let p = match f.as_slice() {
                [_, _, p] => p.parse::<f64>().ok().filter(|p| (0.0..=1.0).contains(p)),
                _ => None,
            };
            let Some(p) = p else {
                return Err(Error::parse(origin, i + 1, "expected source<TAB>target<TAB>probability"));
            };
            entries.entry(f[0].to_string()).or_default().push((f[1].to_string(), p));
        }
        for cands in entries.values_mut() {
            sort_candidates(cands);
        }
        Ok(CorrectionLexicon { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        CorrectionLexicon::from_text(&text, &path.display().to_string())
    }
}

fn sort_candidates(c: &mut [(String, f64)]) {
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Counts, for every source word occurrence, the target word it aligns to.
///
/// Identical tokens on the minimal edit alignment anchor each other; inside
/// an edit, source and replacement tokens pair up by position. Occurrences
/// left without a partner still count toward the denominator, so a word's
/// probabilities can sum to less than one.
pub fn build_correction_lexicon(pairs: &[SentencePair]) -> CorrectionLexicon {
    let mut counts: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for p in pairs {
        for w in &p.source {
            *totals.entry(w).or_default() += 1;
        }
        let edits = extract_edits(&p.source, &p.target);
        let mut aligned: Vec<(usize, &str)> = Vec::new();
        let (mut si, mut ti) = (0usize, 0usize);
        for e in &edits {
            while si < e.start {
                aligned.push((si, &p.target[ti]));
                si += 1;
                ti += 1;
            }
            for (k, r) in e.replacement.iter().enumerate().take(e.end - e.start) {
                aligned.push((e.start + k, r));
            }
            si = e.end;
            ti += e.replacement.len();
        }
        while si < p.source.len() {
            aligned.push((si, &p.target[ti]));
            si += 1;
            ti += 1;
        }
        for (s, t) in aligned {
            *counts.entry(&p.source[s]).or_default().entry(t.to_string()).or_default() += 1;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(src, tgts)| {
            let total = totals[src] as f64;
            let mut c: Vec<(String, f64)> = tgts.into_iter().map(|(t, n)| (t, n as f64 / total)).collect();
            sort_candidates(&mut c);
            (src.to_string(), c)
        })
        .collect();
    CorrectionLexicon { entries }
}

/// Renders a word hypothesis, replacing each `UNK` by the most likely
/// correction of the source word it attends to most, or by that source
/// word itself when the lexicon has nothing for it. `EOS` is dropped.
pub fn unk_replace(
    h: &Hypothesis,
    source: &[String],
    lexicon: &CorrectionLexicon,
    word: impl Fn(u32) -> String,
) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(h.tokens.len());
    for (s, &t) in h.tokens.iter().enumerate() {
        if t == EOS {
            break;
        }
        if t == UNK {
            let src = source
                .get(h.aligned(s)?)
                .ok_or_else(|| Error::Invalid("attention row longer than the source".into()))?;
            out.push(lexicon.best(src).unwrap_or(src).to_string());
        } else {
            out.push(word(t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn single_substitution() {
        let lex = build_correction_lexicon(&[SentencePair::new("a violets c", "a violates c")]);
        assert_eq!(lex.candidates("violets"), &[("violates".to_string(), 1.0)]);
        assert_eq!(lex.best("a"), Some("a"));
        assert!(lex.candidates("unseen").is_empty());
    }

    #[test]
    fn identical_pairs_map_to_themselves() {
        let lex = build_correction_lexicon(&[SentencePair::new("the cat sat", "the cat sat")]);
        for w in ["the", "cat", "sat"] {
            assert_eq!(lex.candidates(w), &[(w.to_string(), 1.0)]);
        }
    }

    #[test]
    fn ranked_and_subnormalized() {
        let lex = build_correction_lexicon(&[
            SentencePair::new("he go home", "he goes home"),
            SentencePair::new("they go home", "they go home"),
            SentencePair::new("we go now", "we went now"),
            SentencePair::new("she go", "she goes"),
            SentencePair::new("i go there", "i there"),
        ]);
        let c = lex.candidates("go");
        assert_eq!(c[0], ("goes".to_string(), 0.4));
        // ties fall back to alphabetical order
        assert_eq!(c[1].0, "go");
        assert_eq!(c[2].0, "went");
        let sum: f64 = c.iter().map(|x| x.1).sum();
        assert!((sum - 0.8).abs() < 1e-12, "one deletion leaves mass unassigned");
        for w in c.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn text_round_trip() {
        let lex = build_correction_lexicon(&[
            SentencePair::new("a violets c", "a violates c"),
            SentencePair::new("a b", "a b"),
        ]);
        let back = CorrectionLexicon::from_text(&lex.to_text(), "mem").unwrap();
        assert_eq!(back, lex);
        assert!(CorrectionLexicon::from_text("x\ty\n", "mem").is_err());
    }

    fn hyp(tokens: &[u32], attention: Vec<Vec<f64>>) -> Hypothesis {
        Hypothesis {
            tokens: tokens.to_vec(),
            step_log_probs: vec![0.0; tokens.len()],
            log_prob: 0.0,
            attention,
            complete: tokens.last() == Some(&EOS),
            unks: Vec::new(),
        }
    }

    #[test]
    fn replaces_attended_unknowns() {
        let vocab = ["<pad>", "<unk>", "<s>", "</s>", "this", "greatly", "the", "rights", "topic"];
        let word = |t: u32| vocab[t as usize].to_string();
        let lex = build_correction_lexicon(&[SentencePair::new("violets", "violates")]);

        let src = toks("this greatly violets the rights");
        let row = |k: usize| {
            let mut r = vec![0.05; 5];
            r[k] = 0.8;
            r
        };
        let h = hyp(&[4, 5, UNK, 6, 7, EOS], (0..6).map(|s| row(s.min(4))).collect());
        assert_eq!(unk_replace(&h, &src, &lex, word).unwrap(), toks("this greatly violates the rights"));

        let src = toks("attention-getting topic");
        let h = hyp(&[UNK, 8, EOS], vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]]);
        assert_eq!(unk_replace(&h, &src, &lex, word).unwrap(), toks("attention-getting topic"));

        let h = hyp(&[4, 5, EOS], vec![vec![1.0]; 3]);
        assert_eq!(unk_replace(&h, &toks("x"), &lex, word).unwrap(), toks("this greatly"));
    }
}
