use std::fmt::{self, Write as _};

use crate::corpus::{M2Document, Vocabulary};
use crate::error::Result;
use crate::eval::edit::Edit;
use crate::eval::score::{gold_edit_sets, score_edit_sets, system_edit_sets, ScoreReport};

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn char_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let next = (diag + usize::from(ca != cb)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChangeSize {
    Small,
    Large,
}

impl fmt::Display for ChangeSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChangeSize::Small => "small",
            ChangeSize::Large => "large",
        })
    }
}

/// `distance / (min(len(src), len(tgt)) + 0.1)`, lengths in characters.
pub fn edit_ratio(src: &str, tgt: &str) -> f64 {
    let shorter = src.chars().count().min(tgt.chars().count());
    char_edit_distance(src, tgt) as f64 / (shorter as f64 + 0.1)
}

/// Orthographically similar phrases are small changes: distance at most 2
/// with either side at most 8 characters, or an edit ratio below 0.25.
/// Multi-word phrases are joined with single spaces, which count.
pub fn classify_change(src: &str, tgt: &str) -> ChangeSize {
    let d = char_edit_distance(src, tgt);
    let short = src.chars().count() <= 8 || tgt.chars().count() <= 8;
    if (d <= 2 && short) || edit_ratio(src, tgt) < 0.25 {
        ChangeSize::Small
    } else {
        ChangeSize::Large
    }
}

pub fn classify_edit(edit: &Edit, source: &[String]) -> ChangeSize {
    classify_change(&edit.source_text(source), &edit.target_text())
}

/// Sentence indices split by whether any source token is out of vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segments {
    pub oov: Vec<usize>,
    pub non_oov: Vec<usize>,
}

pub fn segment_oov(sources: &[Vec<String>], vocab: &Vocabulary) -> Segments {
    let mut s = Segments::default();
    for (i, sent) in sources.iter().enumerate() {
        if sent.iter().any(|t| !vocab.contains(t)) {
            s.oov.push(i);
        } else {
            s.non_oov.push(i);
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentChoice {
    All,
    Oov,
    NonOov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortionChoice {
    All,
    Small,
    Large,
}

/// Scores of one segment, overall and per change size.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentAnalysis {
    pub name: &'static str,
    pub sentences: usize,
    pub all: ScoreReport,
    pub small: ScoreReport,
    pub large: ScoreReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisReport {
    pub segments: Vec<SegmentAnalysis>,
}

fn score_subset(
    rows: &[usize],
    system: &[Vec<Edit>],
    gold: &[Vec<Vec<Edit>>],
    doc: &M2Document,
    portion: Option<ChangeSize>,
) -> Result<ScoreReport> {
    let keep = |e: &Edit, i: usize| portion.map_or(true, |p| classify_edit(e, &doc.sentences[i].source) == p);
    let sys: Vec<Vec<Edit>> = rows
        .iter()
        .map(|&i| system[i].iter().filter(|e| keep(e, i)).cloned().collect())
        .collect();
    let gold: Vec<Vec<Vec<Edit>>> = rows
        .iter()
        .map(|&i| {
            gold[i]
                .iter()
                .map(|set| set.iter().filter(|e| keep(e, i)).cloned().collect())
                .collect()
        })
        .collect();
    score_edit_sets(&sys, &gold)
}

/// Per-segment scores, each split into small and large change portions.
/// Portions keep only the system and gold edits of that size.
pub fn analyze(outputs: &[Vec<String>], doc: &M2Document, vocab: &Vocabulary) -> Result<AnalysisReport> {
    let system = system_edit_sets(outputs, doc)?;
    let gold = gold_edit_sets(doc);
    let sources: Vec<Vec<String>> = doc.sentences.iter().map(|s| s.source.clone()).collect();
    let seg = segment_oov(&sources, vocab);
    let all: Vec<usize> = (0..sources.len()).collect();
    let mut segments = Vec::new();
    for (name, rows) in [("NonOOV", &seg.non_oov), ("OOV", &seg.oov), ("Overall", &all)] {
        segments.push(SegmentAnalysis {
            name,
            sentences: rows.len(),
            all: score_subset(rows, &system, &gold, doc, None)?,
            small: score_subset(rows, &system, &gold, doc, Some(ChangeSize::Small))?,
            large: score_subset(rows, &system, &gold, doc, Some(ChangeSize::Large))?,
        });
    }
    Ok(AnalysisReport { segments })
}

impl AnalysisReport {
    fn segment(&self, name: &str) -> &SegmentAnalysis {
        self.segments.iter().find(|s| s.name == name).expect("segment present")
    }

    /// F0.5 per segment, then P/R/F0.5 per portion of the chosen segment.
    pub fn to_text(&self, segment: SegmentChoice, portion: PortionChoice) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>9} {:>8}", "Segment", "Sentences", "F0.5");
        for s in &self.segments {
            let _ = writeln!(out, "{:<10} {:>9} {:>8.2}", s.name, s.sentences, s.all.prf.f);
        }
        let seg = match segment {
            SegmentChoice::All => self.segment("Overall"),
            SegmentChoice::Oov => self.segment("OOV"),
            SegmentChoice::NonOov => self.segment("NonOOV"),
        };
        let _ = writeln!(out);
        let _ = writeln!(out, "{} segment", seg.name);
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>8} {:>6}", "Portion", "P", "R", "F0.5", "Gold");
        let rows: Vec<(&str, &ScoreReport)> = match portion {
            PortionChoice::All => vec![("small changes", &seg.small), ("large changes", &seg.large)],
            PortionChoice::Small => vec![("small changes", &seg.small)],
            PortionChoice::Large => vec![("large changes", &seg.large)],
        };
        for (label, r) in rows {
            let _ = writeln!(
                out,
                "{:<16} {:>8.2} {:>8.2} {:>8.2} {:>6}",
                label, r.prf.precision, r.prf.recall, r.prf.f, r.gold
            );
        }
        out
    }
}
