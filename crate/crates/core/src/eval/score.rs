use std::fmt::Write as _;

use crate::corpus::M2Document;
use crate::error::{Error, Result};
use crate::eval::edit::{extract_edits, Edit};

/// Precision, recall and F-score, in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// `F_β = (1+β²)PR / (β²P + R)`, zero when both are zero. Works for any
/// scale of P and R.
pub fn f_beta_from(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Scores from edit counts. With nothing proposed and nothing in the gold
/// standard every figure is 100; otherwise an empty denominator gives 0.
pub fn f_beta(tp: usize, proposed: usize, gold: usize, beta: f64) -> Result<Prf> {
    if tp > proposed || tp > gold {
        return Err(Error::Invalid(format!(
            "impossible counts: {tp} matches with {proposed} proposed and {gold} gold edits"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("beta must be positive, got {beta}")));
    }
    if proposed == 0 && gold == 0 {
        return Ok(Prf {
            precision: 100.0,
            recall: 100.0,
            f: 100.0,
        });
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    let (precision, recall) = (ratio(tp, proposed), ratio(tp, gold));
    Ok(Prf {
        precision,
        recall,
        f: f_beta_from(precision, recall, beta),
    })
}

/// Per-sentence counts against the selected annotator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentenceScore {
    pub tp: usize,
    pub proposed: usize,
    pub gold: usize,
    /// Index into the sentence's edit sets.
    pub annotator: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub tp: usize,
    pub proposed: usize,
    pub gold: usize,
    pub prf: Prf,
    pub sentences: Vec<SentenceScore>,
}

impl ScoreReport {
    /// Aligned human-readable summary.
    pub fn to_text(&self) -> String {
        format!(
            "Precision   : {:.2}\nRecall      : {:.2}\nF0.5        : {:.2}\n",
            self.prf.precision, self.prf.recall, self.prf.f
        )
    }

    /// `key=value` lines for scripts.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tp={}", self.tp);
        let _ = writeln!(out, "proposed={}", self.proposed);
        let _ = writeln!(out, "gold={}", self.gold);
        let _ = writeln!(out, "precision={:.4}", self.prf.precision);
        let _ = writeln!(out, "recall={:.4}", self.prf.recall);
        let _ = writeln!(out, "f0.5={:.4}", self.prf.f);
        out
    }
}

fn matches(system: &[Edit], gold: &[Edit]) -> usize {
    system
        .iter()
        .filter(|s| gold.iter().any(|g| g.key() == s.key()))
        .count()
}

/// Corpus scoring of system edit sets against per-sentence annotator edit
/// sets. Sentence by sentence, the annotator giving the best running
/// corpus F0.5 is chosen; ties prefer more matches, then the earlier
/// annotator.
pub fn score_edit_sets(system: &[Vec<Edit>], gold: &[Vec<Vec<Edit>>]) -> Result<ScoreReport> {
    if system.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "{} system sentences but {} gold sentences",
            system.len(),
            gold.len()
        )));
    }
    let (mut tp, mut proposed, mut gold_n) = (0, 0, 0);
    let mut sentences = Vec::with_capacity(system.len());
    for (sys, sets) in system.iter().zip(gold) {
        let empty = [Vec::new()];
        let sets: &[Vec<Edit>] = if sets.is_empty() { &empty } else { sets };
        let mut best: Option<(f64, SentenceScore)> = None;
        for (a, set) in sets.iter().enumerate() {
            let s = SentenceScore {
                tp: matches(sys, set),
                proposed: sys.len(),
                gold: set.len(),
                annotator: a,
            };
            let f = f_beta(tp + s.tp, proposed + s.proposed, gold_n + s.gold, 0.5)?.f;
            let better = match &best {
                None => true,
                Some((bf, bs)) => f > *bf || (f == *bf && s.tp > bs.tp),
            };
            if better {
                best = Some((f, s));
            }
        }
        let (_, s) = best.expect("at least one edit set");
        tp += s.tp;
        proposed += s.proposed;
        gold_n += s.gold;
        sentences.push(s);
    }
    Ok(ScoreReport {
        tp,
        proposed,
        gold: gold_n,
        prf: f_beta(tp, proposed, gold_n, 0.5)?,
        sentences,
    })
}

/// Gold edit sets of a document with no-op edits dropped.
pub fn gold_edit_sets(doc: &M2Document) -> Vec<Vec<Vec<Edit>>> {
    doc.sentences
        .iter()
        .map(|s| {
            s.edit_sets()
                .into_iter()
                .map(|set| set.iter().filter(|e| !e.is_noop(&s.source)).cloned().collect())
                .collect()
        })
        .collect()
}

/// System edits of each output against its M2 source sentence.
pub fn system_edit_sets(outputs: &[Vec<String>], doc: &M2Document) -> Result<Vec<Vec<Edit>>> {
    if outputs.len() != doc.sentences.len() {
        return Err(Error::Shape(format!(
            "{} output lines for {} annotated sentences",
            outputs.len(),
            doc.sentences.len()
        )));
    }
    Ok(outputs
        .iter()
        .zip(&doc.sentences)
        .map(|(o, s)| extract_edits(&s.source, o))
        .collect())
}

/// Scores tokenized system outputs, one per M2 sentence.
pub fn score_m2(outputs: &[Vec<String>], doc: &M2Document) -> Result<ScoreReport> {
    score_edit_sets(&system_edit_sets(outputs, doc)?, &gold_edit_sets(doc))
}
