use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::parallel::tokenize;
use crate::error::{Error, Result};
use crate::eval::Edit;

/// One gold-annotated sentence: source tokens and per-annotator edit sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct M2Sentence {
    pub source: Vec<String>,
    /// Annotator id -> that annotator's edits, sorted by span.
    pub annotators: BTreeMap<u32, Vec<Edit>>,
}

impl M2Sentence {
    pub fn new(source: Vec<String>) -> Self {
        M2Sentence {
            source,
            annotators: BTreeMap::new(),
        }
    }

    /// Edit sets in annotator order; a sentence with no annotation has one
    /// empty set.
    pub fn edit_sets(&self) -> Vec<&[Edit]> {
        if self.annotators.is_empty() {
            vec![&[]]
        } else {
            self.annotators.values().map(Vec::as_slice).collect()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct M2Document {
    pub sentences: Vec<M2Sentence>,
}

const NONE: &str = "-NONE-";

fn finish(sentence: &mut M2Sentence, origin: &str, line: usize) -> Result<()> {
    for edits in sentence.annotators.values_mut() {
        edits.sort();
        for pair in edits.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.start < a.end {
                return Err(Error::parse(origin, line, format!("overlapping edits {a} and {b}")));
            }
        }
    }
    Ok(())
}

/// Parses M2 text: an `S` line, then `A` lines, blank line between sentences.
pub fn parse_m2_str(text: &str, origin: &str) -> Result<M2Document> {
    let mut doc = M2Document::default();
    let mut current: Option<M2Sentence> = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = raw.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix("S ").or(if line == "S" { Some("") } else { None }) {
            if let Some(mut s) = current.take() {
                finish(&mut s, origin, lineno)?;
                doc.sentences.push(s);
            }
            current = Some(M2Sentence::new(tokenize(rest)));
        } else if let Some(rest) = line.strip_prefix("A ") {
            let Some(sentence) = current.as_mut() else {
                return Err(Error::parse(origin, lineno, "A line before any S line"));
            };
            let fields: Vec<&str> = rest.split("|||").collect();
            if fields.len() != 6 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 6 '|||' fields, found {}", fields.len()),
                ));
            }
            let mut span = fields[0].split_whitespace();
            let (Some(start), Some(end), None) = (span.next(), span.next(), span.next()) else {
                return Err(Error::parse(origin, lineno, "malformed span"));
            };
            let annotator: u32 = fields[5]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, lineno, "malformed annotator id"))?;
            let set = sentence.annotators.entry(annotator).or_default();
            let kind = fields[1].trim();
            if kind.eq_ignore_ascii_case("noop") || start == "-1" {
                continue;
            }
            let parse = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad offset {s}")))
            };
            let (start, end) = (parse(start)?, parse(end)?);
            if start > end || end > sentence.source.len() {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("span {start}..{end} outside sentence of {}", sentence.source.len()),
                ));
            }
            let correction = fields[2].trim();
            let replacement = if correction == NONE {
                Vec::new()
            } else {
                tokenize(correction)
            };
            let mut edit = Edit::new(start, end, replacement);
            edit.kind = Some(kind.to_string());
            if !edit.is_noop(&sentence.source) {
                set.push(edit);
            }
        } else if !line.trim().is_empty() {
            return Err(Error::parse(origin, lineno, "expected S or A line"));
        }
    }
    if let Some(mut s) = current.take() {
        finish(&mut s, origin, last_line)?;
        doc.sentences.push(s);
    }
    Ok(doc)
}

pub fn parse_m2(path: &Path) -> Result<M2Document> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::parse(path.display().to_string(), 0, "invalid UTF-8"))?;
    parse_m2_str(&text, &path.display().to_string())
}

impl M2Document {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Serializes back to M2 text.
    pub fn to_m2_string(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            let _ = writeln!(out, "S {}", s.source.join(" "));
            for (ann, edits) in &s.annotators {
                if edits.is_empty() {
                    let _ = writeln!(out, "A -1 -1|||noop|||{NONE}|||REQUIRED|||{NONE}|||{ann}");
                }
                for e in edits {
                    let kind = e.kind.as_deref().unwrap_or("Edit");
                    let _ = writeln!(
                        out,
                        "A {} {}|||{kind}|||{}|||REQUIRED|||{NONE}|||{ann}",
                        e.start,
                        e.end,
                        e.target_text()
                    );
                }
            }
            out.push('\n');
        }
        out
    }
}
