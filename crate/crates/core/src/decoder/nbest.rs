use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One candidate correction of input sentence `index`.
#[derive(Clone, Debug, PartialEq)]
pub struct NbestEntry {
    pub index: usize,
    pub tokens: Vec<String>,
    /// Log-probability under the neural model.
    pub nn_log_prob: f64,
}

/// `index ||| tokens ||| nn_logprob` per line. Floats use the shortest
/// representation that parses back to the same value.
pub fn format_nbest(entries: &[NbestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{} ||| {} ||| {:?}", e.index, e.tokens.join(" "), e.nn_log_prob);
    }
    out
}

pub fn parse_nbest(text: &str, origin: &str) -> Result<Vec<NbestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(" ||| ").collect();
        let bad = |msg: &str| Error::parse(origin, i + 1, msg);
        let [index, tokens, score] = fields.as_slice() else {
            return Err(bad("expected `index ||| tokens ||| nn_logprob`"));
        };
        let index = index.trim().parse().map_err(|_| bad("bad sentence index"))?;
        let nn_log_prob: f64 = score.trim().parse().map_err(|_| bad("bad log-probability"))?;
        if nn_log_prob.is_nan() {
            return Err(bad("log-probability is NaN"));
        }
        out.push(NbestEntry {
            index,
            tokens: tokens.split_whitespace().map(str::to_string).collect(),
            nn_log_prob,
        });
    }
    Ok(out)
}

/// Groups entries by sentence index, keeping file order within a group.
/// Indices must cover `0..n` without gaps.
pub fn group_nbest(entries: Vec<NbestEntry>) -> Result<Vec<Vec<NbestEntry>>> {
    let n = entries.iter().map(|e| e.index + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); n];
    for e in entries {
        groups[e.index].push(e);
    }
    if let Some(k) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Format(format!("n-best list has no candidates for sentence {k}")));
    }
    Ok(groups)
}
