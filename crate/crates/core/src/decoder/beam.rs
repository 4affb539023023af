use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A scored token path with the per-step payload produced while expanding it.
#[derive(Clone, Debug)]
pub struct Path<S> {
    pub tokens: Vec<u32>,
    pub step_log_probs: Vec<f64>,
    pub log_prob: f64,
    /// Payload of the step that emitted each token.
    pub steps: Vec<S>,
    pub complete: bool,
}

impl<S> Path<S> {
    fn key(&self, length_norm: bool) -> f64 {
        if length_norm && !self.tokens.is_empty() {
            self.log_prob / self.tokens.len() as f64
        } else {
            self.log_prob
        }
    }
}

pub(crate) struct BeamSpec<'a> {
    pub beam: usize,
    pub max_steps: usize,
    pub start: u32,
    pub end: u32,
    /// Tokens never emitted.
    pub banned: &'a [u32],
    pub length_norm: bool,
}

fn by_score_desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Length-synchronous beam search.
///
/// `expand(payload_of_last_step, last_token)` returns log-probabilities
/// over the next token and the payload of that step (`None` before the
/// first step). Each step keeps the `beam` best extensions; extensions
/// ending in `end` retire. Returns completed paths best first, or, when
/// none completed within `max_steps`, the live paths marked incomplete.
pub(crate) fn search<S: Clone>(
    spec: &BeamSpec<'_>,
    mut expand: impl FnMut(Option<&S>, u32) -> Result<(Vec<f64>, S)>,
) -> Result<Vec<Path<S>>> {
    if spec.beam == 0 {
        return Err(Error::Invalid("beam width must be at least 1".into()));
    }
    if spec.max_steps == 0 {
        return Err(Error::Invalid("maximum length must be at least 1".into()));
    }
    let mut live = vec![Path::<S> {
        tokens: Vec::new(),
        step_log_probs: Vec::new(),
        log_prob: 0.0,
        steps: Vec::new(),
        complete: false,
    }];
    let mut done: Vec<Path<S>> = Vec::new();

    for _ in 0..spec.max_steps {
        // (score, parent, token, step log-prob)
        let mut cands: Vec<(f64, usize, u32, f64)> = Vec::new();
        let mut payloads = Vec::with_capacity(live.len());
        for (pi, p) in live.iter().enumerate() {
            let prev = p.tokens.last().copied().unwrap_or(spec.start);
            let (lp, payload) = expand(p.steps.last(), prev)?;
            if lp.iter().any(|x| x.is_nan()) {
                return Err(Error::Numeric("NaN log-probability during beam search".into()));
            }
            let mut local: Vec<(f64, u32)> = lp
                .iter()
                .enumerate()
                .filter(|(t, _)| !spec.banned.contains(&(*t as u32)))
                .map(|(t, &l)| (l, t as u32))
                .collect();
            // only the best `beam` tokens of one parent can survive
            local.sort_by(|a, b| by_score_desc(a.0, b.0).then(a.1.cmp(&b.1)));
            local.truncate(spec.beam);
            cands.extend(local.into_iter().map(|(l, t)| (p.log_prob + l, pi, t, l)));
            payloads.push(payload);
        }
        cands.sort_by(|a, b| by_score_desc(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(spec.beam);

        let mut next = Vec::with_capacity(cands.len());
        for (score, pi, t, l) in cands {
            let parent = &live[pi];
            let mut p = Path {
                tokens: parent.tokens.clone(),
                step_log_probs: parent.step_log_probs.clone(),
                log_prob: score,
                steps: parent.steps.clone(),
                complete: t == spec.end,
            };
            p.tokens.push(t);
            p.step_log_probs.push(l);
            p.steps.push(payloads[pi].clone());
            if p.complete {
                done.push(p);
            } else {
                next.push(p);
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        if !spec.length_norm && done.len() >= spec.beam {
            // scores only fall, so no live path can enter the top `beam`
            let mut scores: Vec<f64> = done.iter().map(|p| p.log_prob).collect();
            scores.sort_by(|a, b| by_score_desc(*a, *b));
            if scores[spec.beam - 1] >= live[0].log_prob {
                break;
            }
        }
    }

    let mut out = if done.is_empty() { live } else { done };
    out.sort_by(|a, b| by_score_desc(a.key(spec.length_norm), b.key(spec.length_norm)));
    out.truncate(spec.beam);
    Ok(out)
}
