use crate::corpus::M2Document;
use crate::decoder::NbestEntry;
use crate::error::{Error, Result};
use crate::eval::score_m2;
use crate::lm::kn::NgramModel;

/// A candidate with its language-model score and interpolated score.
#[derive(Clone, Debug, PartialEq)]
pub struct Reranked {
    pub entry: NbestEntry,
    pub lm_log_prob: f64,
    pub score: f64,
}

/// The default interpolation weights: 0.0 to 2.0 in steps of 0.1.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("interpolation weight must be finite and non-negative, got {lambda}")))
    }
}

/// Orders candidates by `nn + λ·lm`, best first. Ties go to the higher
/// neural score, then to the earlier candidate.
pub fn rerank_scored(candidates: &[NbestEntry], lm_scores: &[f64], lambda: f64) -> Result<Vec<Reranked>> {
    check_lambda(lambda)?;
    if candidates.len() != lm_scores.len() {
        return Err(Error::Invalid("one language-model score is needed per candidate".into()));
    }
    let mut out: Vec<Reranked> = candidates
        .iter()
        .zip(lm_scores)
        .map(|(e, &lm)| Reranked {
            entry: e.clone(),
            lm_log_prob: lm,
            // λ = 0 must not turn an infinite LM penalty into NaN
            score: if lambda == 0.0 { e.nn_log_prob } else { e.nn_log_prob + lambda * lm },
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.entry.nn_log_prob.total_cmp(&a.entry.nn_log_prob))
    });
    Ok(out)
}

pub fn rerank(candidates: &[NbestEntry], lm: &NgramModel, lambda: f64) -> Result<Vec<Reranked>> {
    let scores: Vec<f64> = candidates.iter().map(|c| lm.log_prob(&c.tokens)).collect();
    rerank_scored(candidates, &scores, lambda)
}

/// Development F0.5 at each grid point, and the winning weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Tuning {
    pub lambda: f64,
    pub f: f64,
    pub grid: Vec<(f64, f64)>,
}

/// Picks the weight whose reranked 1-best output scores the highest F0.5
/// against `gold`; ties go to the smaller weight.
pub fn tune_lambda(groups: &[Vec<NbestEntry>], lm: &NgramModel, gold: &M2Document, grid: &[f64]) -> Result<Tuning> {
    let lm_scores: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| g.iter().map(|c| lm.log_prob(&c.tokens)).collect())
        .collect();
    tune_lambda_scored(groups, &lm_scores, gold, grid)
}

pub fn tune_lambda_scored(
    groups: &[Vec<NbestEntry>],
    lm_scores: &[Vec<f64>],
    gold: &M2Document,
    grid: &[f64],
) -> Result<Tuning> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty interpolation weight grid".into()));
    }
    let mut results = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let best: Vec<Vec<String>> = groups
            .iter()
            .zip(lm_scores)
            .map(|(g, s)| {
                let r = rerank_scored(g, s, lambda)?;
                r.into_iter()
                    .next()
                    .map(|c| c.entry.tokens)
                    .ok_or_else(|| Error::Invalid("sentence without candidates".into()))
            })
            .collect::<Result<_>>()?;
        results.push((lambda, score_m2(&best, gold)?.prf.f));
    }
    let (lambda, f) = results
        .iter()
        .copied()
        .fold(None, |acc: Option<(f64, f64)>, (l, f)| match acc {
            Some((bl, bf)) if bf > f || (bf == f && bl <= l) => Some((bl, bf)),
            _ => Some((l, f)),
        })
        .expect("grid is nonempty");
    Ok(Tuning {
        lambda,
        f,
        grid: results,
    })
}
