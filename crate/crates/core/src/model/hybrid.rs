use std::collections::BTreeMap;

use crate::corpus::{Example, BOW};
use crate::error::{Error, Result};
use crate::model::params::{ModelParams, Variant};
use crate::model::word::{attend, embed_source, encode_source, teacher_force, Attended, AttentionMemory, EncodedSource};
use crate::numcore::{gru_cell, Graph, Var};

/// Character encoder run over one framed word.
#[derive(Clone, Debug)]
pub struct CharEncoding {
    /// State after each character, `BOW` and `EOW` included.
    pub states: Vec<Var>,
    /// Final state; stands in for the word embedding.
    pub last: Var,
}

/// Encodes `chars` (`BOW .. EOW`) with the character GRU.
pub fn compose_oov_embedding(g: &mut Graph<'_>, m: &ModelParams, chars: &[u32]) -> Result<CharEncoding> {
    let cp = m.chars()?;
    if chars.is_empty() {
        return Err(Error::Invalid("cannot compose an embedding from no characters".into()));
    }
    let mut state = g.zeros(m.dims.embed);
    let mut states = Vec::with_capacity(chars.len());
    for &c in chars {
        let e = g.row(cp.src_embed, c as usize)?;
        let e = g.dropout(e);
        state = gru_cell(g, &cp.encoder, state, e)?;
        states.push(state);
    }
    Ok(CharEncoding { states, last: state })
}

/// `ReLU(W^ [c_s; d_s])`, the initial state of the character decoder.
pub fn separate_path_init(g: &mut Graph<'_>, m: &ModelParams, context: Var, state: Var) -> Result<Var> {
    let w = g.param(m.chars()?.separate);
    let cat = g.concat(&[context, state]);
    let lin = g.matvec(w, cat)?;
    Ok(g.relu(lin))
}

/// Position of the largest attention weight; ties go to the earliest.
pub fn hard_attention_index(weights: &[f64]) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::Invalid("hard attention over no positions".into()));
    }
    if weights.iter().any(|w| w.is_nan()) {
        return Err(Error::Numeric("attention weights contain NaN".into()));
    }
    let mut best = 0;
    for (k, &w) in weights.iter().enumerate().skip(1) {
        if w > weights[best] {
            best = k;
        }
    }
    Ok(best)
}

/// One character decoder step.
#[derive(Clone, Copy, Debug)]
pub struct CharStep {
    /// Recurrent state `d^c_n`.
    pub state: Var,
    /// Nested decoder only: `ReLU(W_c [c^c_n; d^c_n])`.
    pub combined: Option<Var>,
    pub attention: Option<Attended>,
    /// Log-probabilities over the character vocabulary.
    pub log_probs: Var,
}

impl CharStep {
    /// The state handed to the next step.
    pub fn carry(&self) -> Var {
        self.combined.unwrap_or(self.state)
    }
}

fn char_output(g: &mut Graph<'_>, m: &ModelParams, h: Var) -> Result<Var> {
    let cp = m.chars()?;
    let (ow, ob) = (g.param(cp.out_w), g.param(cp.out_b));
    let logits = g.linear(&[(ow, h)], Some(ob))?;
    g.log_softmax(logits)
}

/// Basic character decoder step from the previous state and character.
pub fn char_decode_step_basic(g: &mut Graph<'_>, m: &ModelParams, prev: Var, prev_char: u32) -> Result<CharStep> {
    let cp = m.chars()?;
    let e = g.row(cp.tgt_embed, prev_char as usize)?;
    let e = g.dropout(e);
    let state = gru_cell(g, &cp.decoder, prev, e)?;
    let log_probs = char_output(g, m, state)?;
    Ok(CharStep {
        state,
        combined: None,
        attention: None,
        log_probs,
    })
}

/// Nested character decoder step attending over the characters of the
/// aligned source word.
pub fn char_decode_step_nested(
    g: &mut Graph<'_>,
    m: &ModelParams,
    prev: Var,
    prev_char: u32,
    source_chars: &AttentionMemory,
) -> Result<CharStep> {
    let cp = m.chars()?;
    let np = m.nested()?;
    let e = g.row(cp.tgt_embed, prev_char as usize)?;
    let e = g.dropout(e);
    let state = gru_cell(g, &np.decoder, prev, e)?;
    let attention = attend(g, &np.attention, state, source_chars)?;
    let wc = g.param(np.combine);
    let cat = g.concat(&[attention.context, state]);
    let lin = g.matvec(wc, cat)?;
    let combined = g.relu(lin);
    let log_probs = char_output(g, m, combined)?;
    Ok(CharStep {
        state,
        combined: Some(combined),
        attention: Some(attention),
        log_probs,
    })
}

/// Attention memory over a source word's character states.
pub fn char_memory(g: &mut Graph<'_>, m: &ModelParams, enc: &CharEncoding) -> Result<AttentionMemory> {
    AttentionMemory::build(g, &m.nested()?.attention, &enc.states)
}

/// Summed log-likelihood of `chars[1..]` given `chars[0]` (normally `BOW`)
/// and the initial state; uses the nested decoder when `memory` is given.
pub fn char_sequence_loglik(
    g: &mut Graph<'_>,
    m: &ModelParams,
    init: Var,
    chars: &[u32],
    memory: Option<&AttentionMemory>,
) -> Result<Var> {
    let Some((&first, rest)) = chars.split_first() else {
        return Err(Error::Invalid("empty character target".into()));
    };
    let mut prev = init;
    let mut prev_char = first;
    let mut terms = Vec::with_capacity(rest.len());
    for &c in rest {
        let step = match memory {
            Some(mem) => char_decode_step_nested(g, m, prev, prev_char, mem)?,
            None => char_decode_step_basic(g, m, prev, prev_char)?,
        };
        terms.push(g.pick(step.log_probs, c as usize)?);
        prev = step.carry();
        prev_char = c;
    }
    Ok(g.sum(&terms))
}

/// Source side of a sentence: word encoder states plus the character
/// encodings of OOV positions.
#[derive(Clone, Debug)]
pub struct SourceEncoding {
    pub words: EncodedSource,
    pub oov: BTreeMap<usize, CharEncoding>,
}

/// Embeds and encodes a source sentence; OOV positions are composed from
/// characters when the model has a character encoder.
pub fn encode_sentence(
    g: &mut Graph<'_>,
    m: &ModelParams,
    ids: &[u32],
    chars: &[Option<Vec<u32>>],
) -> Result<SourceEncoding> {
    let mut oov = BTreeMap::new();
    let compose = m.variant.has_chars();
    let emb = embed_source(g, m, ids, |g, k| match (compose, chars.get(k).and_then(Option::as_ref)) {
        (true, Some(c)) => {
            let enc = compose_oov_embedding(g, m, c)?;
            let last = enc.last;
            oov.insert(k, enc);
            Ok(Some(last))
        }
        _ => Ok(None),
    })?;
    Ok(SourceEncoding {
        words: encode_source(g, m, &emb)?,
        oov,
    })
}

/// Unweighted negative log-likelihoods of one sentence.
#[derive(Clone, Copy, Debug)]
pub struct SentenceTerms {
    pub word: Var,
    /// Character loss through the basic decoder.
    pub char_basic: Var,
    /// Character loss through the nested decoder.
    pub char_nested: Var,
    pub target_tokens: usize,
    pub target_chars: usize,
}

/// Teacher-forced losses for one example.
///
/// Every OOV target word adds a character loss, decoded from the separate
/// path of its word step. In the nested variant, when the hard-attended
/// source word is itself OOV the nested decoder is used and the loss counts
/// as nested; everything else counts as basic.
pub fn sentence_terms(g: &mut Graph<'_>, m: &ModelParams, ex: &Example) -> Result<SentenceTerms> {
    let src = encode_sentence(g, m, &ex.source.ids, &ex.source.chars)?;
    let (steps, ll) = teacher_force(g, m, &src.words, &ex.target.ids)?;
    let word = g.scale(ll, -1.0);
    let mut basic = Vec::new();
    let mut nested = Vec::new();
    let mut target_chars = 0;
    if m.variant.has_chars() {
        let mut memories: BTreeMap<usize, AttentionMemory> = BTreeMap::new();
        for (s, step) in steps.iter().enumerate() {
            let Some(chars) = ex.target.chars.get(s).and_then(Option::as_ref) else {
                continue;
            };
            if chars.first() != Some(&BOW) {
                return Err(Error::Invalid("character target must start with BOW".into()));
            }
            target_chars += chars.len() - 1;
            let init = separate_path_init(g, m, step.attention.context, step.state)?;
            let aligned = hard_attention_index(g.value(step.attention.weights))?;
            match (m.variant, src.oov.get(&aligned)) {
                (Variant::Nested, Some(enc)) => {
                    if !memories.contains_key(&aligned) {
                        let mem = char_memory(g, m, enc)?;
                        memories.insert(aligned, mem);
                    }
                    let ll = char_sequence_loglik(g, m, init, chars, memories.get(&aligned))?;
                    nested.push(ll);
                }
                _ => basic.push(char_sequence_loglik(g, m, init, chars, None)?),
            }
        }
    }
    let b = g.sum(&basic);
    let n = g.sum(&nested);
    Ok(SentenceTerms {
        word,
        char_basic: g.scale(b, -1.0),
        char_nested: g.scale(n, -1.0),
        target_tokens: ex.target.ids.len(),
        target_chars,
    })
}

/// Batch loss components, each averaged over sentences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub word: f64,
    pub char_basic: f64,
    pub char_nested: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `word + alpha * char_basic + beta * char_nested`.
    pub total: f64,
    pub sentences: usize,
    pub target_tokens: usize,
    pub target_chars: usize,
}

/// Weighted training loss of a batch; returns the scalar to differentiate
/// and its components.
pub fn total_loss(
    g: &mut Graph<'_>,
    m: &ModelParams,
    examples: &[Example],
    alpha: f64,
    beta: f64,
) -> Result<(Var, LossBreakdown)> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::Config(format!(
            "character loss weights must be non-negative, got alpha={alpha} beta={beta}"
        )));
    }
    if examples.is_empty() {
        return Err(Error::Invalid("loss of an empty batch".into()));
    }
    let (mut w, mut c1, mut c2) = (Vec::new(), Vec::new(), Vec::new());
    let (mut tokens, mut chars) = (0, 0);
    for ex in examples {
        let t = sentence_terms(g, m, ex)?;
        w.push(t.word);
        c1.push(t.char_basic);
        c2.push(t.char_nested);
        tokens += t.target_tokens;
        chars += t.target_chars;
    }
    let inv = 1.0 / examples.len() as f64;
    let mean = |g: &mut Graph<'_>, xs: &[Var]| {
        let s = g.sum(xs);
        g.scale(s, inv)
    };
    let word = mean(g, &w);
    let basic = mean(g, &c1);
    let nested = mean(g, &c2);
    let wb = g.scale(basic, alpha);
    let wn = g.scale(nested, beta);
    let total = g.sum(&[word, wb, wn]);
    let breakdown = LossBreakdown {
        word: g.scalar(word),
        char_basic: g.scalar(basic),
        char_nested: g.scalar(nested),
        alpha,
        beta,
        total: g.scalar(total),
        sentences: examples.len(),
        target_tokens: tokens,
        target_chars: chars,
    };
    Ok((total, breakdown))
}
