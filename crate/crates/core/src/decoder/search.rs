use crate::corpus::{EncodedSide, BOS, BOW, CHAR_PAD, CHAR_UNK, EOS, EOW, PAD, UNK};
use crate::decoder::beam::{search, BeamSpec};
use crate::error::{Error, Result};
use crate::model::{
    char_decode_step_basic, char_decode_step_nested, char_memory, decode_step, encode_sentence, hard_attention_index,
    initial_state, separate_path_init, teacher_force, AttentionMemory, ModelParams, SourceEncoding, Variant,
};
use crate::numcore::{Graph, Var};

/// Default maximum output length for a source of `source_len` words.
pub fn default_max_len(source_len: usize) -> usize {
    source_len * 3 / 2 + 5
}

/// Word-level search settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WordBeam {
    pub beam: usize,
    pub max_len: usize,
    pub length_norm: bool,
}

/// Character-level search settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CharBeam {
    pub beam: usize,
    pub max_chars: usize,
}

/// Character decoding result for one emitted `UNK`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnkSlot {
    /// Output position of the `UNK`.
    pub position: usize,
    /// Source position holding the largest attention weight at that step.
    pub aligned: usize,
    /// Whether the nested recurrence was used.
    pub nested: bool,
    /// Generated characters without framing; empty when generation produced
    /// nothing, in which case the aligned source word is copied.
    pub chars: Vec<u32>,
    pub char_log_prob: f64,
}

/// One word-level output sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Word ids, ending in `EOS` iff `complete`.
    pub tokens: Vec<u32>,
    pub step_log_probs: Vec<f64>,
    pub log_prob: f64,
    /// Attention weights over the source at each step.
    pub attention: Vec<Vec<f64>>,
    pub complete: bool,
    pub unks: Vec<UnkSlot>,
}

impl Hypothesis {
    /// Source position attended most strongly at output step `s`.
    pub fn aligned(&self, s: usize) -> Result<usize> {
        hard_attention_index(&self.attention[s])
    }
}

/// A generated character string, without framing.
#[derive(Clone, Debug, PartialEq)]
pub struct CharHypothesis {
    pub chars: Vec<u32>,
    pub step_log_probs: Vec<f64>,
    pub log_prob: f64,
    pub complete: bool,
}

#[derive(Clone, Debug)]
struct WordPayload {
    combined: Vec<f64>,
    state: Vec<f64>,
    context: Vec<f64>,
    attention: Vec<f64>,
}

const WORD_BANNED: [u32; 2] = [PAD, BOS];
const CHAR_BANNED: [u32; 3] = [CHAR_PAD, BOW, CHAR_UNK];

fn encode(g: &mut Graph<'_>, m: &ModelParams, source: &EncodedSide) -> Result<SourceEncoding> {
    encode_sentence(g, m, &source.ids, &source.chars)
}

fn word_search(
    g: &mut Graph<'_>,
    m: &ModelParams,
    enc: &SourceEncoding,
    opts: &WordBeam,
) -> Result<Vec<(Hypothesis, Vec<WordPayload>)>> {
    let mark = g.len();
    let spec = BeamSpec {
        beam: opts.beam,
        max_steps: opts.max_len,
        start: BOS,
        end: EOS,
        banned: &WORD_BANNED,
        length_norm: opts.length_norm,
    };
    let paths = search(&spec, |prev: Option<&WordPayload>, token| {
        g.truncate(mark);
        let prev = match prev {
            Some(p) => g.constant(p.combined.clone()),
            None => initial_state(g, m),
        };
        let step = decode_step(g, m, prev, token, &enc.words)?;
        Ok((
            g.value(step.log_probs).to_vec(),
            WordPayload {
                combined: g.value(step.combined).to_vec(),
                state: g.value(step.state).to_vec(),
                context: g.value(step.attention.context).to_vec(),
                attention: g.value(step.attention.weights).to_vec(),
            },
        ))
    })?;
    g.truncate(mark);
    Ok(paths
        .into_iter()
        .map(|p| {
            let h = Hypothesis {
                attention: p.steps.iter().map(|s| s.attention.clone()).collect(),
                tokens: p.tokens,
                step_log_probs: p.step_log_probs,
                log_prob: p.log_prob,
                complete: p.complete,
                unks: Vec::new(),
            };
            (h, p.steps)
        })
        .collect())
}

/// Word-level beam search. Returns up to `beam` hypotheses, best first;
/// completed ones when any completed, otherwise the incomplete survivors.
/// `UNK` tokens are left unresolved.
pub fn beam_search_words(m: &ModelParams, source: &EncodedSide, opts: &WordBeam) -> Result<Vec<Hypothesis>> {
    let mut g = Graph::new(&m.set);
    let enc = encode(&mut g, m, source)?;
    Ok(word_search(&mut g, m, &enc, opts)?.into_iter().map(|(h, _)| h).collect())
}

/// Character-level beam search from the decoder state `init`. With
/// `memory` the nested recurrence attends over those source character
/// states; otherwise the basic recurrence runs. Stops at `EOW`.
pub fn beam_search_chars(
    g: &mut Graph<'_>,
    m: &ModelParams,
    init: Var,
    memory: Option<&AttentionMemory>,
    opts: &CharBeam,
) -> Result<Vec<CharHypothesis>> {
    let mark = g.len();
    let init_value = g.value(init).to_vec();
    let spec = BeamSpec {
        beam: opts.beam,
        // room for the closing EOW
        max_steps: opts.max_chars + 1,
        start: BOW,
        end: EOW,
        banned: &CHAR_BANNED,
        length_norm: false,
    };
    let paths = search(&spec, |prev: Option<&Vec<f64>>, c| {
        g.truncate(mark);
        let prev = g.constant(prev.unwrap_or(&init_value).clone());
        let step = match memory {
            Some(mem) => char_decode_step_nested(g, m, prev, c, mem)?,
            None => char_decode_step_basic(g, m, prev, c)?,
        };
        Ok((g.value(step.log_probs).to_vec(), g.value(step.carry()).to_vec()))
    })?;
    g.truncate(mark);
    Ok(paths
        .into_iter()
        .map(|p| {
            let mut chars = p.tokens;
            if p.complete {
                chars.pop();
            }
            CharHypothesis {
                chars,
                step_log_probs: p.step_log_probs,
                log_prob: p.log_prob,
                complete: p.complete,
            }
        })
        .collect())
}

/// Full decoding of one sentence: word beam search, then one character
/// search per emitted `UNK` for models with a character decoder.
pub fn decode_sentence(
    m: &ModelParams,
    source: &EncodedSide,
    words: &WordBeam,
    chars: &CharBeam,
) -> Result<Vec<Hypothesis>> {
    let mut g = Graph::new(&m.set);
    let enc = encode(&mut g, m, source)?;
    let found = word_search(&mut g, m, &enc, words)?;
    let mut out = Vec::with_capacity(found.len());
    for (mut h, steps) in found {
        if m.variant.has_chars() {
            h.unks = resolve_unks(&mut g, m, &enc, &h, &steps, chars)?;
        }
        out.push(h);
    }
    Ok(out)
}

fn resolve_unks(
    g: &mut Graph<'_>,
    m: &ModelParams,
    enc: &SourceEncoding,
    h: &Hypothesis,
    steps: &[WordPayload],
    opts: &CharBeam,
) -> Result<Vec<UnkSlot>> {
    let mark = g.len();
    let mut slots = Vec::new();
    for (s, &t) in h.tokens.iter().enumerate() {
        if t != UNK {
            continue;
        }
        g.truncate(mark);
        let aligned = hard_attention_index(&steps[s].attention)?;
        let context = g.constant(steps[s].context.clone());
        let state = g.constant(steps[s].state.clone());
        let init = separate_path_init(g, m, context, state)?;
        let source_chars = match m.variant {
            Variant::Nested => enc.oov.get(&aligned),
            _ => None,
        };
        let memory = source_chars.map(|e| char_memory(g, m, e)).transpose()?;
        let best = beam_search_chars(g, m, init, memory.as_ref(), opts)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Numeric("character search returned nothing".into()))?;
        slots.push(UnkSlot {
            position: s,
            aligned,
            nested: memory.is_some(),
            chars: best.chars,
            char_log_prob: best.log_prob,
        });
    }
    g.truncate(mark);
    Ok(slots)
}

/// Per-step log-probabilities of `tokens` under teacher forcing.
pub fn forced_step_log_probs(m: &ModelParams, source: &EncodedSide, tokens: &[u32]) -> Result<Vec<f64>> {
    let mut g = Graph::new(&m.set);
    let enc = encode(&mut g, m, source)?;
    let (steps, _) = teacher_force(&mut g, m, &enc.words, tokens)?;
    steps
        .iter()
        .zip(tokens)
        .map(|(s, &t)| {
            g.value(s.log_probs)
                .get(t as usize)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("token {t} outside the target vocabulary")))
        })
        .collect()
}

/// Log-probability of a framed-free character string (`EOW` appended)
/// from `init`, for checking character searches.
pub fn forced_char_log_prob(
    g: &mut Graph<'_>,
    m: &ModelParams,
    init: Var,
    chars: &[u32],
    memory: Option<&AttentionMemory>,
) -> Result<f64> {
    let framed: Vec<u32> = std::iter::once(BOW).chain(chars.iter().copied()).chain([EOW]).collect();
    let ll = crate::model::char_sequence_loglik(g, m, init, &framed, memory)?;
    Ok(g.scalar(ll))
}
