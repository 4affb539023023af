//! Beam-search decoding, character generation for unknown words and
//! attention-guided unknown-word replacement.

mod beam;
mod lexicon;
mod nbest;
mod search;

use std::thread;

pub use beam::Path;
pub use lexicon::{build_correction_lexicon, unk_replace, CorrectionLexicon};
pub use nbest::{format_nbest, group_nbest, parse_nbest, NbestEntry};
pub use search::{
    beam_search_chars, beam_search_words, decode_sentence, default_max_len, forced_char_log_prob,
    forced_step_log_probs, CharBeam, CharHypothesis, Hypothesis, UnkSlot, WordBeam,
};

use crate::corpus::{EncodedSide, VocabPair, EOS, UNK};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Inference settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeOptions {
    pub beam: usize,
    pub char_beam: usize,
    pub max_chars: usize,
    pub length_norm: bool,
    /// Candidates kept per sentence.
    pub nbest: usize,
    pub workers: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam: 12,
            char_beam: 10,
            max_chars: 30,
            length_norm: false,
            nbest: 1,
            workers: 1,
        }
    }
}

/// Turns a hypothesis into surface tokens.
///
/// `UNK`s resolved by character search render their characters; an empty
/// character string copies the aligned source word. Unresolved `UNK`s go
/// through the lexicon when one is given, else copy the source word.
pub fn render_hypothesis(
    h: &Hypothesis,
    source: &[String],
    vocab: &VocabPair,
    lexicon: Option<&CorrectionLexicon>,
) -> Result<Vec<String>> {
    let word = |t: u32| vocab.target.word(t).to_string();
    if h.unks.is_empty() {
        let empty = CorrectionLexicon::default();
        return unk_replace(h, source, lexicon.unwrap_or(&empty), word);
    }
    let mut slots = h.unks.iter();
    let mut out = Vec::with_capacity(h.tokens.len());
    for &t in &h.tokens {
        if t == EOS {
            break;
        }
        if t != UNK {
            out.push(word(t));
            continue;
        }
        let slot = slots
            .next()
            .ok_or_else(|| Error::Invalid("unknown word without a character decode".into()))?;
        if slot.chars.is_empty() {
            let src = source
                .get(slot.aligned)
                .ok_or_else(|| Error::Invalid("alignment beyond the source".into()))?;
            out.push(src.clone());
        } else {
            out.push(vocab.chars.render(&slot.chars));
        }
    }
    Ok(out)
}

/// Decoded candidates for one input sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    pub hypotheses: Vec<Hypothesis>,
    /// Rendered candidates, best first, as n-best entries.
    pub candidates: Vec<NbestEntry>,
}

impl Translation {
    pub fn best(&self) -> &[String] {
        &self.candidates[0].tokens
    }
}

fn translate_one(
    m: &ModelParams,
    vocab: &VocabPair,
    lexicon: Option<&CorrectionLexicon>,
    index: usize,
    source: &[String],
    opts: &DecodeOptions,
) -> Result<Translation> {
    if source.is_empty() {
        return Ok(Translation {
            hypotheses: Vec::new(),
            candidates: vec![NbestEntry {
                index,
                tokens: Vec::new(),
                nn_log_prob: 0.0,
            }],
        });
    }
    let side = EncodedSide::encode(source, &vocab.source, &vocab.chars);
    let words = WordBeam {
        beam: opts.beam,
        max_len: default_max_len(source.len()),
        length_norm: opts.length_norm,
    };
    let chars = CharBeam {
        beam: opts.char_beam,
        max_chars: opts.max_chars,
    };
    let mut hypotheses = decode_sentence(m, &side, &words, &chars)?;
    hypotheses.truncate(opts.nbest.max(1));
    let candidates = hypotheses
        .iter()
        .map(|h| {
            Ok(NbestEntry {
                index,
                tokens: render_hypothesis(h, source, vocab, lexicon)?,
                nn_log_prob: h.log_prob,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Translation { hypotheses, candidates })
}

/// Decodes every sentence; output order matches input order regardless of
/// the number of workers.
pub fn translate_corpus(
    m: &ModelParams,
    vocab: &VocabPair,
    lexicon: Option<&CorrectionLexicon>,
    sources: &[Vec<String>],
    opts: &DecodeOptions,
) -> Result<Vec<Translation>> {
    let workers = opts.workers.clamp(1, sources.len().max(1));
    if workers == 1 {
        return sources
            .iter()
            .enumerate()
            .map(|(i, s)| translate_one(m, vocab, lexicon, i, s, opts))
            .collect();
    }
    let results: Vec<Vec<(usize, Result<Translation>)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..sources.len())
                        .step_by(workers)
                        .map(|i| (i, translate_one(m, vocab, lexicon, i, &sources[i], opts)))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("decoder worker panicked"))
            .collect()
    });
    let mut slots: Vec<Option<Result<Translation>>> = (0..sources.len()).map(|_| None).collect();
    for (i, r) in results.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every sentence decoded")).collect()
}
