use crate::corpus::parallel::SentencePair;
use crate::corpus::vocab::{CharVocabulary, VocabPair, Vocabulary, EOS, PAD, UNK};
use crate::numcore::Rng;

/// One tokenized side of a sentence pair in model form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSide {
    /// Word ids; out-of-vocabulary positions hold `UNK`.
    pub ids: Vec<u32>,
    /// Framed character ids at out-of-vocabulary positions, `None` elsewhere.
    pub chars: Vec<Option<Vec<u32>>>,
}

impl EncodedSide {
    pub fn encode(tokens: &[String], vocab: &Vocabulary, chars: &CharVocabulary) -> Self {
        let mut ids = Vec::with_capacity(tokens.len());
        let mut views = Vec::with_capacity(tokens.len());
        for t in tokens {
            match vocab.get(t) {
                Some(id) => {
                    ids.push(id);
                    views.push(None);
                }
                None => {
                    ids.push(UNK);
                    views.push(Some(chars.frame(t)));
                }
            }
        }
        EncodedSide { ids, chars: views }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_oov(&self, pos: usize) -> bool {
        self.chars[pos].is_some()
    }

    pub fn has_oov(&self) -> bool {
        self.chars.iter().any(Option::is_some)
    }
}

/// A training example: source positions, and target positions followed by
/// a final `EOS`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub source: EncodedSide,
    pub target: EncodedSide,
}

impl Example {
    pub fn encode(pair: &SentencePair, vocab: &VocabPair) -> Self {
        let mut target = EncodedSide::encode(&pair.target, &vocab.target, &vocab.chars);
        target.ids.push(EOS);
        target.chars.push(None);
        Example {
            source: EncodedSide::encode(&pair.source, &vocab.source, &vocab.chars),
            target,
        }
    }
}

/// Right-padded mini-batch with word-id and character views of both sides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// `[B x T]` source ids, `PAD` beyond each sentence.
    pub source: Vec<Vec<u32>>,
    pub source_mask: Vec<Vec<bool>>,
    pub source_chars: Vec<Vec<Option<Vec<u32>>>>,
    /// `[B x S]` target ids including the closing `EOS`.
    pub target: Vec<Vec<u32>>,
    pub target_mask: Vec<Vec<bool>>,
    pub target_chars: Vec<Vec<Option<Vec<u32>>>>,
}

fn pad_side(sides: &[&EncodedSide]) -> (Vec<Vec<u32>>, Vec<Vec<bool>>, Vec<Vec<Option<Vec<u32>>>>) {
    let width = sides.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(sides.len());
    let mut mask = Vec::with_capacity(sides.len());
    let mut chars = Vec::with_capacity(sides.len());
    for s in sides {
        let mut row = s.ids.clone();
        row.resize(width, PAD);
        let mut m = vec![true; s.len()];
        m.resize(width, false);
        let mut c = s.chars.clone();
        c.resize(width, None);
        ids.push(row);
        mask.push(m);
        chars.push(c);
    }
    (ids, mask, chars)
}

impl Batch {
    pub fn from_examples(examples: &[Example]) -> Self {
        let src: Vec<&EncodedSide> = examples.iter().map(|e| &e.source).collect();
        let tgt: Vec<&EncodedSide> = examples.iter().map(|e| &e.target).collect();
        let (source, source_mask, source_chars) = pad_side(&src);
        let (target, target_mask, target_chars) = pad_side(&tgt);
        Batch {
            source,
            source_mask,
            source_chars,
            target,
            target_mask,
            target_chars,
        }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Unpadded view of row `i`.
    pub fn example(&self, i: usize) -> Example {
        let unpad = |ids: &[u32], mask: &[bool], chars: &[Option<Vec<u32>>]| {
            let n = mask.iter().filter(|&&m| m).count();
            EncodedSide {
                ids: ids[..n].to_vec(),
                chars: chars[..n].to_vec(),
            }
        };
        Example {
            source: unpad(&self.source[i], &self.source_mask[i], &self.source_chars[i]),
            target: unpad(&self.target[i], &self.target_mask[i], &self.target_chars[i]),
        }
    }

    pub fn examples(&self) -> Vec<Example> {
        (0..self.len()).map(|i| self.example(i)).collect()
    }

    /// Number of target word positions, closing `EOS` included.
    pub fn target_tokens(&self) -> usize {
        self.target_mask.iter().flatten().filter(|&&m| m).count()
    }
}

/// Encodes `pairs` into a single padded batch.
pub fn encode_batch(pairs: &[SentencePair], vocab: &VocabPair) -> Batch {
    let examples: Vec<Example> = pairs.iter().map(|p| Example::encode(p, vocab)).collect();
    Batch::from_examples(&examples)
}

/// Splits examples into batches of at most `batch_size`, bucketed by source
/// length, then shuffles the batch order with `rng`.
pub fn make_batches(examples: &[Example], batch_size: usize, rng: &mut Rng) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    rng.shuffle(&mut order);
    // stable: equal lengths keep their shuffled order
    order.sort_by_key(|&i| examples[i].source.len());
    let mut batches: Vec<Batch> = order
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let ex: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            Batch::from_examples(&ex)
        })
        .collect();
    rng.shuffle(&mut batches);
    batches
}

/// Renders an encoded side back to tokens, using character views for
/// out-of-vocabulary positions.
pub fn decode_side(side: &EncodedSide, vocab: &Vocabulary, chars: &CharVocabulary) -> Vec<String> {
    side.ids
        .iter()
        .zip(&side.chars)
        .filter(|(&id, _)| id != EOS && id != PAD)
        .map(|(&id, view)| match view {
            Some(c) => chars.render(c),
            None => vocab.word(id).to_string(),
        })
        .collect()
}
