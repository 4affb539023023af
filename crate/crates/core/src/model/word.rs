use crate::corpus::{BOS, UNK};
use crate::error::{Error, Result};
use crate::model::params::{AttentionParams, ModelParams};
use crate::numcore::{gru_cell, Graph, Var};

/// Score added to masked positions; its exponential underflows to zero.
const MASKED: f64 = -1e30;

/// Keys and values one attention layer reads from.
#[derive(Clone, Debug)]
pub struct AttentionMemory {
    /// `T x D` stacked states.
    pub values: Var,
    /// `T x A` projected keys, `phi2(value)` per row.
    pub keys: Var,
    pub len: usize,
    /// `false` positions receive zero weight.
    pub mask: Option<Vec<bool>>,
}

impl AttentionMemory {
    pub fn build(g: &mut Graph<'_>, att: &AttentionParams, states: &[Var]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Invalid("attention over an empty sequence".into()));
        }
        let (kw, kb) = (g.param(att.key_w), g.param(att.key_b));
        let mut keys = Vec::with_capacity(states.len());
        for &h in states {
            let a = g.linear(&[(kw, h)], Some(kb))?;
            keys.push(g.tanh(a));
        }
        Ok(AttentionMemory {
            values: g.stack(states)?,
            keys: g.stack(&keys)?,
            len: states.len(),
            mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len {
            return Err(Error::Shape(format!("mask of {} for {} positions", mask.len(), self.len)));
        }
        self.mask = Some(mask);
        Ok(self)
    }
}

/// Normalized weights over memory positions and the weighted sum of values.
#[derive(Clone, Copy, Debug)]
pub struct Attended {
    pub weights: Var,
    pub context: Var,
}

/// `softmax_k(phi1(query) . phi2(h_k))` and the matching context vector.
pub fn attend(g: &mut Graph<'_>, att: &AttentionParams, query: Var, memory: &AttentionMemory) -> Result<Attended> {
    let (qw, qb) = (g.param(att.query_w), g.param(att.query_b));
    let qa = g.linear(&[(qw, query)], Some(qb))?;
    let q = g.tanh(qa);
    let mut scores = g.matvec(memory.keys, q)?;
    if let Some(mask) = &memory.mask {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Invalid("every attention position is masked".into()));
        }
        let offsets = mask.iter().map(|&m| if m { 0.0 } else { MASKED }).collect();
        let c = g.constant(offsets);
        scores = g.add(scores, c)?;
    }
    let weights = g.softmax(scores)?;
    let context = g.mat_t_vec(memory.values, weights)?;
    Ok(Attended { weights, context })
}

/// Bidirectional encoder output: `[fwd_k; bwd_k]` per source position.
#[derive(Clone, Debug)]
pub struct EncodedSource {
    pub states: Vec<Var>,
    pub memory: AttentionMemory,
}

/// Runs both encoder directions over `embeddings` (dropout already applied
/// by the caller, if any).
pub fn encode_source(g: &mut Graph<'_>, m: &ModelParams, embeddings: &[Var]) -> Result<EncodedSource> {
    if embeddings.is_empty() {
        return Err(Error::Invalid("cannot encode an empty source sentence".into()));
    }
    let h = m.dims.hidden;
    let w = &m.word;
    let mut fwd = Vec::with_capacity(embeddings.len());
    let mut state = g.zeros(h);
    for &x in embeddings {
        state = gru_cell(g, &w.enc_fwd, state, x)?;
        fwd.push(state);
    }
    let mut bwd = vec![state; embeddings.len()];
    let mut state = g.zeros(h);
    for (k, &x) in embeddings.iter().enumerate().rev() {
        state = gru_cell(g, &w.enc_bwd, state, x)?;
        bwd[k] = state;
    }
    let states: Vec<Var> = fwd.iter().zip(&bwd).map(|(&f, &b)| g.concat(&[f, b])).collect();
    let memory = AttentionMemory::build(g, &w.attention, &states)?;
    Ok(EncodedSource { states, memory })
}

/// Source word embeddings; `oov` supplies replacements for positions whose
/// id is `UNK` (character-composed in the hybrid variants).
pub fn embed_source(
    g: &mut Graph<'_>,
    m: &ModelParams,
    ids: &[u32],
    mut oov: impl FnMut(&mut Graph<'_>, usize) -> Result<Option<Var>>,
) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(ids.len());
    for (k, &id) in ids.iter().enumerate() {
        let e = match if id == UNK { oov(g, k)? } else { None } {
            Some(v) => v,
            None => g.row(m.word.src_embed, id as usize)?,
        };
        out.push(g.dropout(e));
    }
    Ok(out)
}

/// State after one word decoder step.
#[derive(Clone, Copy, Debug)]
pub struct WordStep {
    /// Recurrent state `d_s`.
    pub state: Var,
    /// `ReLU(W [c_s; d_s])`, fed back at the next step.
    pub combined: Var,
    pub attention: Attended,
    /// Log-probabilities over the target vocabulary.
    pub log_probs: Var,
}

/// The learned state preceding the first decoder step.
pub fn initial_state(g: &mut Graph<'_>, m: &ModelParams) -> Var {
    g.param(m.word.dec_init)
}

/// One decoder step given the previous combined state and previous token.
pub fn decode_step(
    g: &mut Graph<'_>,
    m: &ModelParams,
    prev_combined: Var,
    prev_token: u32,
    source: &EncodedSource,
) -> Result<WordStep> {
    let w = &m.word;
    let e = g.row(w.tgt_embed, prev_token as usize)?;
    let e = g.dropout(e);
    let state = gru_cell(g, &w.dec, prev_combined, e)?;
    let attention = attend(g, &w.attention, state, &source.memory)?;
    let wc = g.param(w.combine);
    let cat = g.concat(&[attention.context, state]);
    let lin = g.matvec(wc, cat)?;
    let combined = g.relu(lin);
    let dropped = g.dropout(combined);
    let (ow, ob) = (g.param(w.out_w), g.param(w.out_b));
    let logits = g.linear(&[(ow, dropped)], Some(ob))?;
    let log_probs = g.log_softmax(logits)?;
    Ok(WordStep {
        state,
        combined,
        attention,
        log_probs,
    })
}

/// Teacher-forced pass over `target` (which ends in `EOS`), returning every
/// step and the summed log-likelihood of the target tokens.
pub fn teacher_force(
    g: &mut Graph<'_>,
    m: &ModelParams,
    source: &EncodedSource,
    target: &[u32],
) -> Result<(Vec<WordStep>, Var)> {
    let mut prev = initial_state(g, m);
    let mut prev_token = BOS;
    let mut steps = Vec::with_capacity(target.len());
    let mut terms = Vec::with_capacity(target.len());
    for &y in target {
        let step = decode_step(g, m, prev, prev_token, source)?;
        terms.push(g.pick(step.log_probs, y as usize)?);
        prev = step.combined;
        prev_token = y;
        steps.push(step);
    }
    let ll = g.sum(&terms);
    Ok((steps, ll))
}

/// Negative log-likelihood of one target sentence under the word model.
pub fn word_loss(g: &mut Graph<'_>, m: &ModelParams, source: &[u32], target: &[u32]) -> Result<Var> {
    let emb = embed_source(g, m, source, |_, _| Ok(None))?;
    let enc = encode_source(g, m, &emb)?;
    let (_, ll) = teacher_force(g, m, &enc, target)?;
    Ok(g.scale(ll, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS;
    use crate::model::params::{ModelDims, Variant};
    use crate::numcore::{check_gradients, softmax, Rng, Tensor};

    fn random_model(variant: Variant, dims: ModelDims, seed: u64, scale: f32) -> ModelParams {
        let mut m = ModelParams::new(variant, dims);
        let mut rng = Rng::new(seed);
        let ids: Vec<_> = m.set.ids().collect();
        for id in ids {
            for x in m.set.get_mut(id).data_mut() {
                *x = rng.uniform(-scale, scale);
            }
        }
        m
    }

    fn fill(m: &mut ModelParams, id: crate::numcore::ParamId, values: &[f32]) {
        let shape = m.set.get(id).shape().to_vec();
        *m.set.get_mut(id) = Tensor::new(shape, values.to_vec()).unwrap();
    }

    #[test]
    fn single_position_attends_fully() {
        let dims = ModelDims::uniform(8, 8, 5, 3);
        let m = random_model(Variant::Baseline, dims, 3, 0.5);
        let mut g = Graph::new(&m.set);
        let h = g.constant(vec![0.3, -0.2, 0.9, 0.1, 0.0, -0.7]);
        let mem = AttentionMemory::build(&mut g, &m.word.attention, &[h]).unwrap();
        let q = g.constant(vec![1.0, 2.0, -1.0]);
        let a = attend(&mut g, &m.word.attention, q, &mem).unwrap();
        assert_eq!(g.value(a.weights), &[1.0]);
        assert_eq!(g.value(a.context), g.value(h));
    }

    #[test]
    fn attention_matches_hand_computation() {
        let dims = ModelDims {
            src_vocab: 5,
            tgt_vocab: 5,
            char_vocab: 5,
            embed: 1,
            hidden: 1,
            char_embed: 1,
            attention: 1,
        };
        let mut m = ModelParams::new(Variant::Baseline, dims);
        let att = m.word.attention;
        fill(&mut m, att.query_w, &[0.5]);
        fill(&mut m, att.query_b, &[0.25]);
        fill(&mut m, att.key_w, &[1.0, -1.0]);
        fill(&mut m, att.key_b, &[0.0]);
        let mut g = Graph::new(&m.set);
        let h1 = g.constant(vec![0.2, 0.4]);
        let h2 = g.constant(vec![1.0, 0.0]);
        let mem = AttentionMemory::build(&mut g, &att, &[h1, h2]).unwrap();
        let d = g.constant(vec![2.0]);
        let a = attend(&mut g, &att, d, &mem).unwrap();

        let q = (0.5f64 * 2.0 + 0.25).tanh();
        let s = [q * (0.2f64 - 0.4).tanh(), q * 1.0f64.tanh()];
        let w = softmax(&s).unwrap();
        for (got, want) in g.value(a.weights).iter().zip(&w) {
            assert!((got - want).abs() < 1e-12);
        }
        let c = [w[0] * 0.2 + w[1] * 1.0, w[0] * 0.4];
        for (got, want) in g.value(a.context).iter().zip(&c) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_positions_get_zero_weight() {
        let dims = ModelDims::uniform(8, 8, 5, 2);
        let m = random_model(Variant::Baseline, dims, 4, 0.8);
        let mut g = Graph::new(&m.set);
        let hs: Vec<Var> = (0..4).map(|k| g.constant(vec![k as f64 * 0.3, -0.1, 0.5, k as f64])).collect();
        let mem = AttentionMemory::build(&mut g, &m.word.attention, &hs)
            .unwrap()
            .with_mask(vec![true, false, true, false])
            .unwrap();
        let q = g.constant(vec![0.4, -0.9]);
        let a = attend(&mut g, &m.word.attention, q, &mem).unwrap();
        let w = g.value(a.weights);
        assert_eq!(w[1], 0.0);
        assert_eq!(w[3], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mem = AttentionMemory::build(&mut g, &m.word.attention, &hs)
            .unwrap()
            .with_mask(vec![false; 4])
            .unwrap();
        assert!(attend(&mut g, &m.word.attention, q, &mem).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let dims = ModelDims::uniform(9, 7, 5, 3);
        let m = ModelParams::new(Variant::Baseline, dims);
        let mut g = Graph::new(&m.set);
        let loss = word_loss(&mut g, &m, &[4, 5, 6], &[4, EOS]).unwrap();
        // two tokens, each at probability 1/7
        assert!((g.scalar(loss) - 2.0 * 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_token_loss_matches_step_log_probs() {
        let dims = ModelDims::uniform(9, 9, 5, 3);
        let m = random_model(Variant::Baseline, dims, 7, 0.6);
        let mut g = Graph::new(&m.set);
        let emb = embed_source(&mut g, &m, &[4, 5], |_, _| Ok(None)).unwrap();
        let enc = encode_source(&mut g, &m, &emb).unwrap();
        let (steps, ll) = teacher_force(&mut g, &m, &enc, &[6, EOS]).unwrap();
        let want = g.value(steps[0].log_probs)[6] + g.value(steps[1].log_probs)[EOS as usize];
        assert_eq!(g.scalar(ll), want);
        for s in &steps {
            let p: f64 = g.value(s.log_probs).iter().map(|x| x.exp()).sum();
            assert!((p - 1.0).abs() < 1e-12);
            assert!((g.value(s.attention.weights).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn word_loss_gradients_match_finite_differences() {
        let dims = ModelDims::uniform(8, 8, 5, 4);
        let m = random_model(Variant::Baseline, dims, 11, 0.8);
        let err = check_gradients(
            &m.set,
            |g| word_loss(g, &m, &[4, 5, 6], &[5, 7, EOS]),
            1e-3,
            Some(400),
        )
        .unwrap();
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn identical_states_attend_uniformly() {
        let dims = ModelDims::uniform(8, 8, 5, 2);
        let m = random_model(Variant::Baseline, dims, 5, 0.9);
        let mut g = Graph::new(&m.set);
        let h = g.constant(vec![0.3, -0.6, 0.2, 0.8]);
        let mem = AttentionMemory::build(&mut g, &m.word.attention, &[h, h, h]).unwrap();
        let q = g.constant(vec![0.5, 0.1]);
        let a = attend(&mut g, &m.word.attention, q, &mem).unwrap();
        for w in g.value(a.weights) {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_zero_weights_and_single_step() {
        let dims = ModelDims::uniform(8, 8, 5, 3);
        let zero = ModelParams::new(Variant::Baseline, dims);
        let mut g = Graph::new(&zero.set);
        let x: Vec<Var> = (0..3).map(|k| g.constant(vec![k as f64, 1.0, -1.0])).collect();
        let enc = encode_source(&mut g, &zero, &x).unwrap();
        for &h in &enc.states {
            assert_eq!(g.len_of(h), 6);
            assert!(g.value(h).iter().all(|&v| v == 0.0));
        }

        let m = random_model(Variant::Baseline, dims, 6, 0.7);
        let mut g = Graph::new(&m.set);
        let x = g.constant(vec![0.2, -0.4, 0.9]);
        let enc = encode_source(&mut g, &m, &[x]).unwrap();
        let z = g.zeros(3);
        let f = gru_cell(&mut g, &m.word.enc_fwd, z, x).unwrap();
        let b = gru_cell(&mut g, &m.word.enc_bwd, z, x).unwrap();
        let want: Vec<f64> = g.value(f).iter().chain(g.value(b)).copied().collect();
        assert_eq!(g.value(enc.states[0]), &want[..]);
    }

    #[test]
    fn tied_directions_mirror_under_reversal() {
        let dims = ModelDims::uniform(8, 8, 5, 3);
        let mut m = random_model(Variant::Baseline, dims, 7, 0.7);
        let (f, b) = (m.word.enc_fwd, m.word.enc_bwd);
        for (src, dst) in [(f.wz, b.wz), (f.uz, b.uz), (f.bz, b.bz), (f.wr, b.wr), (f.ur, b.ur), (f.br, b.br), (f.wh, b.wh), (f.uh, b.uh), (f.bh, b.bh)] {
            let t = m.set.get(src).clone();
            *m.set.get_mut(dst) = t;
        }
        let mut g = Graph::new(&m.set);
        let xs: Vec<Var> = (0..3).map(|k| g.constant(vec![0.3 * k as f64, -0.5, 0.1 + k as f64])).collect();
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let a = encode_source(&mut g, &m, &xs).unwrap();
        let r = encode_source(&mut g, &m, &rev).unwrap();
        for k in 0..3 {
            let ha = g.value(a.states[k]);
            let hr = g.value(r.states[2 - k]);
            assert_eq!(&ha[..3], &hr[3..]);
            assert_eq!(&ha[3..], &hr[..3]);
        }
    }

    #[test]
    fn decode_step_is_deterministic_without_dropout() {
        let dims = ModelDims::uniform(8, 8, 5, 3);
        let m = random_model(Variant::Baseline, dims, 8, 0.7);
        let mut g = Graph::new(&m.set);
        let emb = embed_source(&mut g, &m, &[4, 5], |_, _| Ok(None)).unwrap();
        let enc = encode_source(&mut g, &m, &emb).unwrap();
        let init = initial_state(&mut g, &m);
        let a = decode_step(&mut g, &m, init, BOS, &enc).unwrap();
        let b = decode_step(&mut g, &m, init, BOS, &enc).unwrap();
        assert_eq!(g.value(a.log_probs), g.value(b.log_probs));
        assert!(g.value(a.combined).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn empty_source_is_error() {
        let m = ModelParams::new(Variant::Baseline, ModelDims::uniform(8, 8, 5, 2));
        let mut g = Graph::new(&m.set);
        assert!(word_loss(&mut g, &m, &[], &[EOS]).is_err());
    }
}
