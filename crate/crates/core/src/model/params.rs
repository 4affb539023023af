use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{GruParams, ParamId, ParamSet, Tensor};

/// The three architectures sharing one parameter layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Word model; target UNKs are filled by lexicon lookup after decoding.
    Baseline,
    /// Character encoder for source OOVs and a character decoder for target
    /// OOVs, without character attention.
    Hybrid,
    /// Hybrid plus character-level attention when a target OOV aligns to a
    /// source OOV.
    Nested,
}

impl Variant {
    pub fn has_chars(self) -> bool {
        !matches!(self, Variant::Baseline)
    }

    pub fn is_nested(self) -> bool {
        matches!(self, Variant::Nested)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Hybrid => "hybrid",
            Variant::Nested => "nested",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "hybrid" => Ok(Variant::Hybrid),
            "nested" => Ok(Variant::Nested),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (expected baseline, hybrid or nested)"
            ))),
        }
    }
}

/// Layer sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub char_vocab: usize,
    /// Word embedding size; also the character encoder's state size.
    pub embed: usize,
    /// Recurrent state size of every decoder and of each encoder direction.
    pub hidden: usize,
    pub char_embed: usize,
    /// Size of the attention projections.
    pub attention: usize,
}

impl ModelDims {
    /// Equal embedding, hidden, character and attention sizes.
    pub fn uniform(src_vocab: usize, tgt_vocab: usize, char_vocab: usize, size: usize) -> Self {
        ModelDims {
            src_vocab,
            tgt_vocab,
            char_vocab,
            embed: size,
            hidden: size,
            char_embed: size,
            attention: size,
        }
    }
}

/// `phi1(query) . phi2(key)` scoring, each `phi` a linear map plus tanh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub query_w: ParamId,
    pub query_b: ParamId,
    pub key_w: ParamId,
    pub key_b: ParamId,
}

impl AttentionParams {
    fn register(ps: &mut ParamSet, prefix: &str, query: usize, key: usize, size: usize) -> Self {
        AttentionParams {
            query_w: ps.register(&format!("{prefix}.query_w"), &[size, query]),
            query_b: ps.register(&format!("{prefix}.query_b"), &[size]),
            key_w: ps.register(&format!("{prefix}.key_w"), &[size, key]),
            key_b: ps.register(&format!("{prefix}.key_b"), &[size]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordParams {
    pub src_embed: ParamId,
    pub tgt_embed: ParamId,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub dec: GruParams,
    /// Learned state fed to the decoder at the first step.
    pub dec_init: ParamId,
    pub attention: AttentionParams,
    /// `W` in `ReLU(W [c; d])`.
    pub combine: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CharParams {
    pub src_embed: ParamId,
    pub encoder: GruParams,
    /// `W^` of the separate path that seeds the character decoder.
    pub separate: ParamId,
    pub tgt_embed: ParamId,
    pub decoder: GruParams,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NestedParams {
    pub decoder: GruParams,
    pub attention: AttentionParams,
    /// `W_c` in `ReLU(W_c [c^c; d^c])`.
    pub combine: ParamId,
}

/// Every parameter of one model, with typed handles into the set.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub dims: ModelDims,
    pub set: ParamSet,
    pub word: WordParams,
    pub chars: Option<CharParams>,
    pub nested: Option<NestedParams>,
    biases: BTreeSet<ParamId>,
}

impl ModelParams {
    /// Registers the full layout with zero values.
    pub fn new(variant: Variant, dims: ModelDims) -> Self {
        let d = dims;
        let mut ps = ParamSet::new();
        let mut biases = BTreeSet::new();
        let mut gru = |ps: &mut ParamSet, name: &str, input: usize, hidden: usize| {
            let p = GruParams::register(ps, name, input, hidden);
            biases.extend(p.biases());
            p
        };

        let src_embed = ps.register("word.src_embed", &[d.src_vocab, d.embed]);
        let tgt_embed = ps.register("word.tgt_embed", &[d.tgt_vocab, d.embed]);
        let enc_fwd = gru(&mut ps, "word.enc_fwd", d.embed, d.hidden);
        let enc_bwd = gru(&mut ps, "word.enc_bwd", d.embed, d.hidden);
        let dec = gru(&mut ps, "word.dec", d.embed, d.hidden);
        let dec_init = ps.register("word.dec_init", &[d.hidden]);
        let attention = AttentionParams::register(&mut ps, "word.att", d.hidden, 2 * d.hidden, d.attention);
        let combine = ps.register("word.combine", &[d.hidden, 3 * d.hidden]);
        let out_w = ps.register("word.out_w", &[d.tgt_vocab, d.hidden]);
        let out_b = ps.register("word.out_b", &[d.tgt_vocab]);
        let word = WordParams {
            src_embed,
            tgt_embed,
            enc_fwd,
            enc_bwd,
            dec,
            dec_init,
            attention,
            combine,
            out_w,
            out_b,
        };
        let mut att_biases = vec![attention.query_b, attention.key_b, out_b];

        let chars = variant.has_chars().then(|| {
            let src_embed = ps.register("char.src_embed", &[d.char_vocab, d.char_embed]);
            let encoder = gru(&mut ps, "char.enc", d.char_embed, d.embed);
            let separate = ps.register("char.separate", &[d.hidden, 3 * d.hidden]);
            let tgt_embed = ps.register("char.tgt_embed", &[d.char_vocab, d.char_embed]);
            let decoder = gru(&mut ps, "char.dec", d.char_embed, d.hidden);
            let out_w = ps.register("char.out_w", &[d.char_vocab, d.hidden]);
            let out_b = ps.register("char.out_b", &[d.char_vocab]);
            att_biases.push(out_b);
            CharParams {
                src_embed,
                encoder,
                separate,
                tgt_embed,
                decoder,
                out_w,
                out_b,
            }
        });

        let nested = variant.is_nested().then(|| {
            let decoder = gru(&mut ps, "nested.dec", d.char_embed, d.hidden);
            let attention = AttentionParams::register(&mut ps, "nested.att", d.hidden, d.embed, d.attention);
            let combine = ps.register("nested.combine", &[d.hidden, d.embed + d.hidden]);
            att_biases.extend([attention.query_b, attention.key_b]);
            NestedParams {
                decoder,
                attention,
                combine,
            }
        });

        biases.extend(att_biases);
        ModelParams {
            variant,
            dims,
            set: ps,
            word,
            chars,
            nested,
            biases,
        }
    }

    /// Rebuilds a model from named tensors, which must cover the layout of
    /// `variant` exactly.
    pub fn from_tensors<'a, I>(variant: Variant, dims: ModelDims, tensors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a Tensor)>,
    {
        let mut model = ModelParams::new(variant, dims);
        let mut seen = BTreeSet::new();
        for (name, t) in tensors {
            model.set.set(name, t.clone())?;
            seen.insert(name.to_string());
        }
        if let Some((missing, _)) = model.set.iter().find(|(n, _)| !seen.contains(*n)) {
            return Err(Error::Format(format!("missing parameter {missing}")));
        }
        Ok(model)
    }

    pub fn is_bias(&self, id: ParamId) -> bool {
        self.biases.contains(&id)
    }

    pub fn chars(&self) -> Result<&CharParams> {
        self.chars
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} model has no character components", self.variant)))
    }

    pub fn nested(&self) -> Result<&NestedParams> {
        self.nested
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} model has no nested attention", self.variant)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_nest() {
        let dims = ModelDims::uniform(10, 11, 7, 4);
        let base = ModelParams::new(Variant::Baseline, dims);
        let hyb = ModelParams::new(Variant::Hybrid, dims);
        let nest = ModelParams::new(Variant::Nested, dims);
        assert!(base.set.len() < hyb.set.len() && hyb.set.len() < nest.set.len());
        for (name, t) in base.set.iter() {
            assert_eq!(hyb.set.get(hyb.set.id(name).unwrap()).shape(), t.shape());
        }
        for (name, _) in hyb.set.iter() {
            assert!(nest.set.id(name).is_some(), "{name}");
        }
        assert!(base.chars().is_err());
        assert!(hyb.nested().is_err());
    }

    #[test]
    fn char_encoder_outputs_word_embedding_size() {
        let mut dims = ModelDims::uniform(10, 11, 7, 4);
        dims.embed = 6;
        dims.char_embed = 3;
        let m = ModelParams::new(Variant::Nested, dims);
        let enc = m.chars().unwrap().encoder;
        assert_eq!((enc.input, enc.hidden), (3, 6));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Baseline, Variant::Hybrid, Variant::Nested] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn from_tensors_requires_full_layout() {
        let dims = ModelDims::uniform(6, 6, 5, 2);
        let m = ModelParams::new(Variant::Hybrid, dims);
        let again = ModelParams::from_tensors(Variant::Hybrid, dims, m.set.iter()).unwrap();
        assert_eq!(again, m);
        let partial: Vec<(&str, &Tensor)> = m.set.iter().skip(1).collect();
        assert!(ModelParams::from_tensors(Variant::Hybrid, dims, partial).is_err());
        assert!(ModelParams::from_tensors(Variant::Baseline, dims, m.set.iter()).is_err());
    }
}
