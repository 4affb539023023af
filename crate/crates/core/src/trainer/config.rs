use std::fmt::Write as _;
use std::str::FromStr;

use crate::corpus::VocabMode;
use crate::error::{Error, Result};
use crate::model::{ModelDims, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer {s:?} (expected adam or sgd)"))),
        }
    }
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

/// Every tunable of a run. Read from `key=value` text; see [`TrainConfig::KEYS`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub seed: u64,
    pub vocab_size: usize,
    pub vocab_mode: VocabMode,
    pub embed: usize,
    pub hidden: usize,
    /// Zero means "same as `embed`".
    pub char_embed: usize,
    /// Zero means "same as `hidden`".
    pub attention: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub decay: f64,
    /// Iterations between the validation-cost samples that drive decay.
    pub decay_interval: u64,
    /// Validation sentences in the fixed sample used for those costs.
    pub decay_sample: usize,
    pub clip: f64,
    pub dropout: f64,
    pub alpha: f64,
    pub beta: f64,
    pub val_interval: u64,
    pub ckpt_interval: u64,
    pub epochs: u64,
    /// Stop after this many updates; zero for no limit.
    pub max_iters: u64,
    pub max_tokens: usize,
    pub min_ratio: f64,
    pub beam: usize,
    pub char_beam: usize,
    pub max_chars: usize,
    pub length_norm: bool,
    pub select_pool: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Nested,
            seed: 1,
            vocab_size: 30000,
            vocab_mode: VocabMode::Combined,
            embed: 64,
            hidden: 64,
            char_embed: 0,
            attention: 0,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            lr: 0.0003,
            decay: 0.95,
            decay_interval: 100,
            decay_sample: 128,
            clip: 10.0,
            dropout: 0.15,
            alpha: 0.5,
            beta: 0.5,
            val_interval: 5000,
            ckpt_interval: 10000,
            epochs: 10,
            max_iters: 0,
            max_tokens: 100,
            min_ratio: 0.5,
            beam: 12,
            char_beam: 10,
            max_chars: 30,
            length_norm: false,
            select_pool: 20,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 29] = [
        "variant",
        "seed",
        "vocab_size",
        "vocab_mode",
        "embed",
        "hidden",
        "char_embed",
        "attention",
        "batch_size",
        "optimizer",
        "lr",
        "decay",
        "decay_interval",
        "decay_sample",
        "clip",
        "dropout",
        "alpha",
        "beta",
        "val_interval",
        "ckpt_interval",
        "epochs",
        "max_iters",
        "max_tokens",
        "min_ratio",
        "beam",
        "char_beam",
        "max_chars",
        "length_norm",
        "select_pool",
    ];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "variant" => self.variant = v.parse()?,
            "seed" => self.seed = parse_value(key, v)?,
            "vocab_size" => self.vocab_size = parse_value(key, v)?,
            "vocab_mode" => {
                self.vocab_mode = match v {
                    "combined" => VocabMode::Combined,
                    "separate" => VocabMode::Separate,
                    _ => return Err(Error::Config(format!("vocab_mode: expected combined or separate, got {v:?}"))),
                }
            }
            "embed" => self.embed = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "char_embed" => self.char_embed = parse_value(key, v)?,
            "attention" => self.attention = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "optimizer" => self.optimizer = v.parse()?,
            "lr" => self.lr = parse_value(key, v)?,
            "decay" => self.decay = parse_value(key, v)?,
            "decay_interval" => self.decay_interval = parse_value(key, v)?,
            "decay_sample" => self.decay_sample = parse_value(key, v)?,
            "clip" => self.clip = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "val_interval" => self.val_interval = parse_value(key, v)?,
            "ckpt_interval" => self.ckpt_interval = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "max_iters" => self.max_iters = parse_value(key, v)?,
            "max_tokens" => self.max_tokens = parse_value(key, v)?,
            "min_ratio" => self.min_ratio = parse_value(key, v)?,
            "beam" => self.beam = parse_value(key, v)?,
            "char_beam" => self.char_beam = parse_value(key, v)?,
            "max_chars" => self.max_chars = parse_value(key, v)?,
            "length_norm" => self.length_norm = parse_value(key, v)?,
            "select_pool" => self.select_pool = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("configuration error: "))))?;
        }
        Ok(())
    }

    /// Defaults, then `file` text, then `overrides`, then validation.
    pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut c = TrainConfig::default();
        if let Some(text) = file {
            c.apply_text(text)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("decay_sample", self.decay_sample),
            ("max_tokens", self.max_tokens),
            ("beam", self.beam),
            ("char_beam", self.char_beam),
            ("max_chars", self.max_chars),
            ("select_pool", self.select_pool),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        for (k, v) in [
            ("decay_interval", self.decay_interval),
            ("val_interval", self.val_interval),
            ("ckpt_interval", self.ckpt_interval),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        let finite_pos = |k: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{k} must be positive, got {v}")))
            }
        };
        finite_pos("lr", self.lr)?;
        finite_pos("clip", self.clip)?;
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        for (k, v) in [("alpha", self.alpha), ("beta", self.beta), ("min_ratio", self.min_ratio)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{k} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Canonical `key=value` dump; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mode = match self.vocab_mode {
            VocabMode::Combined => "combined",
            VocabMode::Separate => "separate",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("variant", self.variant.to_string());
        kv("seed", self.seed.to_string());
        kv("vocab_size", self.vocab_size.to_string());
        kv("vocab_mode", mode.to_string());
        kv("embed", self.embed.to_string());
        kv("hidden", self.hidden.to_string());
        kv("char_embed", self.char_embed.to_string());
        kv("attention", self.attention.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("optimizer", self.optimizer.name().to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("decay", format!("{:?}", self.decay));
        kv("decay_interval", self.decay_interval.to_string());
        kv("decay_sample", self.decay_sample.to_string());
        kv("clip", format!("{:?}", self.clip));
        kv("dropout", format!("{:?}", self.dropout));
        kv("alpha", format!("{:?}", self.alpha));
        kv("beta", format!("{:?}", self.beta));
        kv("val_interval", self.val_interval.to_string());
        kv("ckpt_interval", self.ckpt_interval.to_string());
        kv("epochs", self.epochs.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("max_tokens", self.max_tokens.to_string());
        kv("min_ratio", format!("{:?}", self.min_ratio));
        kv("beam", self.beam.to_string());
        kv("char_beam", self.char_beam.to_string());
        kv("max_chars", self.max_chars.to_string());
        kv("length_norm", self.length_norm.to_string());
        kv("select_pool", self.select_pool.to_string());
        s
    }

    /// Layer sizes for the given vocabulary sizes.
    pub fn dims(&self, src_vocab: usize, tgt_vocab: usize, char_vocab: usize) -> ModelDims {
        ModelDims {
            src_vocab,
            tgt_vocab,
            char_vocab,
            embed: self.embed,
            hidden: self.hidden,
            char_embed: if self.char_embed == 0 { self.embed } else { self.char_embed },
            attention: if self.attention == 0 { self.hidden } else { self.attention },
        }
    }
}
