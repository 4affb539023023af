use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::records::{self, Record};

pub const LM_MAGIC: &[u8; 4] = b"NKLM";
pub const LM_VERSION: u32 = 1;

const BOS: u32 = 0;
const EOS: u32 = 1;
const UNK: u32 = 2;
const RESERVED: [&str; 3] = ["<s>", "</s>", "<unk>"];

/// Fallback discounts for orders whose count-of-counts leave the closed
/// form undefined or out of range.
const FALLBACK_DISCOUNTS: [f64; 3] = [0.5, 1.0, 1.5];

#[derive(Clone, Debug, Default, PartialEq)]
struct Context {
    /// Sum of adjusted counts of words seen after this context.
    total: f64,
    /// Discount mass released to the lower order.
    backoff: f64,
    counts: HashMap<u32, u64>,
}

/// Interpolated modified Kneser-Ney n-gram model over a closed vocabulary
/// with an unknown-word symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    order: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
    /// `discounts[k-1]` holds (D1, D2, D3+) of order k.
    discounts: Vec<[f64; 3]>,
    /// `contexts[k-1]` maps a (k-1)-token context to its statistics.
    contexts: Vec<HashMap<Vec<u32>, Context>>,
}

fn estimate_discounts(count_of_counts: [u64; 4]) -> [f64; 3] {
    let [n1, n2, n3, n4] = count_of_counts.map(|n| n as f64);
    let y = n1 / (n1 + 2.0 * n2);
    let raw = [1.0 - 2.0 * y * n2 / n1, 2.0 - 3.0 * y * n3 / n2, 3.0 - 4.0 * y * n4 / n3];
    let mut d = [0.0; 3];
    for j in 0..3 {
        let ok = raw[j].is_finite() && raw[j] > 0.0 && raw[j] <= (j + 1) as f64;
        d[j] = if ok { raw[j] } else { FALLBACK_DISCOUNTS[j] };
    }
    d
}

fn discount(d: &[f64; 3], count: u64) -> f64 {
    match count {
        0 => 0.0,
        1 => d[0],
        2 => d[1],
        _ => d[2],
    }
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of predictable symbols: the words, end of sentence and the
    /// unknown word.
    pub fn vocab_size(&self) -> usize {
        self.words.len() - 1
    }

    pub fn discounts(&self, order: usize) -> [f64; 3] {
        self.discounts[order - 1]
    }

    fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    fn from_adjusted(order: usize, words: Vec<String>, adjusted: Vec<BTreeMap<Vec<u32>, u64>>) -> Result<Self> {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut discounts = Vec::with_capacity(order);
        let mut contexts = Vec::with_capacity(order);
        for grams in &adjusted {
            let mut coc = [0u64; 4];
            for &c in grams.values() {
                if (1..=4).contains(&c) {
                    coc[c as usize - 1] += 1;
                }
            }
            let d = estimate_discounts(coc);
            let mut ctx: HashMap<Vec<u32>, Context> = HashMap::new();
            for (g, &c) in grams {
                if c == 0 {
                    continue;
                }
                let (w, h) = g.split_last().ok_or_else(|| Error::Format("empty n-gram".into()))?;
                let e = ctx.entry(h.to_vec()).or_default();
                e.total += c as f64;
                e.backoff += discount(&d, c);
                e.counts.insert(*w, c);
            }
            discounts.push(d);
            contexts.push(ctx);
        }
        Ok(NgramModel {
            order,
            words,
            index,
            discounts,
            contexts,
        })
    }

    /// `p(word | history)`, using at most the last `order - 1` history ids.
    fn prob_ids(&self, history: &[u32], word: u32) -> f64 {
        let mut p = 1.0 / self.vocab_size() as f64;
        let max_k = self.order.min(history.len() + 1);
        for k in 1..=max_k {
            let h = &history[history.len() - (k - 1)..];
            if let Some(c) = self.contexts[k - 1].get(h) {
                let a = c.counts.get(&word).copied().unwrap_or(0);
                let d = discount(&self.discounts[k - 1], a);
                p = ((a as f64 - d).max(0.0) + c.backoff * p) / c.total;
            }
        }
        p
    }

    /// Conditional probability of `word` (`</s>` for the end) after the
    /// sentence prefix `history`.
    pub fn prob(&self, history: &[&str], word: &str) -> f64 {
        let mut h = vec![BOS];
        h.extend(history.iter().map(|w| self.id(w)));
        self.prob_ids(&h, self.id(word))
    }

    /// Natural-log probability of a sentence, start-padded and
    /// end-terminated. Unknown words score as the unknown symbol.
    pub fn log_prob(&self, tokens: &[String]) -> f64 {
        let mut hist = Vec::with_capacity(tokens.len() + 1);
        hist.push(BOS);
        let mut total = 0.0;
        for t in tokens {
            let w = self.id(t);
            total += self.prob_ids(&hist, w).ln();
            hist.push(w);
        }
        total + self.prob_ids(&hist, EOS).ln()
    }

    /// Every context stored at any order, as ids.
    pub fn context_ids(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = self.contexts.iter().flat_map(|m| m.keys().cloned()).collect();
        out.sort();
        out
    }

    /// Sum of `p(w | context)` over every predictable symbol.
    pub fn mass(&self, context: &[u32]) -> f64 {
        (1..self.words.len() as u32).map(|w| self.prob_ids(context, w)).sum()
    }

    pub fn word_of(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn num_symbols(&self) -> usize {
        self.words.len()
    }

    fn adjusted_grams(&self) -> Vec<Vec<(Vec<u32>, u64)>> {
        self.contexts
            .iter()
            .map(|m| {
                let mut v: Vec<(Vec<u32>, u64)> = m
                    .iter()
                    .flat_map(|(h, c)| {
                        c.counts.iter().map(move |(&w, &n)| {
                            let mut g = h.clone();
                            g.push(w);
                            (g, n)
                        })
                    })
                    .collect();
                v.sort();
                v
            })
            .collect()
    }

    pub fn to_records(&self) -> Vec<Record> {
        let vocab = self.words[RESERVED.len()..].join("\n");
        let mut out = vec![
            Record::u64s("meta/order", &[self.order as u64]),
            Record::bytes("meta/vocab", vocab.as_bytes()),
            Record::f64s("meta/discounts", &self.discounts.concat()),
        ];
        for (k, grams) in self.adjusted_grams().into_iter().enumerate() {
            let flat: Vec<u64> = grams
                .into_iter()
                .flat_map(|(g, n)| g.into_iter().map(u64::from).chain([n]))
                .collect();
            out.push(Record::u64s(format!("ngrams/{}", k + 1), &flat));
        }
        out
    }

    pub fn from_records(records: &[Record]) -> Result<Self> {
        let find = |name: &str| {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::Format(format!("language model file lacks {name}")))
        };
        let order = find("meta/order")?.as_u64s()?;
        let order = match order.as_slice() {
            [o] if *o >= 1 => *o as usize,
            _ => return Err(Error::Format("bad language model order".into())),
        };
        let vocab = String::from_utf8(find("meta/vocab")?.as_bytes()?)
            .map_err(|_| Error::Format("language model vocabulary is not UTF-8".into()))?;
        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        words.extend(vocab.split('\n').filter(|w| !w.is_empty()).map(str::to_string));
        let mut adjusted = Vec::with_capacity(order);
        for k in 1..=order {
            let flat = find(&format!("ngrams/{k}"))?.as_u64s()?;
            if flat.len() % (k + 1) != 0 {
                return Err(Error::Format(format!("ragged {k}-gram table")));
            }
            let mut grams = BTreeMap::new();
            for chunk in flat.chunks(k + 1) {
                let ids: Vec<u32> = chunk[..k]
                    .iter()
                    .map(|&i| u32::try_from(i).ok().filter(|&i| (i as usize) < words.len()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::Format(format!("{k}-gram id out of range")))?;
                grams.insert(ids, chunk[k]);
            }
            adjusted.push(grams);
        }
        let mut m = NgramModel::from_adjusted(order, words, adjusted)?;
        let stored = find("meta/discounts")?.as_f64s()?;
        if stored.len() != 3 * order {
            return Err(Error::Format("discount table has the wrong size".into()));
        }
        if stored != m.discounts.concat() {
            return Err(Error::Format("stored discounts disagree with the counts".into()));
        }
        m.discounts = stored.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        records::write_file(path, LM_MAGIC, LM_VERSION, &self.to_records())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, recs) = records::read_file(path, LM_MAGIC, &[LM_VERSION])?;
        NgramModel::from_records(&recs)
    }

    /// ARPA back-off text: log10 probabilities of stored n-grams and log10
    /// back-off weights of contexts that extend to a higher order.
    pub fn to_arpa(&self) -> String {
        let grams = self.adjusted_grams();
        let mut listed: Vec<Vec<Vec<u32>>> = grams.iter().map(|g| g.iter().map(|(g, _)| g.clone()).collect()).collect();
        // every symbol appears as a unigram, the start marker included
        listed[0] = (0..self.words.len() as u32).map(|w| vec![w]).collect();
        let mut out = String::from("\n\\data\\\n");
        for (k, l) in listed.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", k + 1, l.len());
        }
        for (k, l) in listed.iter().enumerate() {
            let _ = write!(out, "\n\\{}-grams:\n", k + 1);
            for g in l {
                let (w, h) = g.split_last().expect("nonempty n-gram");
                let lp = if *w == BOS { -99.0 } else { self.prob_ids(h, *w).log10() };
                let text: Vec<&str> = g.iter().map(|&i| self.words[i as usize].as_str()).collect();
                let _ = write!(out, "{lp:.7}\t{}", text.join(" "));
                if let Some(c) = self.contexts.get(k + 1).and_then(|m| m.get(g)) {
                    let _ = write!(out, "\t{:.7}", (c.backoff / c.total).log10());
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }
}

/// Trains an `order`-gram model. Sentences are padded with one start
/// marker and closed with an end marker. The highest order keeps raw
/// counts; lower orders use continuation counts except for n-grams that
/// begin at the sentence start.
pub fn train_kn_lm(corpus: &[Vec<String>], order: usize) -> Result<NgramModel> {
    if order == 0 {
        return Err(Error::Invalid("language model order must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot train a language model on an empty corpus".into()));
    }
    let mut vocab: Vec<&String> = corpus.iter().flatten().collect();
    vocab.sort();
    vocab.dedup();
    let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    words.extend(vocab.into_iter().filter(|w| !RESERVED.contains(&w.as_str())).cloned());
    let index: HashMap<&str, u32> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();

    let mut raw: Vec<BTreeMap<Vec<u32>, u64>> = vec![BTreeMap::new(); order];
    for sent in corpus {
        let mut seq = vec![BOS];
        seq.extend(sent.iter().map(|w| index.get(w.as_str()).copied().unwrap_or(UNK)));
        seq.push(EOS);
        for i in 1..seq.len() {
            for k in 1..=order.min(i + 1) {
                *raw[k - 1].entry(seq[i + 1 - k..=i].to_vec()).or_default() += 1;
            }
        }
    }

    let mut adjusted = raw.clone();
    for k in 1..order {
        let mut left: BTreeMap<&[u32], u64> = BTreeMap::new();
        for g in raw[k].keys() {
            *left.entry(&g[1..]).or_default() += 1;
        }
        for (g, c) in adjusted[k - 1].iter_mut() {
            if g[0] != BOS {
                *c = left.get(g.as_slice()).copied().unwrap_or(0);
            }
        }
    }
    NgramModel::from_adjusted(order, words, adjusted)
}
