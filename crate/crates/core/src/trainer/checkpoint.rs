use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams};
use crate::numcore::Tensor;
use crate::records::{self, Record};
use crate::trainer::config::TrainConfig;
use crate::trainer::optim::Optimizer;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NAHM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a run stands: updates applied, current epoch, and batches of that
/// epoch already consumed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub iteration: u64,
    pub epoch: u64,
    pub batch: u64,
}

/// Everything needed to resume a run or decode with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: Optimizer,
    pub progress: Progress,
    /// Validation-cost samples driving learning-rate decay.
    pub cost_history: Vec<f64>,
    /// Validation loss at save time, when a validation set was given.
    pub val_loss: Option<f64>,
}

fn dims_to_u64s(d: &ModelDims) -> [u64; 7] {
    [d.src_vocab, d.tgt_vocab, d.char_vocab, d.embed, d.hidden, d.char_embed, d.attention].map(|x| x as u64)
}

impl Checkpoint {
    pub fn to_records(&self) -> Vec<Record> {
        let p = self.progress;
        let mut out = vec![
            Record::bytes("meta/config", self.config.to_text().as_bytes()),
            Record::u64s("meta/dims", &dims_to_u64s(&self.params.dims)),
            Record::u64s("meta/progress", &[p.iteration, p.epoch, p.batch]),
            Record::f64s("meta/cost_history", &self.cost_history),
            Record::f64s("meta/val_loss", self.val_loss.as_slice()),
        ];
        for (name, t) in self.params.set.iter() {
            out.push(Record::new(name, t.shape().to_vec(), t.data().to_vec()));
        }
        out.extend(self.optimizer.to_records(&self.params.set));
        out
    }

    pub fn from_records(records: &[Record]) -> Result<Self> {
        let find = |name: &str| {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))
        };
        let text = String::from_utf8(find("meta/config")?.as_bytes()?)
            .map_err(|_| Error::Format("config snapshot is not UTF-8".into()))?;
        let config = TrainConfig::resolve(Some(&text), &[])?;
        let d = find("meta/dims")?.as_u64s()?;
        let d: Vec<usize> = d.into_iter().map(|x| x as usize).collect();
        let [src_vocab, tgt_vocab, char_vocab, embed, hidden, char_embed, attention] = d[..] else {
            return Err(Error::Format("malformed dimension record".into()));
        };
        let dims = ModelDims {
            src_vocab,
            tgt_vocab,
            char_vocab,
            embed,
            hidden,
            char_embed,
            attention,
        };
        let progress = match find("meta/progress")?.as_u64s()?[..] {
            [iteration, epoch, batch] => Progress {
                iteration,
                epoch,
                batch,
            },
            _ => return Err(Error::Format("malformed progress record".into())),
        };
        let cost_history = find("meta/cost_history")?.as_f64s()?;
        let val_loss = find("meta/val_loss")?.as_f64s()?.first().copied();

        let tensors = records
            .iter()
            .filter(|r| !r.name.starts_with("meta/") && !r.name.starts_with("opt/"))
            .map(|r| Ok((r.name.as_str(), Tensor::new(r.shape.clone(), r.values.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_tensors(config.variant, dims, tensors.iter().map(|(n, t)| (*n, t)))?;
        let optimizer = Optimizer::from_records(records, &params.set)?;
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            progress,
            cost_history,
            val_loss,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        records::encode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &self.to_records())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, recs) = records::decode(bytes, CHECKPOINT_MAGIC, &[CHECKPOINT_VERSION])?;
        Checkpoint::from_records(&recs)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    records::write_file(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &ck.to_records())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
