//! Mini-batch training: initialization, optimizer updates with clipping,
//! validation-driven learning-rate decay, checkpoints and model selection.

mod checkpoint;
mod config;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Progress, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{OptimizerKind, TrainConfig};
pub use optim::Optimizer;

use crate::corpus::{make_batches, Example};
use crate::error::{Error, Result};
use crate::model::{total_loss, LossBreakdown, ModelDims, ModelParams};
use crate::numcore::{clip_gradients, Graph, Rng};

const EPOCH_STREAM: u64 = 1 << 62;
const INIT_STREAM: u64 = 1 << 63;

/// Fresh parameters: weights uniform in `+-sqrt(3)/sqrt(hidden)`, biases
/// zero. Deterministic in `config.seed`.
pub fn init_params(config: &TrainConfig, dims: ModelDims) -> ModelParams {
    let mut m = ModelParams::new(config.variant, dims);
    let bound = init_bound(dims.hidden);
    let mut rng = Rng::stream(config.seed, INIT_STREAM);
    let ids: Vec<_> = m.set.ids().collect();
    for id in ids {
        if m.is_bias(id) {
            continue;
        }
        for x in m.set.get_mut(id).data_mut() {
            *x = rng.uniform(-bound, bound);
        }
    }
    m
}

pub fn init_bound(hidden: usize) -> f32 {
    (3.0f64.sqrt() / (hidden as f64).sqrt()) as f32
}

/// Outcome of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub loss: LossBreakdown,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Forward, backward, clip and update on one batch. `rng` drives dropout.
pub fn train_step(
    params: &mut ModelParams,
    optimizer: &mut Optimizer,
    batch: &[Example],
    config: &TrainConfig,
    rng: Rng,
) -> Result<StepReport> {
    let (loss, mut grads) = {
        let mut g = Graph::with_dropout(&params.set, config.dropout as f32, rng);
        let (total, breakdown) = total_loss(&mut g, params, batch, config.alpha, config.beta)?;
        (breakdown, g.backward(total)?)
    };
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let grad_norm = clip_gradients(&mut grads, config.clip as f32);
    optimizer.update(&mut params.set, &grads);
    if !params.set.all_finite() {
        return Err(Error::Numeric("non-finite parameter after update".into()));
    }
    Ok(StepReport { loss, grad_norm })
}

/// Decays `lr` when each of the two latest cost samples rose over its
/// predecessor.
pub fn lr_schedule_update(history: &[f64], lr: f64, decay: f64) -> f64 {
    match history {
        [.., a, b, c] if b > a && c > b => lr * decay,
        _ => lr,
    }
}

/// Dropout-free loss over `examples`, averaged per sentence.
pub fn validation_loss(params: &ModelParams, examples: &[Example], config: &TrainConfig) -> Result<LossBreakdown> {
    if examples.is_empty() {
        return Err(Error::Invalid("validation loss of an empty set".into()));
    }
    let mut sum = LossBreakdown {
        word: 0.0,
        char_basic: 0.0,
        char_nested: 0.0,
        alpha: config.alpha,
        beta: config.beta,
        total: 0.0,
        sentences: 0,
        target_tokens: 0,
        target_chars: 0,
    };
    for chunk in examples.chunks(config.batch_size) {
        let mut g = Graph::new(&params.set);
        let (_, b) = total_loss(&mut g, params, chunk, config.alpha, config.beta)?;
        let n = b.sentences as f64;
        sum.word += b.word * n;
        sum.char_basic += b.char_basic * n;
        sum.char_nested += b.char_nested * n;
        sum.total += b.total * n;
        sum.sentences += b.sentences;
        sum.target_tokens += b.target_tokens;
        sum.target_chars += b.target_chars;
    }
    let n = sum.sentences as f64;
    sum.word /= n;
    sum.char_basic /= n;
    sum.char_nested /= n;
    sum.total /= n;
    Ok(sum)
}

/// Progress notifications from [`Trainer::run`].
#[derive(Debug)]
pub enum Event<'a> {
    Step {
        iteration: u64,
        report: &'a StepReport,
        lr: f64,
    },
    /// A decay-schedule cost sample.
    Cost { iteration: u64, cost: f64, lr: f64 },
    Validation { iteration: u64, loss: &'a LossBreakdown },
    Checkpoint { checkpoint: &'a Checkpoint, epoch_end: bool },
}

/// A training run that can be checkpointed and resumed bit-exactly.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: Optimizer,
    pub progress: Progress,
    pub cost_history: Vec<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig, dims: ModelDims) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, dims);
        let optimizer = Optimizer::new(config.optimizer, config.lr, &params.set);
        Ok(Trainer {
            config,
            params,
            optimizer,
            progress: Progress::default(),
            cost_history: Vec::new(),
        })
    }

    pub fn resume(ck: Checkpoint) -> Self {
        Trainer {
            config: ck.config,
            params: ck.params,
            optimizer: ck.optimizer,
            progress: ck.progress,
            cost_history: ck.cost_history,
        }
    }

    pub fn checkpoint(&self, val_loss: Option<f64>) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            progress: self.progress,
            cost_history: self.cost_history.clone(),
            val_loss,
        }
    }

    /// Batches of `epoch`, identical on every call.
    pub fn epoch_batches(&self, train: &[Example], epoch: u64) -> Vec<Vec<Example>> {
        let mut rng = Rng::stream(self.config.seed, EPOCH_STREAM + epoch);
        make_batches(train, self.config.batch_size, &mut rng)
            .iter()
            .map(|b| b.examples())
            .collect()
    }

    /// One update on `batch`, with dropout drawn from the stream of the
    /// current iteration.
    pub fn step(&mut self, batch: &[Example]) -> Result<StepReport> {
        let it = self.progress.iteration;
        let rng = Rng::stream(self.config.seed, it);
        let report = train_step(&mut self.params, &mut self.optimizer, batch, &self.config, rng)
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("iteration {}: {msg}", it + 1)),
                other => other,
            })?;
        self.progress.iteration += 1;
        Ok(report)
    }

    fn done(&self) -> bool {
        let c = &self.config;
        self.progress.epoch >= c.epochs || (c.max_iters > 0 && self.progress.iteration >= c.max_iters)
    }

    /// Trains until `epochs` or `max_iters`, resuming from the current
    /// progress. `valid` may be empty, which disables decay and validation.
    pub fn run(
        &mut self,
        train: &[Example],
        valid: &[Example],
        on_event: &mut dyn FnMut(Event<'_>) -> Result<()>,
    ) -> Result<()> {
        if train.is_empty() {
            return Err(Error::Invalid("empty training set".into()));
        }
        let sample = &valid[..valid.len().min(self.config.decay_sample)];
        while !self.done() {
            let batches = self.epoch_batches(train, self.progress.epoch);
            let mut saved_at = None;
            while (self.progress.batch as usize) < batches.len() {
                if self.done() {
                    return Ok(());
                }
                let report = self.step(&batches[self.progress.batch as usize])?;
                self.progress.batch += 1;
                let it = self.progress.iteration;
                on_event(Event::Step {
                    iteration: it,
                    report: &report,
                    lr: self.optimizer.lr,
                })?;
                if !sample.is_empty() && it % self.config.decay_interval == 0 {
                    let cost = validation_loss(&self.params, sample, &self.config)?.total;
                    self.cost_history.push(cost);
                    self.optimizer.lr = lr_schedule_update(&self.cost_history, self.optimizer.lr, self.config.decay);
                    on_event(Event::Cost {
                        iteration: it,
                        cost,
                        lr: self.optimizer.lr,
                    })?;
                }
                if !valid.is_empty() && it % self.config.val_interval == 0 {
                    let loss = validation_loss(&self.params, valid, &self.config)?;
                    on_event(Event::Validation { iteration: it, loss: &loss })?;
                }
                if it % self.config.ckpt_interval == 0 {
                    let ck = self.checkpoint_with_validation(valid)?;
                    on_event(Event::Checkpoint {
                        checkpoint: &ck,
                        epoch_end: false,
                    })?;
                    saved_at = Some(it);
                }
            }
            self.progress.epoch += 1;
            self.progress.batch = 0;
            if saved_at != Some(self.progress.iteration) {
                let ck = self.checkpoint_with_validation(valid)?;
                on_event(Event::Checkpoint {
                    checkpoint: &ck,
                    epoch_end: true,
                })?;
            }
        }
        Ok(())
    }

    fn checkpoint_with_validation(&self, valid: &[Example]) -> Result<Checkpoint> {
        let val = if valid.is_empty() {
            None
        } else {
            Some(validation_loss(&self.params, valid, &self.config)?.total)
        };
        Ok(self.checkpoint(val))
    }
}

/// A saved parameter set eligible for selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub iteration: u64,
    pub val_loss: f64,
}

/// Restricts to the `pool` candidates with the lowest validation loss, then
/// returns the one with the highest `dev_score`; ties go to the earliest
/// iteration. `dev_score` is only called for pool members.
pub fn select_model(
    candidates: &[Candidate],
    pool: usize,
    mut dev_score: impl FnMut(&Candidate) -> Result<f64>,
) -> Result<Candidate> {
    if candidates.is_empty() {
        return Err(Error::Invalid("no checkpoints to select from".into()));
    }
    if let Some(c) = candidates.iter().find(|c| c.val_loss.is_nan()) {
        return Err(Error::Numeric(format!("checkpoint {} has a NaN validation loss", c.iteration)));
    }
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.iteration.cmp(&b.iteration)));
    ranked.truncate(pool.max(1));
    let mut best: Option<(Candidate, f64)> = None;
    for c in ranked {
        let f = dev_score(&c)?;
        best = match best {
            Some((b, bf)) if bf > f || (bf == f && b.iteration < c.iteration) => Some((b, bf)),
            _ => Some((c, f)),
        };
    }
    Ok(best.expect("pool is nonempty").0)
}
