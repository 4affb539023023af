use crate::error::{Error, Result};
use crate::numcore::{Gradients, ParamSet};
use crate::records::Record;
use crate::trainer::config::OptimizerKind;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam or plain SGD with the current learning rate and moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Updates applied so far.
    pub steps: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamSet) -> Self {
        let zeros = || -> Vec<Vec<f32>> { params.ids().map(|id| vec![0.0; params.get(id).len()]).collect() };
        let (first, second) = match kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Optimizer {
            kind,
            lr,
            steps: 0,
            first,
            second,
        }
    }

    /// One update of every parameter from `grads`.
    pub fn update(&mut self, params: &mut ParamSet, grads: &Gradients) {
        self.steps += 1;
        let ids: Vec<_> = params.ids().collect();
        match self.kind {
            OptimizerKind::Sgd => {
                for id in ids {
                    let g = grads.get(id);
                    for (p, &gi) in params.get_mut(id).data_mut().iter_mut().zip(g) {
                        *p = (*p as f64 - self.lr * gi as f64) as f32;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for id in ids {
                    let i = id.index();
                    let g = grads.get(id);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (k, p) in params.get_mut(id).data_mut().iter_mut().enumerate() {
                        let gk = g[k] as f64;
                        let mk = BETA1 * m[k] as f64 + (1.0 - BETA1) * gk;
                        let vk = BETA2 * v[k] as f64 + (1.0 - BETA2) * gk * gk;
                        m[k] = mk as f32;
                        v[k] = vk as f32;
                        let step = self.lr * (mk / c1) / ((vk / c2).sqrt() + EPS);
                        *p = (*p as f64 - step) as f32;
                    }
                }
            }
        }
    }

    /// Serialized state under `opt/`.
    pub fn to_records(&self, params: &ParamSet) -> Vec<Record> {
        let kind = match self.kind {
            OptimizerKind::Adam => 0,
            OptimizerKind::Sgd => 1,
        };
        let mut out = vec![Record::u64s("opt/state", &[kind, self.steps, self.lr.to_bits()])];
        for (i, id) in params.ids().enumerate() {
            if self.kind == OptimizerKind::Adam {
                let shape = params.get(id).shape().to_vec();
                let name = params.name(id);
                out.push(Record::new(format!("opt/m/{name}"), shape.clone(), self.first[i].clone()));
                out.push(Record::new(format!("opt/v/{name}"), shape, self.second[i].clone()));
            }
        }
        out
    }

    pub fn from_records(records: &[Record], params: &ParamSet) -> Result<Self> {
        let find = |name: &str| {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))
        };
        let state = find("opt/state")?.as_u64s()?;
        let [kind, steps, lr] = state[..] else {
            return Err(Error::Format("malformed optimizer state".into()));
        };
        let kind = match kind {
            0 => OptimizerKind::Adam,
            1 => OptimizerKind::Sgd,
            k => return Err(Error::Format(format!("unknown optimizer kind {k}"))),
        };
        let mut opt = Optimizer::new(kind, f64::from_bits(lr), params);
        opt.steps = steps;
        if kind == OptimizerKind::Adam {
            for (i, id) in params.ids().enumerate() {
                let name = params.name(id);
                for (buf, prefix) in [(&mut opt.first[i], "opt/m/"), (&mut opt.second[i], "opt/v/")] {
                    let r = find(&format!("{prefix}{name}"))?;
                    if r.values.len() != buf.len() {
                        return Err(Error::Format(format!("{prefix}{name} has the wrong size")));
                    }
                    buf.copy_from_slice(&r.values);
                }
            }
        }
        Ok(opt)
    }
}
