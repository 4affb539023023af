use crate::error::{Error, Result};
use crate::numcore::graph::{Graph, Var};
use crate::numcore::tensor::{ParamId, ParamSet};

/// Parameter handles of one gated recurrent unit.
///
/// Update gate `z`, reset gate `r` and candidate `h~` each get an input
/// matrix, a recurrent matrix and one bias:
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r * h) + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub input: usize,
    pub hidden: usize,
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl GruParams {
    /// Registers the nine tensors under `prefix.*`.
    pub fn register(ps: &mut ParamSet, prefix: &str, input: usize, hidden: usize) -> Self {
        let mut m = |n: &str, shape: &[usize]| ps.register(&format!("{prefix}.{n}"), shape);
        GruParams {
            input,
            hidden,
            wz: m("wz", &[hidden, input]),
            uz: m("uz", &[hidden, hidden]),
            bz: m("bz", &[hidden]),
            wr: m("wr", &[hidden, input]),
            ur: m("ur", &[hidden, hidden]),
            br: m("br", &[hidden]),
            wh: m("wh", &[hidden, input]),
            uh: m("uh", &[hidden, hidden]),
            bh: m("bh", &[hidden]),
        }
    }

    pub fn biases(&self) -> [ParamId; 3] {
        [self.bz, self.br, self.bh]
    }
}

/// One GRU step on the tape.
pub fn gru_cell(g: &mut Graph<'_>, p: &GruParams, h_prev: Var, x: Var) -> Result<Var> {
    if g.len_of(h_prev) != p.hidden || g.len_of(x) != p.input {
        return Err(Error::Shape(format!(
            "gru cell expects h[{}] x[{}], got h[{}] x[{}]",
            p.hidden,
            p.input,
            g.len_of(h_prev),
            g.len_of(x)
        )));
    }
    let [wz, uz, bz, wr, ur, br, wh, uh, bh] =
        [p.wz, p.uz, p.bz, p.wr, p.ur, p.br, p.wh, p.uh, p.bh].map(|id| g.param(id));
    let za = g.linear(&[(wz, x), (uz, h_prev)], Some(bz))?;
    let z = g.sigmoid(za);
    let ra = g.linear(&[(wr, x), (ur, h_prev)], Some(br))?;
    let r = g.sigmoid(ra);
    let rh = g.mul(r, h_prev)?;
    let ca = g.linear(&[(wh, x), (uh, rh)], Some(bh))?;
    let cand = g.tanh(ca);
    let keep = g.one_minus(z);
    let old = g.mul(keep, h_prev)?;
    let new = g.mul(z, cand)?;
    g.add(old, new)
}
