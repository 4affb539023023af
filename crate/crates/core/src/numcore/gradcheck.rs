use crate::error::{Error, Result};
use crate::numcore::graph::{Graph, Var};
use crate::numcore::rng::Rng;
use crate::numcore::tensor::{ParamId, ParamSet};

/// Compares tape gradients against central differences.
///
/// `f` builds a scalar loss on a fresh inference-mode graph. Every
/// coordinate is checked unless `sample` is `Some(n)`, in which case `n`
/// coordinates are drawn (seeded) from all parameters. Returns the largest
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn check_gradients<F>(params: &ParamSet, f: F, eps: f32, sample: Option<usize>) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut g = Graph::new(ps);
        let l = f(&mut g)?;
        let v = g.scalar(l);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {v}")));
        }
        Ok(v as f64)
    };

    let analytic = {
        let mut g = Graph::new(params);
        let l = f(&mut g)?;
        g.backward(l)?
    };

    let mut coords: Vec<(ParamId, usize)> = params
        .ids()
        .flat_map(|id| (0..params.get(id).len()).map(move |i| (id, i)))
        .collect();
    if let Some(n) = sample {
        if n < coords.len() {
            let mut rng = Rng::new(0x6772_6164);
            rng.shuffle(&mut coords);
            coords.truncate(n);
        }
    }

    let mut work = params.clone();
    let mut worst = 0.0f64;
    for (id, i) in coords {
        let orig = work.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + eps;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig - eps;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        // the perturbed values are what the loss actually saw
        let step = ((orig + eps) as f64) - ((orig - eps) as f64);
        let numeric = (up - down) / step;
        let a = analytic.get(id)[i] as f64;
        let err = (a - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
