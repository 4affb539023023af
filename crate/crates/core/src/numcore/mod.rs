//! Dense tensors, a reverse-mode tape and the few primitives the models
//! are built from.

pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod rng;
pub mod tensor;

pub use gradcheck::check_gradients;
pub use graph::{log_softmax, softmax, Graph, Var};
pub use gru::{gru_cell, GruParams};
pub use rng::Rng;
pub use tensor::{Gradients, ParamId, ParamSet, Tensor};

/// Rescales all gradients by `threshold / norm` when their global L2 norm
/// exceeds `threshold`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, threshold: f32) -> f64 {
    let norm = grads.global_norm();
    if norm > threshold as f64 {
        let scale = (threshold as f64 / norm) as f32;
        for buf in grads.buffers_mut() {
            buf.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}
