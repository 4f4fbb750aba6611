//! Dense numerics: row-major matrices, ReLU MLPs with analytical gradients,
//! softmax and Adam.

mod adam;
mod matrix;
mod mlp;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use mlp::{Activation, Layer, Mlp, MlpCache};

use crate::error::{Error, Result};

/// A collection of flat parameter tensors with a fixed layout. Gradients use
/// the same type, so optimizers can zip parameters with gradients.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Usage("softmax of an empty vector".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Usage(format!("softmax of non-finite score {bad}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}
