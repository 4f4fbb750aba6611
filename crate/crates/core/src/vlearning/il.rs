use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::AdamState;
use crate::sim::JointState;
use crate::state_repr::to_robot_centric;
use crate::value_net::{SarlInput, SarlParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IlReport {
    /// Mean squared error over each epoch's minibatches.
    pub epoch_losses: Vec<f64>,
}

pub fn mse_loss(values: &[f64], targets: &[f64]) -> f64 {
    values
        .iter()
        .zip(targets)
        .map(|(v, y)| (v - y) * (v - y))
        .sum::<f64>()
        / values.len() as f64
}

/// One Adam step on the mean squared error of a minibatch; returns the loss
/// before the step.
pub(crate) fn regression_step(
    params: &mut SarlParams,
    adam: &mut AdamState,
    inputs: &[&SarlInput],
    targets: &[f64],
    lr: f64,
) -> Result<f64> {
    let batch = params.batch(inputs.iter().copied())?;
    let pass = params.forward_batch(&batch)?;
    let loss = mse_loss(&pass.values, targets);
    if !loss.is_finite() {
        return Err(Error::Training(format!("loss diverged to {loss}")));
    }
    let scale = 2.0 / targets.len() as f64;
    let grad: Vec<f64> = pass
        .values
        .iter()
        .zip(targets)
        .map(|(v, y)| scale * (v - y))
        .collect();
    let mut grads = params.zeros_like();
    params.backward_batch(&pass, &grad, &mut grads)?;
    adam.step(params, &grads, lr)?;
    Ok(loss)
}

/// Regresses the network onto `(state, target)` pairs with Adam, reshuffling
/// every epoch.
pub fn imitation_learning<'a, R: Rng + ?Sized>(
    params: &mut SarlParams,
    samples: impl IntoIterator<Item = (&'a JointState, f64)>,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut R,
) -> Result<IlReport> {
    let (inputs, targets): (Vec<SarlInput>, Vec<f64>) = samples
        .into_iter()
        .map(|(s, y)| (params.encode(&to_robot_centric(s)), y))
        .unzip();
    if inputs.is_empty() {
        return Err(Error::Config("no demonstration samples".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut adam = AdamState::new(params);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut report = IlReport::default();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let xs: Vec<&SarlInput> = chunk.iter().map(|&i| &inputs[i]).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            total += regression_step(params, &mut adam, &xs, &ys, lr)
                .map_err(|e| Error::Training(format!("imitation epoch {epoch}: {e}")))?;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::info!("imitation epoch {epoch}: loss {mean:.6}");
        // Adam at lr 0.01 can knock many ReLUs out at once; the loss then
        // jumps and may settle at the target variance (constant output).
        let best = report.epoch_losses.iter().copied().fold(f64::INFINITY, f64::min);
        if mean > 2.0 * best {
            log::warn!("imitation epoch {epoch}: loss {mean:.6} is more than twice the best so far ({best:.6}); the learning rate may be too high");
        }
        report.epoch_losses.push(mean);
    }
    Ok(report)
}
