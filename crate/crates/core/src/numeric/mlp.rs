use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer. `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Fully connected network: ReLU on hidden layers, configurable final activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl MlpCache {
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` lists every layer's output
    /// width; the last one is the network output.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        sizes: &[usize],
        final_activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut fan_in = input_dim;
        for (k, &fan_out) in sizes.iter().enumerate() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            let activation = if k + 1 == sizes.len() {
                final_activation
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                weight: Matrix::from_vec(fan_out, fan_in, data).expect("shape by construction"),
                bias: vec![0.0; fan_out],
                activation,
            });
            fan_in = fan_out;
        }
        Mlp { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::Dimension {
                    context: "Mlp layer bias",
                    expected: layer.weight.rows(),
                    actual: layer.bias.len(),
                });
            }
            if k > 0 && layers[k - 1].weight.rows() != layer.weight.cols() {
                return Err(Error::Dimension {
                    context: "Mlp layer chaining",
                    expected: layers[k - 1].weight.rows(),
                    actual: layer.weight.cols(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    /// Same shapes and activations, all values zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let (out, cache) = self.forward_batch(&Matrix::row_vector(input))?;
        Ok((out.into_vec(), cache))
    }

    /// Row-wise forward pass over a `batch × input_dim` matrix.
    pub fn forward_batch(&self, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let pre = affine(layer, &current)?;
            let mut post = pre.clone();
            post.map_inplace(|x| layer.activation.apply(x));
            inputs.push(current);
            pre_activations.push(pre);
            current = post;
        }
        Ok((
            current,
            MlpCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict_batch(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut current = affine(&self.layers[0], input)?;
        current.map_inplace(|x| self.layers[0].activation.apply(x));
        for layer in &self.layers[1..] {
            let mut next = affine(layer, &current)?;
            next.map_inplace(|x| layer.activation.apply(x));
            current = next;
        }
        Ok(current)
    }

    pub fn backward(&self, cache: &MlpCache, grad_output: &[f64]) -> Result<(Mlp, Vec<f64>)> {
        let mut grads = self.zeros_like();
        let grad_input =
            self.backward_batch(cache, &Matrix::row_vector(grad_output), &mut grads)?;
        Ok((grads, grad_input.into_vec()))
    }

    /// Accumulates parameter gradients of `Σ_rows output · grad_output` into
    /// `grads` and returns the gradient with respect to the input batch.
    pub fn backward_batch(
        &self,
        cache: &MlpCache,
        grad_output: &Matrix,
        grads: &mut Mlp,
    ) -> Result<Matrix> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Usage(format!(
                "MLP cache has {} layers, network has {}",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        for (layer, (input, pre)) in self
            .layers
            .iter()
            .zip(cache.inputs.iter().zip(&cache.pre_activations))
        {
            if input.cols() != layer.weight.cols() || pre.cols() != layer.weight.rows() {
                return Err(Error::Usage(
                    "MLP cache does not match the network it is applied to".into(),
                ));
            }
        }
        if grad_output.rows() != cache.batch_size() || grad_output.cols() != self.output_dim() {
            return Err(Error::Dimension {
                context: "Mlp::backward_batch grad_output",
                expected: cache.batch_size() * self.output_dim(),
                actual: grad_output.rows() * grad_output.cols(),
            });
        }

        let mut grad = grad_output.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let pre = &cache.pre_activations[k];
            if layer.activation != Activation::Identity {
                for (g, &z) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *g *= layer.activation.derivative(z);
                }
            }
            let slot = &mut grads.layers[k];
            grad.transposed_matmul_into(&cache.inputs[k], &mut slot.weight)?;
            for r in 0..grad.rows() {
                for (b, g) in slot.bias.iter_mut().zip(grad.row(r)) {
                    *b += g;
                }
            }
            grad = grad.matmul(&layer.weight)?;
        }
        Ok(grad)
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "Mlp input",
                expected: self.input_dim(),
                actual: input.cols(),
            });
        }
        Ok(())
    }
}

fn affine(layer: &Layer, input: &Matrix) -> Result<Matrix> {
    let mut out = input.matmul_transposed(&layer.weight)?;
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(out)
}

impl ParamSet for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}
