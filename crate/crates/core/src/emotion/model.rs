//! Dense models: the kernel-to-embedding projection and the fusion head,
//! with full-batch gradient descent on cross-entropy.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Self::Identity => v,
            Self::Tanh => v.tanh(),
        }
    }
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-a..a)).collect()
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + w[r * n..(r + 1) * n].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

/// `y = act(W x + b)` with `W` stored row-major (`output_dim × input_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub version: u32,
    pub input_dim: usize,
    pub output_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ProjectionModel {
    /// Identity on the first `min(input, output)` coordinates, zero rows
    /// beyond.
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        let mut weights = alloc::vec![0.0; input_dim * output_dim];
        for i in 0..input_dim.min(output_dim) {
            weights[i * input_dim + i] = 1.0;
        }
        Self {
            version: MODEL_VERSION,
            input_dim,
            output_dim,
            weights,
            bias: alloc::vec![0.0; output_dim],
            activation: Activation::Tanh,
        }
    }

    /// Xavier-uniform weights, zero bias, tanh.
    pub fn seeded(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: xavier(&mut rng, input_dim, output_dim, input_dim * output_dim),
            ..Self::identity(input_dim, output_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(invalid("unsupported projection model version"));
        }
        if self.weights.len() != self.input_dim * self.output_dim || self.bias.len() != self.output_dim {
            return Err(invalid("projection weights do not match their dimensions"));
        }
        Ok(())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(affine(&self.weights, &self.bias, x)
            .into_iter()
            .map(|v| self.activation.apply(v))
            .collect())
    }
}

/// Softmax classifier with an optional tanh hidden layer
/// (`hidden_dim == 0` connects the input straight to the logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    /// `hidden_dim × input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n_classes × width`, width being the hidden or input size.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl HeadModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, n_classes: usize) -> Self {
        let width = if hidden_dim == 0 { input_dim } else { hidden_dim };
        Self {
            version: MODEL_VERSION,
            input_dim,
            hidden_dim,
            n_classes,
            w1: alloc::vec![0.0; hidden_dim * input_dim],
            b1: alloc::vec![0.0; hidden_dim],
            w2: alloc::vec![0.0; n_classes * width],
            b2: alloc::vec![0.0; n_classes],
        }
    }

    pub fn seeded(input_dim: usize, hidden_dim: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(input_dim, hidden_dim, n_classes);
        m.w1 = xavier(&mut rng, input_dim, hidden_dim, m.w1.len());
        m.w2 = xavier(&mut rng, m.width(), n_classes, m.w2.len());
        m
    }

    fn width(&self) -> usize {
        if self.hidden_dim == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(invalid("unsupported head model version"));
        }
        let ok = self.w1.len() == self.hidden_dim * self.input_dim
            && self.b1.len() == self.hidden_dim
            && self.w2.len() == self.n_classes * self.width()
            && self.b2.len() == self.n_classes
            && self.n_classes >= 2;
        if !ok {
            return Err(invalid("head weights do not match their dimensions"));
        }
        Ok(())
    }

    /// All parameters in the order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let sizes = [self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()];
        if p.len() != sizes.iter().sum::<usize>() {
            return Err(Error::DimensionMismatch {
                expected: sizes.iter().sum(),
                got: p.len(),
            });
        }
        let mut rest = p;
        for (dst, n) in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
            .into_iter()
            .zip(sizes)
        {
            dst.copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
        Ok(())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        if self.hidden_dim == 0 {
            x.to_vec()
        } else {
            affine(&self.w1, &self.b1, x).into_iter().map(f64::tanh).collect()
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(affine(&self.w2, &self.b2, &self.hidden(x)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Mean cross-entropy over the batch and its gradient in `params` order.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<(f64, Vec<f64>)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let width = self.width();
        let mut gw1 = alloc::vec![0.0; self.w1.len()];
        let mut gb1 = alloc::vec![0.0; self.b1.len()];
        let mut gw2 = alloc::vec![0.0; self.w2.len()];
        let mut gb2 = alloc::vec![0.0; self.b2.len()];
        let scale = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            if y >= self.n_classes {
                return Err(invalid("label outside the head's classes"));
            }
            if x.len() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim,
                    got: x.len(),
                });
            }
            let h = self.hidden(x);
            let p = softmax(&affine(&self.w2, &self.b2, &h));
            loss -= p[y].max(f64::MIN_POSITIVE).ln() * scale;
            let dlogit: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(k, pk)| (pk - if k == y { 1.0 } else { 0.0 }) * scale)
                .collect();
            for k in 0..self.n_classes {
                gb2[k] += dlogit[k];
                for j in 0..width {
                    gw2[k * width + j] += dlogit[k] * h[j];
                }
            }
            if self.hidden_dim > 0 {
                for j in 0..self.hidden_dim {
                    let back: f64 = (0..self.n_classes)
                        .map(|k| self.w2[k * width + j] * dlogit[k])
                        .sum();
                    let dz = back * (1.0 - h[j] * h[j]);
                    gb1[j] += dz;
                    for (i, xi) in x.iter().enumerate() {
                        gw1[j * self.input_dim + i] += dz * xi;
                    }
                }
            }
        }
        Ok((loss, [gw1, gb1, gw2, gb2].concat()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            hidden_dim: 64,
            n_classes: 7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss before each epoch's update, then the final loss.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
}

/// Full-batch gradient descent from a seeded initialization.
pub fn train_head(
    xs: &[Vec<f64>],
    ys: &[usize],
    config: &TrainConfig,
) -> Result<(HeadModel, TrainReport)> {
    let first = xs.first().ok_or(Error::Empty)?;
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if ys.iter().all(|y| *y == ys[0]) {
        return Err(degenerate("training data contains a single class"));
    }
    if !(config.learning_rate >= 0.0) {
        return Err(invalid("learning rate must be non-negative"));
    }
    let mut head = HeadModel::seeded(first.len(), config.hidden_dim, config.n_classes, config.seed);
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grad) = head.loss_and_grad(xs, ys)?;
        losses.push(loss);
        if config.learning_rate > 0.0 {
            let p: Vec<f64> = head
                .params()
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - config.learning_rate * g)
                .collect();
            head.set_params(&p)?;
        }
    }
    losses.push(head.loss_and_grad(xs, ys)?.0);
    let mut correct = 0;
    for (x, y) in xs.iter().zip(ys) {
        if crate::math::argmax(&head.predict(x)?) == Some(*y) {
            correct += 1;
        }
    }
    Ok((
        head,
        TrainReport {
            losses,
            train_accuracy: correct as f64 / xs.len() as f64,
        },
    ))
}
