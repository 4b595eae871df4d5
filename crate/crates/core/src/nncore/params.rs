use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Weights, biases and their Adagrad squared-gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    weight_acc: Tensor<T>,
    bias_acc: Tensor<T>,
}

/// Gradients with the same shapes as a layer's weight and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LayerParams<T> {
    /// Zero-initialized accumulators.
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        let weight_acc = Tensor::zeros(weight.shape());
        let bias_acc = Tensor::zeros(bias.shape());
        LayerParams { weight, bias, weight_acc, bias_acc }
    }

    /// Rebuild from persisted parts. Accumulators must match parameter shapes
    /// and be non-negative.
    pub fn with_accumulators(
        weight: Tensor<T>,
        bias: Tensor<T>,
        weight_acc: Tensor<T>,
        bias_acc: Tensor<T>,
    ) -> Result<Self> {
        if weight_acc.shape() != weight.shape() {
            return Err(Error::shape("accumulator", weight.shape(), weight_acc.shape()));
        }
        if bias_acc.shape() != bias.shape() {
            return Err(Error::shape("accumulator", bias.shape(), bias_acc.shape()));
        }
        if weight_acc.data().iter().chain(bias_acc.data()).any(|&a| a < T::zero() || !a.is_finite()) {
            return Err(Error::InvalidInput("negative or non-finite Adagrad accumulator".into()));
        }
        Ok(LayerParams { weight, bias, weight_acc, bias_acc })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(
        weight_shape: &[usize],
        bias_len: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Tensor::from_fn(weight_shape, |_| T::from_f64_lossy(rng.random_range(-limit..limit)));
        LayerParams::new(weight, Tensor::zeros(&[bias_len]))
    }

    pub fn weight_acc(&self) -> &Tensor<T> {
        &self.weight_acc
    }

    pub fn bias_acc(&self) -> &Tensor<T> {
        &self.bias_acc
    }

    pub fn zero_grads(&self) -> LayerGrads<T> {
        LayerGrads { weight: Tensor::zeros(self.weight.shape()), bias: Tensor::zeros(self.bias.shape()) }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Flat view of parameter `i`, weights first then biases.
    pub fn get(&self, i: usize) -> T {
        let nw = self.weight.len();
        if i < nw {
            self.weight.data()[i]
        } else {
            self.bias.data()[i - nw]
        }
    }

    pub fn set(&mut self, i: usize, v: T) {
        let nw = self.weight.len();
        if i < nw {
            self.weight.data_mut()[i] = v;
        } else {
            self.bias.data_mut()[i - nw] = v;
        }
    }

    pub fn cast<U: Real>(&self) -> LayerParams<U> {
        LayerParams {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            weight_acc: self.weight_acc.cast(),
            bias_acc: self.bias_acc.cast(),
        }
    }

    /// One Adagrad update: `acc += g²; p -= lr * g / (sqrt(acc) + eps)`.
    pub fn adagrad_step(&mut self, grads: &LayerGrads<T>, learning_rate: T, eps: T) -> Result<()> {
        if grads.weight.shape() != self.weight.shape() {
            return Err(Error::shape("adagrad_step", self.weight.shape(), grads.weight.shape()));
        }
        if grads.bias.shape() != self.bias.shape() {
            return Err(Error::shape("adagrad_step", self.bias.shape(), grads.bias.shape()));
        }
        adagrad_update(self.weight.data_mut(), self.weight_acc.data_mut(), grads.weight.data(), learning_rate, eps);
        adagrad_update(self.bias.data_mut(), self.bias_acc.data_mut(), grads.bias.data(), learning_rate, eps);
        Ok(())
    }
}

fn adagrad_update<T: Real>(params: &mut [T], acc: &mut [T], grads: &[T], lr: T, eps: T) {
    for ((p, a), &g) in params.iter_mut().zip(acc.iter_mut()).zip(grads) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}

impl<T: Real> LayerGrads<T> {
    pub fn add_assign(&mut self, other: &LayerGrads<T>) -> Result<()> {
        self.weight.add_assign(&other.weight)?;
        self.bias.add_assign(&other.bias)
    }

    pub fn scale(&mut self, factor: T) {
        self.weight.scale(factor);
        self.bias.scale(factor);
    }

    pub fn get(&self, i: usize) -> T {
        let nw = self.weight.len();
        if i < nw {
            self.weight.data()[i]
        } else {
            self.bias.data()[i - nw]
        }
    }
}

/// Learning-rate schedule: the rate halves at each milestone.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    pub iterations: usize,
    pub milestones: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("batch size must be positive".to_string());
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            problems.push(format!("milestones must be strictly increasing: {:?}", self.milestones));
        }
        if let Some(&last) = self.milestones.last() {
            if last >= self.iterations {
                problems.push(format!("milestone {last} not below total iterations {}", self.iterations));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Rate in effect at zero-based iteration `step`.
    pub fn rate_at(&self, step: usize) -> f64 {
        let halvings = self.milestones.iter().filter(|&&m| m <= step).count();
        self.learning_rate * 0.5f64.powi(halvings as i32)
    }
}

pub const ADAGRAD_EPS: f64 = 1e-8;
