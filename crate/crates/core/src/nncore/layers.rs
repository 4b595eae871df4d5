//! Fully-connected layer, pointwise activations, pooling, dropout and softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::real::{gemm, MatRef};
use super::{LayerGrads, LayerParams, Real, Tensor};
use crate::error::{Error, Result};

fn rows_cols<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [n] => Ok((1, n)),
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, &[0, 0], t.shape())),
    }
}

/// `output = W · input + b` for each row. Weight is `[out, in]`; input is a
/// vector or a `[rows, in]` matrix.
pub fn fc_forward<T: Real>(input: &Tensor<T>, params: &LayerParams<T>) -> Result<Tensor<T>> {
    let (rows, d_in) = rows_cols(input, "fc")?;
    let (d_out, w_in) = match *params.weight.shape() {
        [o, i] => (o, i),
        _ => return Err(Error::shape("fc weight", &[0, d_in], params.weight.shape())),
    };
    if w_in != d_in {
        return Err(Error::shape("fc", &[d_out, d_in], params.weight.shape()));
    }
    if params.bias.shape() != [d_out] {
        return Err(Error::shape("fc bias", &[d_out], params.bias.shape()));
    }
    let shape: Vec<usize> = if input.rank() == 1 { vec![d_out] } else { vec![rows, d_out] };
    let mut out = Tensor::zeros(&shape);
    for row in out.data_mut().chunks_mut(d_out) {
        row.copy_from_slice(params.bias.data());
    }
    gemm(
        T::one(),
        MatRef::new(input.data(), rows, d_in),
        MatRef::new(params.weight.data(), d_out, d_in).t(),
        T::one(),
        out.data_mut(),
    );
    Ok(out)
}

pub fn fc_backward<T: Real>(
    input: &Tensor<T>,
    params: &LayerParams<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, LayerGrads<T>)> {
    let (rows, d_in) = rows_cols(input, "fc_backward")?;
    let d_out = params.weight.shape()[0];
    if grad_out.len() != rows * d_out {
        return Err(Error::shape("fc_backward grad", &[rows, d_out], grad_out.shape()));
    }
    let mut grads = params.zero_grads();
    let g = MatRef::new(grad_out.data(), rows, d_out);
    gemm(T::one(), g.t(), MatRef::new(input.data(), rows, d_in), T::zero(), grads.weight.data_mut());
    for row in grad_out.data().chunks(d_out) {
        for (b, &v) in grads.bias.data_mut().iter_mut().zip(row) {
            *b += v;
        }
    }
    let grad_in = if need_input_grad {
        let mut gi = Tensor::zeros(input.shape());
        gemm(T::one(), g, MatRef::new(params.weight.data(), d_out, d_in), T::zero(), gi.data_mut());
        Some(gi)
    } else {
        None
    };
    Ok((grad_in, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    // split by sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Real>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = kind.apply(*v);
    }
    out
}

/// Chain rule through an activation, given its forward output.
pub fn activation_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= kind.derivative_from_output(y);
    }
    g
}

/// Per-channel spatial mean. `[N,C,H,W]` → `[N,C]`, `[C,H,W]` → `[C]`.
pub fn global_average_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (shape, plane) = match *input.shape() {
        [c, h, w] => (vec![c], h * w),
        [n, c, h, w] => (vec![n, c], h * w),
        _ => return Err(Error::shape("global_average_pool", &[0, 0, 0, 0], input.shape())),
    };
    if plane == 0 {
        return Err(Error::InvalidInput("global_average_pool over empty spatial extent".into()));
    }
    let inv = T::one() / T::from_usize(plane).unwrap_or_else(T::one);
    let data = input.data().chunks(plane).map(|ch| ch.iter().copied().sum::<T>() * inv).collect();
    Tensor::from_vec(&shape, data)
}

pub fn global_average_pool_backward<T: Real>(input_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let plane: usize = input_shape[input_shape.len() - 2..].iter().product();
    let inv = T::one() / T::from_usize(plane).unwrap_or_else(T::one);
    let mut g = Tensor::zeros(input_shape);
    for (ch, &go) in g.data_mut().chunks_mut(plane).zip(grad_out.data()) {
        ch.fill(go * inv);
    }
    g
}

/// Inverted dropout. Returns the output and the per-entry scale mask
/// (`0` or `1 / (1 - rate)`), which is also the backward multiplier.
pub fn dropout<T: Real>(input: &Tensor<T>, rate: f64, training: bool, rng: &mut impl Rng) -> (Tensor<T>, Option<Tensor<T>>) {
    if !training || rate <= 0.0 {
        return (input.clone(), None);
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask = Tensor::from_fn(input.shape(), |_| if rng.random::<f64>() < rate { T::zero() } else { keep });
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    (out, Some(mask))
}

pub fn dropout_backward<T: Real>(grad_out: &Tensor<T>, mask: Option<&Tensor<T>>) -> Tensor<T> {
    let mut g = grad_out.clone();
    if let Some(mask) = mask {
        for (v, &m) in g.data_mut().iter_mut().zip(mask.data()) {
            *v *= m;
        }
    }
    g
}

/// Max-subtracted softmax over a vector.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient w.r.t. logits given softmax output `y`: `y ⊙ (g - ⟨g, y⟩)`.
pub fn softmax_backward<T: Real>(output: &[T], grad_out: &[T]) -> Vec<T> {
    let inner: T = output.iter().zip(grad_out).map(|(&y, &g)| y * g).sum();
    output.iter().zip(grad_out).map(|(&y, &g)| y * (g - inner)).collect()
}
