//! Central finite-difference oracle for hand-written backward passes.
//!
//! Everything here only calls forward functions; it never touches a backward
//! implementation except to read the value being checked.

use rand::seq::index::sample;
use rand::Rng;

use super::{LayerGrads, LayerParams, Tensor};

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-3;

/// Denominator floor so that gradients that are zero on both sides compare
/// as equal instead of dividing by zero.
const REL_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn central_difference(x0: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

impl GradReport {
    pub fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = rel_error(analytic, numeric);
        if self.checked == 1 || e > self.max_rel_error {
            self.max_rel_error = e;
            self.worst = format!("{} analytic={analytic:.6e} numeric={numeric:.6e}", label());
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }

    pub fn passes(&self) -> bool {
        self.checked > 0 && self.max_rel_error < FD_REL_TOL
    }
}

/// Indices to probe: all of them when few, otherwise a random subset.
pub fn probe_indices(len: usize, max: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, max).into_vec();
        v.sort_unstable();
        v
    }
}

/// Checks a single layer's input and parameter gradients on the scalar
/// `⟨r, forward(x, p)⟩` for a random projection `r`.
pub fn check_layer_gradients(
    input: &Tensor<f64>,
    params: &LayerParams<f64>,
    forward: impl Fn(&Tensor<f64>, &LayerParams<f64>) -> Tensor<f64>,
    backward: impl Fn(&Tensor<f64>, &LayerParams<f64>, &Tensor<f64>) -> (Tensor<f64>, LayerGrads<f64>),
    rng: &mut impl Rng,
) -> GradReport {
    let out = forward(input, params);
    let proj = random_tensor(out.shape(), rng);
    check_layer_gradients_with(input, params, &proj, forward, backward, rng)
}

/// As [`check_layer_gradients`] with a caller-chosen projection (all ones
/// gives the gradient of the sum of outputs).
pub fn check_layer_gradients_with(
    input: &Tensor<f64>,
    params: &LayerParams<f64>,
    proj: &Tensor<f64>,
    forward: impl Fn(&Tensor<f64>, &LayerParams<f64>) -> Tensor<f64>,
    backward: impl Fn(&Tensor<f64>, &LayerParams<f64>, &Tensor<f64>) -> (Tensor<f64>, LayerGrads<f64>),
    rng: &mut impl Rng,
) -> GradReport {
    let (grad_in, grads) = backward(input, params, proj);
    let mut report = GradReport::default();

    let mut p = params.clone();
    for i in probe_indices(p.param_count(), 200, rng) {
        let orig = p.get(i);
        let numeric = central_difference(orig, |v| {
            p.set(i, v);
            forward(input, &p).dot(proj)
        });
        p.set(i, orig);
        report.record(|| format!("param[{i}]"), grads.get(i), numeric);
    }

    let mut x = input.clone();
    for i in probe_indices(x.len(), 200, rng) {
        let orig = x.data()[i];
        let numeric = central_difference(orig, |v| {
            x.data_mut()[i] = v;
            forward(&x, params).dot(proj)
        });
        x.data_mut()[i] = orig;
        report.record(|| format!("input[{i}]"), grad_in.data()[i], numeric);
    }
    report
}
