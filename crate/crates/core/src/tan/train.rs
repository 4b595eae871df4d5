use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{recon_loss, recon_loss_grad, tan_backward, tan_forward, TanConfig, TanModel, TanParams};
use crate::error::{Error, Result};
use crate::motiondata::FlowStack;
use crate::nncore::{Tensor, ADAGRAD_EPS};

#[derive(Clone, Debug)]
pub struct TanTraining {
    pub model: TanModel,
    /// Mini-batch reconstruction loss at every step.
    pub losses: Vec<f64>,
}

/// Stacks the normalized inputs of `stacks[indices]` into `[B,30,H,W]`.
pub fn batch_tensor(stacks: &[FlowStack], indices: &[usize]) -> Result<Tensor<f32>> {
    let first = &stacks[indices[0]].tensor;
    let mut shape = vec![indices.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(indices.len() * first.len());
    for &i in indices {
        let n = stacks[i].normalized();
        if n.shape() != first.shape() {
            return Err(Error::shape("tan batch", first.shape(), n.shape()));
        }
        data.extend_from_slice(n.data());
    }
    Tensor::from_vec(&shape, data)
}

/// Unsupervised L1 training of the autoencoder with Adagrad.
///
/// Each step draws `batch_size` stacks uniformly with replacement. The
/// callback fires after the update at every milestone step and after the
/// final step, receiving the zero-based step index.
pub fn train_tan(
    stacks: &[FlowStack],
    config: &TanConfig,
    mut on_milestone: impl FnMut(usize, &TanModel) -> Result<()>,
) -> Result<TanTraining> {
    if stacks.is_empty() {
        return Err(Error::InvalidInput("train_tan: empty dataset".into()));
    }
    let schedule = &config.schedule;
    let mut model = TanModel::new(config.clone(), schedule.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x7a6e_7472_6169_6e00);
    let mut losses = Vec::with_capacity(schedule.iterations);
    let eps = ADAGRAD_EPS as f32;
    for step in 0..schedule.iterations {
        let idx: Vec<usize> = (0..schedule.batch_size).map(|_| rng.random_range(0..stacks.len())).collect();
        let x = batch_tensor(stacks, &idx)?;
        let loss = train_step(&mut model.params, config, &x, schedule.rate_at(step) as f32, eps)?;
        losses.push(loss);
        if schedule.milestones.contains(&step) || step + 1 == schedule.iterations {
            on_milestone(step, &model)?;
        }
    }
    Ok(TanTraining { model, losses })
}

/// Forward, L1 loss, backward and Adagrad update on one batch. Returns the
/// pre-update loss.
pub fn train_step(params: &mut TanParams<f32>, config: &TanConfig, batch: &Tensor<f32>, lr: f32, eps: f32) -> Result<f64> {
    let acts = tan_forward(config, params, batch)?;
    let loss = recon_loss(batch, acts.reconstruction())?;
    let g = recon_loss_grad(batch, acts.reconstruction());
    let grads = tan_backward(config, params, &acts, &g)?;
    for (p, g) in params.layers.iter_mut().zip(&grads) {
        p.adagrad_step(g, lr, eps)?;
    }
    Ok(loss)
}

/// Loss of predicting all zeros, i.e. the mean absolute normalized flow.
pub fn zero_predictor_loss(stacks: &[FlowStack]) -> f64 {
    let (sum, n) = stacks.iter().fold((0.0, 0usize), |(s, n), st| {
        let t = st.normalized();
        (s + t.data().iter().map(|v| v.abs() as f64).sum::<f64>(), n + t.len())
    });
    sum / n.max(1) as f64
}

/// Mean reconstruction loss of `model` over `stacks`.
pub fn dataset_loss(model: &TanModel, stacks: &[FlowStack]) -> Result<f64> {
    let mut total = 0.0;
    for s in stacks {
        total += model.stack_loss(s)?;
    }
    Ok(total / stacks.len().max(1) as f64)
}
