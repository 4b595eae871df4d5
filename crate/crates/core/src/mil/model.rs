use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bag::Bag;
use super::losses::{total_loss_grad, BagOutputs, LossMode};
use crate::error::{Error, Result};
use crate::nncore::{
    activation, activation_backward, dropout, dropout_backward, fc_backward, fc_forward, softmax, softmax_backward,
    Activation, Checkpoint, LayerGrads, LayerParams, Real, Tensor, TrainSchedule, ADAGRAD_EPS,
};

/// How per-segment attention logits become weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionNorm {
    /// Softmax over the bag; weights sum to one.
    Softmax,
    /// Independent sigmoid per segment, unnormalized. Kept for ablation.
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MilConfig {
    pub segments: usize,
    pub lambda1: f64,
    pub mode: LossMode,
    pub regressor_widths: Vec<usize>,
    pub attention_widths: Vec<usize>,
    pub dropout: f64,
    pub attention_norm: AttentionNorm,
    /// Positive bags per mini-batch; the same number of negatives is drawn.
    pub bags_per_side: usize,
    /// `batch_size` is unused here; see `bags_per_side`.
    pub schedule: TrainSchedule,
}

impl Default for MilConfig {
    fn default() -> Self {
        MilConfig {
            segments: 32,
            lambda1: 8e-5,
            mode: LossMode::Attention,
            regressor_widths: vec![512, 32, 1],
            attention_widths: vec![256, 64, 1],
            dropout: 0.6,
            attention_norm: AttentionNorm::Softmax,
            bags_per_side: 30,
            schedule: TrainSchedule {
                learning_rate: 0.001,
                iterations: 10_000,
                milestones: vec![4000, 8000],
                batch_size: 60,
                seed: 0,
            },
        }
    }
}

impl MilConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.segments == 0 {
            errs.push("mil segments must be positive".to_string());
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            errs.push(format!("lambda1 must be a finite non-negative number, got {}", self.lambda1));
        }
        for (name, w) in [("regressor", &self.regressor_widths), ("attention", &self.attention_widths)] {
            if w.len() != 3 || w.contains(&0) || w.last() != Some(&1) {
                errs.push(format!("{name} widths must be three positive sizes ending in 1, got {w:?}"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push(format!("dropout rate must be in [0, 1), got {}", self.dropout));
        }
        if self.bags_per_side == 0 {
            errs.push("bags per side must be positive".to_string());
        }
        if let Err(Error::Config(mut e)) = self.schedule.validate() {
            errs.append(&mut e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

pub const REGRESSOR_NAMES: [&str; 3] = ["regressor/fc1", "regressor/fc2", "regressor/fc3"];
pub const ATTENTION_NAMES: [&str; 3] = ["attention/fc1", "attention/fc2", "attention/fc3"];

const REGRESSOR_ACTS: [Activation; 3] = [Activation::Relu, Activation::Identity, Activation::Sigmoid];
const ATTENTION_ACTS: [Activation; 3] = [Activation::Tanh, Activation::Tanh, Activation::Identity];

/// Regressor and attention networks, three fully-connected layers each.
#[derive(Clone, Debug, PartialEq)]
pub struct MilParams<T = f32> {
    pub regressor: Vec<LayerParams<T>>,
    pub attention: Vec<LayerParams<T>>,
}

fn glorot_stack<T: Real>(input_dim: usize, widths: &[usize], rng: &mut impl Rng) -> Vec<LayerParams<T>> {
    let mut d = input_dim;
    widths
        .iter()
        .map(|&w| {
            let p = LayerParams::glorot(&[w, d], w, d, w, rng);
            d = w;
            p
        })
        .collect()
}

impl<T: Real> MilParams<T> {
    pub fn init(config: &MilConfig, input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regressor = glorot_stack(input_dim, &config.regressor_widths, &mut rng);
        let attention = glorot_stack(input_dim, &config.attention_widths, &mut rng);
        MilParams { regressor, attention }
    }

    pub fn input_dim(&self) -> usize {
        self.regressor[0].weight.shape()[1]
    }

    pub fn cast<U: Real>(&self) -> MilParams<U> {
        MilParams {
            regressor: self.regressor.iter().map(LayerParams::cast).collect(),
            attention: self.attention.iter().map(LayerParams::cast).collect(),
        }
    }

    /// All layers, regressor first.
    pub fn layers(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.regressor.iter().chain(&self.attention)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.regressor.iter_mut().chain(self.attention.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(LayerParams::param_count).sum()
    }
}

impl MilParams<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (name, p) in REGRESSOR_NAMES.iter().chain(&ATTENTION_NAMES).zip(self.layers()) {
            ck.push(*name, p.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let load = |names: &[&str]| -> Result<Vec<LayerParams<f32>>> {
            let layers = names.iter().map(|n| ck.take(n)).collect::<Result<Vec<_>>>()?;
            for pair in layers.windows(2) {
                if pair[1].weight.shape()[1] != pair[0].weight.shape()[0] {
                    return Err(Error::shape("mil checkpoint", &[pair[1].weight.shape()[0], pair[0].weight.shape()[0]], pair[1].weight.shape()));
                }
            }
            Ok(layers)
        };
        let p = MilParams { regressor: load(&REGRESSOR_NAMES)?, attention: load(&ATTENTION_NAMES)? };
        if p.regressor[0].weight.shape()[1] != p.attention[0].weight.shape()[1] {
            return Err(Error::shape("mil checkpoint", p.regressor[0].weight.shape(), p.attention[0].weight.shape()));
        }
        if p.regressor[2].weight.shape()[0] != 1 || p.attention[2].weight.shape()[0] != 1 {
            return Err(Error::InvalidInput("mil checkpoint: output layers must have width 1".into()));
        }
        Ok(p)
    }
}

/// Cached activations of a three-layer stack over `rows` inputs.
#[derive(Clone, Debug)]
struct StackPass<T> {
    /// Input to each layer (after dropout of the previous one).
    inputs: Vec<Tensor<T>>,
    /// Post-activation outputs, before dropout.
    outputs: Vec<Tensor<T>>,
    masks: Vec<Option<Tensor<T>>>,
}

fn stack_forward<T: Real>(
    layers: &[LayerParams<T>],
    acts: &[Activation; 3],
    x: &Tensor<T>,
    dropout_rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor<T>, StackPass<T>)> {
    let mut pass = StackPass { inputs: Vec::new(), outputs: Vec::new(), masks: Vec::new() };
    let mut rng = rng;
    let mut h = x.clone();
    for (l, (p, &act)) in layers.iter().zip(acts).enumerate() {
        let y = activation(&fc_forward(&h, p)?, act);
        pass.inputs.push(h);
        let last = l + 1 == layers.len();
        let (next, mask) = match rng.as_deref_mut() {
            Some(r) if !last => dropout(&y, dropout_rate, true, r),
            _ => (y.clone(), None),
        };
        pass.outputs.push(y);
        pass.masks.push(mask);
        h = next;
    }
    Ok((h, pass))
}

fn stack_backward<T: Real>(
    layers: &[LayerParams<T>],
    acts: &[Activation; 3],
    pass: &StackPass<T>,
    grad_out: Tensor<T>,
) -> Result<Vec<LayerGrads<T>>> {
    let mut grads = vec![None; layers.len()];
    let mut g = grad_out;
    for l in (0..layers.len()).rev() {
        let g_post = dropout_backward(&g, pass.masks[l].as_ref());
        let g_pre = activation_backward(&pass.outputs[l], &g_post, acts[l]);
        let (gi, lg) = fc_backward(&pass.inputs[l], &layers[l], &g_pre, l > 0)?;
        grads[l] = Some(lg);
        if let Some(gi) = gi {
            g = gi;
        }
    }
    Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
}

/// Forward pass over several bags stacked row-wise.
#[derive(Clone, Debug)]
pub struct MilPass<T = f32> {
    /// Row offsets of each bag; bag `b` spans `offsets[b]..offsets[b + 1]`.
    pub offsets: Vec<usize>,
    pub scores: Vec<T>,
    /// Attention weights, or uniform `1/m` when attention is not evaluated.
    pub weights: Vec<T>,
    regressor: StackPass<T>,
    attention: Option<StackPass<T>>,
}

impl<T: Real> MilPass<T> {
    pub fn bag_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn bag_outputs(&self, b: usize) -> BagOutputs<'_, T> {
        let r = self.offsets[b]..self.offsets[b + 1];
        BagOutputs { scores: &self.scores[r.clone()], weights: &self.weights[r] }
    }
}

fn normalize_weights<T: Real>(logits: &[T], norm: AttentionNorm) -> Vec<T> {
    match norm {
        AttentionNorm::Softmax => softmax(logits),
        AttentionNorm::Sigmoid => logits.iter().map(|&z| Activation::Sigmoid.apply(z)).collect(),
    }
}

fn stack_bags<T: Real>(bags: &[&Tensor<T>], d: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let mut offsets = vec![0];
    let mut data = Vec::new();
    for b in bags {
        if b.rank() != 2 || b.shape()[1] != d || b.shape()[0] == 0 {
            return Err(Error::shape("mil bag", &[b.shape().first().copied().unwrap_or(0).max(1), d], b.shape()));
        }
        data.extend_from_slice(b.data());
        offsets.push(data.len() / d);
    }
    let rows = *offsets.last().unwrap_or(&0);
    Ok((Tensor::from_vec(&[rows, d], data)?, offsets))
}

/// Scores (and, if `with_attention`, attention weights) for each bag.
/// Passing an rng enables dropout in the regressor.
pub fn mil_forward<T: Real>(
    config: &MilConfig,
    params: &MilParams<T>,
    bags: &[&Tensor<T>],
    with_attention: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<MilPass<T>> {
    let (x, offsets) = stack_bags(bags, params.input_dim())?;
    let (s, regressor) = stack_forward(&params.regressor, &REGRESSOR_ACTS, &x, config.dropout, rng)?;
    let scores = s.into_vec();
    let (weights, attention) = if with_attention {
        let (logits, pass) = stack_forward(&params.attention, &ATTENTION_ACTS, &x, 0.0, None)?;
        let logits = logits.into_vec();
        let w = offsets
            .windows(2)
            .flat_map(|r| normalize_weights(&logits[r[0]..r[1]], config.attention_norm))
            .collect();
        (w, Some(pass))
    } else {
        let w = offsets
            .windows(2)
            .flat_map(|r| {
                let m = r[1] - r[0];
                std::iter::repeat_n(T::one() / T::from_usize(m).unwrap_or_else(T::one), m)
            })
            .collect();
        (w, None)
    };
    Ok(MilPass { offsets, scores, weights, regressor, attention })
}

/// Parameter gradients given the loss derivative with respect to every
/// row's score and weight. Attention gradients are zero when the pass did
/// not evaluate attention.
pub fn mil_backward<T: Real>(
    config: &MilConfig,
    params: &MilParams<T>,
    pass: &MilPass<T>,
    d_scores: &[T],
    d_weights: &[T],
) -> Result<Vec<LayerGrads<T>>> {
    let rows = pass.scores.len();
    let mut grads = stack_backward(
        &params.regressor,
        &REGRESSOR_ACTS,
        &pass.regressor,
        Tensor::from_vec(&[rows, 1], d_scores.to_vec())?,
    )?;
    match &pass.attention {
        Some(att) => {
            let mut d_logits = Vec::with_capacity(rows);
            for r in pass.offsets.windows(2) {
                let (w, g) = (&pass.weights[r[0]..r[1]], &d_weights[r[0]..r[1]]);
                match config.attention_norm {
                    AttentionNorm::Softmax => d_logits.extend(softmax_backward(w, g)),
                    AttentionNorm::Sigmoid => {
                        d_logits.extend(w.iter().zip(g).map(|(&w, &g)| g * w * (T::one() - w)))
                    }
                }
            }
            let g = Tensor::from_vec(&[rows, 1], d_logits)?;
            grads.extend(stack_backward(&params.attention, &ATTENTION_ACTS, att, g)?);
        }
        None => grads.extend(params.attention.iter().map(LayerParams::zero_grads)),
    }
    Ok(grads)
}

/// Mean pair loss over positives `bags[..k]` paired with negatives
/// `bags[k..]`, and its parameter gradients.
pub fn pair_batch_loss<T: Real>(
    config: &MilConfig,
    params: &MilParams<T>,
    bags: &[&Tensor<T>],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(T, Vec<LayerGrads<T>>)> {
    if bags.is_empty() || bags.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!("pair batch needs an even, non-zero bag count, got {}", bags.len())));
    }
    let k = bags.len() / 2;
    let attention = config.mode == LossMode::Attention;
    let pass = mil_forward(config, params, bags, attention, rng)?;
    let rows = pass.scores.len();
    let (mut d_s, mut d_w) = (vec![T::zero(); rows], vec![T::zero(); rows]);
    let inv_k = T::one() / T::from_usize(k).unwrap_or_else(T::one);
    let lambda = T::from_f64_lossy(config.lambda1);
    let mut loss = T::zero();
    for i in 0..k {
        let g = total_loss_grad(pass.bag_outputs(i), pass.bag_outputs(k + i), lambda, config.mode);
        loss += g.loss * inv_k;
        for (b, gs, gw) in [(i, &g.pos_scores, &g.pos_weights), (k + i, &g.neg_scores, &g.neg_weights)] {
            let start = pass.offsets[b];
            for j in 0..gs.len() {
                d_s[start + j] += gs[j] * inv_k;
                d_w[start + j] += gw[j] * inv_k;
            }
        }
    }
    let grads = mil_backward(config, params, &pass, &d_s, &d_w)?;
    Ok((loss, grads))
}

/// Trained regressor and attention with the per-step mini-batch loss.
#[derive(Clone, Debug)]
pub struct MilTraining {
    pub params: MilParams<f32>,
    pub losses: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, available: usize, count: usize) -> Vec<usize> {
    if available >= count {
        sample(rng, available, count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..available)).collect()
    }
}

/// Adagrad training on positive/negative bag pairs.
///
/// Each step draws `bags_per_side` positives and as many negatives, without
/// replacement when a side has enough bags and with replacement otherwise,
/// and pairs the i-th positive with the i-th negative.
pub fn train_mil(bags: &[Bag], config: &MilConfig) -> Result<MilTraining> {
    config.validate()?;
    let pos: Vec<&Bag> = bags.iter().filter(|b| b.is_positive()).collect();
    let neg: Vec<&Bag> = bags.iter().filter(|b| !b.is_positive()).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput(format!(
            "train_mil needs both positive and negative bags, got {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let d = bags[0].dim();
    if let Some(b) = bags.iter().find(|b| b.dim() != d || b.segments() != config.segments) {
        return Err(Error::shape("train_mil bag", &[config.segments, d], b.features.shape()));
    }
    let schedule = &config.schedule;
    let mut params = MilParams::<f32>::init(config, d, schedule.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x6d69_6c5f_7472_6e00);
    let mut losses = Vec::with_capacity(schedule.iterations);
    let eps = ADAGRAD_EPS as f32;
    for step in 0..schedule.iterations {
        let pi = draw(&mut rng, pos.len(), config.bags_per_side);
        let ni = draw(&mut rng, neg.len(), config.bags_per_side);
        let batch: Vec<&Tensor<f32>> =
            pi.iter().map(|&i| &pos[i].features).chain(ni.iter().map(|&i| &neg[i].features)).collect();
        let (loss, grads) = pair_batch_loss(config, &params, &batch, Some(&mut rng))?;
        let lr = schedule.rate_at(step) as f32;
        for (p, g) in params.layers_mut().zip(&grads) {
            p.adagrad_step(g, lr, eps)?;
        }
        losses.push(loss as f64);
    }
    Ok(MilTraining { params, losses })
}

/// A trained MIL model used for dropout-free inference.
#[derive(Clone, Debug)]
pub struct MilModel {
    pub config: MilConfig,
    pub params: MilParams<f32>,
}

impl MilModel {
    pub fn score_segments(&self, bag: &Bag) -> Result<Vec<f32>> {
        Ok(mil_forward(&self.config, &self.params, &[&bag.features], false, None)?.scores)
    }

    pub fn attention_weights(&self, bag: &Bag) -> Result<Vec<f32>> {
        Ok(mil_forward(&self.config, &self.params, &[&bag.features], true, None)?.weights)
    }

    /// Bag-level score: attention-weighted in attention mode, max otherwise.
    pub fn bag_score(&self, bag: &Bag) -> Result<f32> {
        let pass = mil_forward(&self.config, &self.params, &[&bag.features], self.config.mode == LossMode::Attention, None)?;
        Ok(match self.config.mode {
            LossMode::Attention => pass.scores.iter().zip(&pass.weights).map(|(s, w)| s * w).sum(),
            LossMode::Max => pass.scores.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        })
    }
}

/// Scores of each row with an explicit training flag; `rng` is only used
/// when `training` is set.
pub fn score_segments<T: Real>(
    config: &MilConfig,
    params: &MilParams<T>,
    features: &Tensor<T>,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<T>> {
    Ok(mil_forward(config, params, &[features], false, training.then_some(rng))?.scores)
}

pub fn attention_weights<T: Real>(config: &MilConfig, params: &MilParams<T>, features: &Tensor<T>) -> Result<Vec<T>> {
    Ok(mil_forward(config, params, &[features], true, None)?.weights)
}
