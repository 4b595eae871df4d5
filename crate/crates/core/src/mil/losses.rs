//! Hinge ranking losses between a positive and a negative bag.
//!
//! Every loss here also has a `*_grad` twin returning the derivative with
//! respect to each bag's segment scores and attention weights.

use serde::{Deserialize, Serialize};

use crate::nncore::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Rank the top-scoring segment of each bag.
    Max,
    /// Rank the attention-weighted bag score.
    Attention,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Max => "max",
            LossMode::Attention => "attention",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(LossMode::Max),
            "attention" => Ok(LossMode::Attention),
            other => Err(format!("unknown loss mode `{other}` (expected max or attention)")),
        }
    }
}

/// Scores `f(V^i)` and attention weights `w_i` of one bag.
#[derive(Clone, Copy, Debug)]
pub struct BagOutputs<'a, T> {
    pub scores: &'a [T],
    pub weights: &'a [T],
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn weighted_sum<T: Real>(scores: &[T], weights: &[T]) -> T {
    scores.iter().zip(weights).map(|(&s, &w)| s * w).sum()
}

fn hinge<T: Real>(pos: T, neg: T) -> T {
    (T::one() - pos + neg).max(T::zero())
}

/// `max(0, 1 - max_i f(a_i) + max_i f(n_i))`.
pub fn max_hinge_loss<T: Real>(pos: &[T], neg: &[T]) -> T {
    hinge(pos[argmax(pos)], neg[argmax(neg)])
}

/// `max(0, 1 - Σ w_i f(a_i) + Σ w_i f(n_i))`, each bag with its own weights.
pub fn attention_hinge_loss<T: Real>(pos_scores: &[T], pos_weights: &[T], neg_scores: &[T], neg_weights: &[T]) -> T {
    hinge(weighted_sum(pos_scores, pos_weights), weighted_sum(neg_scores, neg_weights))
}

/// Ranking loss plus `λ₁ Σ w_i f(a_i)` over the positive bag. In max mode
/// the sparsity term uses uniform weights `1/m`.
pub fn total_loss<T: Real>(pos: BagOutputs<'_, T>, neg: BagOutputs<'_, T>, lambda1: T, mode: LossMode) -> T {
    total_loss_grad(pos, neg, lambda1, mode).loss
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairGrad<T> {
    pub loss: T,
    pub pos_scores: Vec<T>,
    pub pos_weights: Vec<T>,
    pub neg_scores: Vec<T>,
    pub neg_weights: Vec<T>,
}

/// [`total_loss`] and its derivatives. At the hinge kink the zero branch is
/// taken; ties for the maximum go to the first index.
pub fn total_loss_grad<T: Real>(pos: BagOutputs<'_, T>, neg: BagOutputs<'_, T>, lambda1: T, mode: LossMode) -> PairGrad<T> {
    let (mp, mn) = (pos.scores.len(), neg.scores.len());
    let mut g = PairGrad {
        loss: T::zero(),
        pos_scores: vec![T::zero(); mp],
        pos_weights: vec![T::zero(); mp],
        neg_scores: vec![T::zero(); mn],
        neg_weights: vec![T::zero(); mn],
    };
    match mode {
        LossMode::Max => {
            let (ip, in_) = (argmax(pos.scores), argmax(neg.scores));
            let h = hinge(pos.scores[ip], neg.scores[in_]);
            let uniform = T::one() / T::from_usize(mp).unwrap_or_else(T::one);
            let sparsity: T = pos.scores.iter().copied().sum::<T>() * uniform;
            g.loss = h + lambda1 * sparsity;
            for v in &mut g.pos_scores {
                *v = lambda1 * uniform;
            }
            if h > T::zero() {
                g.pos_scores[ip] -= T::one();
                g.neg_scores[in_] += T::one();
            }
        }
        LossMode::Attention => {
            let sp = weighted_sum(pos.scores, pos.weights);
            let sn = weighted_sum(neg.scores, neg.weights);
            let h = hinge(sp, sn);
            g.loss = h + lambda1 * sp;
            let active = if h > T::zero() { T::one() } else { T::zero() };
            let d_sp = lambda1 - active;
            let d_sn = active;
            for i in 0..mp {
                g.pos_scores[i] = d_sp * pos.weights[i];
                g.pos_weights[i] = d_sp * pos.scores[i];
            }
            for i in 0..mn {
                g.neg_scores[i] = d_sn * neg.weights[i];
                g.neg_weights[i] = d_sn * neg.scores[i];
            }
        }
    }
    g
}
