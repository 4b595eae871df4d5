//! Bags, the anomaly-score regressor, the attention block and the hinge
//! ranking losses.
//!
//! The regressor maps each segment feature through FC-512 + ReLU, FC-32 and
//! FC-1 + sigmoid (dropout after the first two during training). The
//! attention block is FC-256 + tanh, FC-64 + tanh, FC-1, softmax over the
//! bag. Both read the same L2-normalized segment rows.

mod bag;
mod losses;
mod model;

pub use bag::{
    build_bag, format_bag_manifest, fuse_bags, fuse_features, l2_normalize, parse_bag_manifest, segment_clips, Bag,
    BagManifestEntry,
};
pub use losses::{attention_hinge_loss, max_hinge_loss, total_loss, total_loss_grad, BagOutputs, LossMode, PairGrad};
pub use model::{
    attention_weights, mil_backward, mil_forward, pair_batch_loss, score_segments, train_mil, AttentionNorm, MilConfig,
    MilModel, MilParams, MilPass, MilTraining, ATTENTION_NAMES, REGRESSOR_NAMES,
};
