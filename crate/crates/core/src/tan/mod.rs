//! Flow autoencoder and the motion feature pooled from its bottleneck.

mod features;
mod model;
mod train;

pub use features::{feature_from_bytes, feature_to_bytes, read_feature_file, write_feature_file};
pub use model::{
    recon_loss, recon_loss_grad, tan_backward, tan_forward, tan_forward_layers, MotionFeature, TanActivations,
    TanConfig, TanModel, TanParams, LAYER_NAMES,
};
pub use train::{batch_tensor, dataset_loss, train_step, train_tan, zero_predictor_loss, TanTraining};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motiondata::FlowStack;
    use crate::nncore::{global_average_pool, Tensor};

    fn small_config() -> TanConfig {
        let mut c = TanConfig { height: 16, width: 16, encoder_widths: [4, 6, 8], bottleneck_channels: 16, ..Default::default() };
        c.schedule.iterations = 10;
        c.schedule.milestones = vec![5];
        c.schedule.batch_size = 2;
        c
    }

    fn stack(seed: u32) -> FlowStack {
        FlowStack::new("v", seed as usize, Tensor::from_fn(&[30, 16, 16], |i| (((i as u32).wrapping_mul(2654435761) ^ seed) % 33) as f32 - 16.0)).unwrap()
    }

    #[test]
    fn shapes_follow_stride_arithmetic() {
        let mut cfg = small_config();
        cfg.height = 64;
        cfg.width = 64;
        let m = TanModel::new(cfg, 1).unwrap();
        let s = FlowStack::new("v", 0, Tensor::zeros(&[30, 64, 64])).unwrap();
        let (recon, bottleneck) = m.forward(&s).unwrap();
        assert_eq!(recon.shape(), &[30, 64, 64]);
        assert_eq!(bottleneck.shape(), &[16, 8, 8]);
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let m = TanModel::new(small_config(), 1).unwrap();
        let s = FlowStack::new("v", 0, Tensor::zeros(&[30, 24, 24])).unwrap();
        assert!(matches!(m.forward(&s), Err(crate::Error::Shape { .. })));
    }

    #[test]
    fn recon_loss_values() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        assert_eq!(recon_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(recon_loss(&a, &Tensor::full(&[2, 3], 0.5)).unwrap(), 0.5);
        assert!(recon_loss(&a, &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn feature_equals_pooled_bottleneck_bitwise() {
        let m = TanModel::new(small_config(), 3).unwrap();
        let s = stack(5);
        let (_, bottleneck) = m.forward(&s).unwrap();
        let f = m.extract_feature(&s).unwrap();
        assert_eq!(f.values, global_average_pool(&bottleneck).unwrap().into_vec());
        assert_eq!(f.values.len(), 16);
        assert_eq!(f.clip_id, "v#5");
    }

    #[test]
    fn feature_ignores_decoder_weights() {
        let mut m = TanModel::new(small_config(), 3).unwrap();
        let s = stack(9);
        let before = m.extract_feature(&s).unwrap();
        for l in 4..7 {
            m.params.layers[l].weight.scale(-3.0);
            m.params.layers[l].bias.fill(0.7);
        }
        assert_eq!(m.extract_feature(&s).unwrap(), before);
    }

    #[test]
    fn constant_bottleneck_gives_constant_feature() {
        let mut m = TanModel::new(small_config(), 3).unwrap();
        m.params.layers[3].weight.fill(0.0);
        m.params.layers[3].bias.fill(0.25);
        let f = m.extract_feature(&stack(1)).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_at_milestones() {
        let stacks: Vec<_> = (0..3).map(stack).collect();
        let mut seen = Vec::new();
        let a = train_tan(&stacks, &small_config(), |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        let b = train_tan(&stacks, &small_config(), |_, _| Ok(())).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.losses.len(), 10);
        assert_eq!(seen, vec![5, 9]);
        assert!(train_tan(&[], &small_config(), |_, _| Ok(())).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = TanModel::new(small_config(), 4).unwrap();
        let back = TanParams::from_checkpoint(&m.config, &m.params.to_checkpoint()).unwrap();
        assert_eq!(back, m.params);
        let mut other = small_config();
        other.bottleneck_channels = 12;
        assert!(TanParams::from_checkpoint(&other, &m.params.to_checkpoint()).is_err());
    }

    #[test]
    fn feature_file_round_trip() {
        let f = MotionFeature { clip_id: "vid0001#2".into(), values: vec![0.5, -1.25, 3.0] };
        let back = feature_from_bytes(std::path::Path::new("x"), &feature_to_bytes(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
