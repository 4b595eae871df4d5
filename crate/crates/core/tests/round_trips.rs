use std::path::Path;

use motionmil::eval::{format_roc_text, format_scores, parse_roc_text, parse_scores, roc_auc, VideoScores};
use motionmil::mil::Bag;
use motionmil::motiondata::{flow_from_bytes, flow_to_bytes, FlowStack, VideoLabel};
use motionmil::nncore::{Checkpoint, LayerParams, Tensor};
use motionmil::tan::{feature_from_bytes, feature_to_bytes, MotionFeature};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f32> {
    prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn id() -> impl Strategy<Value = String> {
    "[a-z0-9_-]{1,12}"
}

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f32>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(finite(), n).prop_map(move |v| Tensor::from_vec(&shape, v).unwrap())
}

const P: &str = "prop.bin";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_files(video in id(), clip in 0usize..1000, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let mut s = seed;
        let t = Tensor::from_fn(&[30, h, w], |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f32::from_bits((s >> 33) as u32 & 0x7f7f_ffff) * if s & 1 == 0 { 1.0 } else { -1.0 }
        });
        let stack = FlowStack::new(video, clip, t).unwrap();
        let back = flow_from_bytes(Path::new(P), &flow_to_bytes(&stack).unwrap()).unwrap();
        prop_assert_eq!(&back.video_id, &stack.video_id);
        prop_assert_eq!(back.clip_index, stack.clip_index);
        prop_assert_eq!(back.tensor.shape(), stack.tensor.shape());
        prop_assert_eq!(bits(back.tensor.data()), bits(stack.tensor.data()));
    }

    #[test]
    fn feature_files(clip in id(), values in prop::collection::vec(finite(), 1..300)) {
        let f = MotionFeature { clip_id: format!("{clip}#3"), values };
        let back = feature_from_bytes(Path::new(P), &feature_to_bytes(&f).unwrap()).unwrap();
        prop_assert_eq!(&back.clip_id, &f.clip_id);
        prop_assert_eq!(bits(&back.values), bits(&f.values));
    }

    #[test]
    fn checkpoints(
        names in prop::collection::vec(id(), 1..4),
        w in tensor(vec![3, 4]),
        b in tensor(vec![3]),
        acc in prop::collection::vec(0.0f32..1e6, 15),
    ) {
        let mut ck = Checkpoint::default();
        for (k, name) in names.iter().enumerate() {
            let p = LayerParams::with_accumulators(
                w.clone(),
                b.clone(),
                Tensor::from_vec(&[3, 4], acc[..12].to_vec()).unwrap(),
                Tensor::from_vec(&[3], acc[12..].to_vec()).unwrap(),
            )
            .unwrap();
            ck.push(format!("{name}/{k}"), p);
        }
        let back = Checkpoint::from_bytes(Path::new(P), &ck.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.layers.len(), ck.layers.len());
        for ((na, pa), (nb, pb)) in ck.layers.iter().zip(&back.layers) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(bits(pa.weight.data()), bits(pb.weight.data()));
            prop_assert_eq!(bits(pa.bias.data()), bits(pb.bias.data()));
            prop_assert_eq!(bits(pa.weight_acc().data()), bits(pb.weight_acc().data()));
            prop_assert_eq!(bits(pa.bias_acc().data()), bits(pb.bias_acc().data()));
        }
    }

    #[test]
    fn roc_text(scores in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 2..60), flips in any::<u64>()) {
        let labels: Vec<bool> = (0..scores.len()).map(|i| i == 0 || (i > 1 && flips >> (i % 64) & 1 == 1)).collect();
        let curve = roc_auc(&scores, &labels).unwrap();
        let back = parse_roc_text(Path::new("roc.csv"), &format_roc_text(&curve)).unwrap();
        prop_assert_eq!(back.points.len(), curve.points.len());
        for (a, b) in back.points.iter().zip(&curve.points) {
            prop_assert_eq!((a.0.to_bits(), a.1.to_bits()), (b.0.to_bits(), b.1.to_bits()));
        }
        prop_assert_eq!(back.auc.to_bits(), curve.auc.to_bits());
    }

    #[test]
    fn bags(video in id(), m in 1usize..40, d in 1usize..20, positive in any::<bool>(), seed in any::<u32>()) {
        let features = Tensor::from_fn(&[m, d], |i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / 7.0);
        let label = if positive { VideoLabel::Anomalous } else { VideoLabel::Normal };
        let bag = Bag::new(video, label, features).unwrap();
        let back = Bag::from_bytes(Path::new(P), &bag.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, bag);
    }

    #[test]
    fn score_files(rows in prop::collection::vec((id(), prop::collection::vec(0.0f32..=1.0, 1..40)), 1..8)) {
        let scores: Vec<VideoScores> = rows.into_iter().map(|(video_id, segments)| VideoScores { video_id, segments }).collect();
        let back = parse_scores(Path::new("scores.tsv"), &format_scores(&scores)).unwrap();
        prop_assert_eq!(back, scores);
    }
}
