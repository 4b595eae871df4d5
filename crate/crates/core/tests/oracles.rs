use motionmil::eval::{expand_scores, roc_auc};
use motionmil::mil::{attention_hinge_loss, max_hinge_loss, total_loss, BagOutputs, LossMode};
use motionmil::nncore::gradcheck::{central_difference, GradReport};
use motionmil::nncore::Tensor;
use motionmil::tan::{recon_loss, recon_loss_grad, tan_backward, tan_forward, TanConfig, TanParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..80);
    let levels = rng.random_range(2..12);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    // coarse levels make ties common
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

#[test]
fn auc_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..1000 {
        let (s, l) = random_case(&mut rng);
        let auc = roc_auc(&s, &l).unwrap().auc;
        let oracle = pair_count_auc(&s, &l);
        assert!((auc - oracle).abs() < 1e-9, "case {case}: {auc} vs {oracle}");
    }
}

#[test]
fn auc_under_negation_and_monotone_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..200 {
        let (s, l) = random_case(&mut rng);
        let auc = roc_auc(&s, &l).unwrap().auc;
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((roc_auc(&neg, &l).unwrap().auc - (1.0 - auc)).abs() < 1e-12);
        let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 0.5).collect();
        assert!((roc_auc(&warped, &l).unwrap().auc - auc).abs() < 1e-12);
    }
    assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap().auc, 1.0);
    assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap().auc, 0.5);
}

#[test]
fn roc_curve_is_monotone_from_origin_to_corner() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..100 {
        let (s, l) = random_case(&mut rng);
        let c = roc_auc(&s, &l).unwrap();
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
        assert!(c.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}

proptest! {
    #[test]
    fn expansion_matches_a_naive_loop(scores in prop::collection::vec(0.0f32..1.0, 1..40), frames in 1usize..400) {
        let m = scores.len();
        let mut naive = Vec::new();
        for j in 0..frames {
            let mut seg = 0;
            // the last segment whose first frame is at or before j
            while seg + 1 < m && (seg + 1) * frames <= j * m {
                seg += 1;
            }
            naive.push(scores[seg]);
        }
        prop_assert_eq!(expand_scores(&scores, frames).unwrap(), naive);
    }
}

#[test]
fn ranking_losses_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let m = rng.random_range(1..40);
        let pos: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let neg: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let wp: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let wn: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();

        let mut best_p = f64::MIN;
        let mut best_n = f64::MIN;
        let (mut ap, mut an) = (0.0, 0.0);
        for i in 0..m {
            best_p = best_p.max(pos[i]);
            best_n = best_n.max(neg[i]);
            ap += wp[i] * pos[i];
            an += wn[i] * neg[i];
        }
        let max_oracle = (1.0 - best_p + best_n).max(0.0);
        let att_oracle = (1.0 - ap + an).max(0.0);
        assert!((max_hinge_loss(&pos, &neg) - max_oracle).abs() < 1e-6);
        assert!((attention_hinge_loss(&pos, &wp, &neg, &wn) - att_oracle).abs() < 1e-6);

        let p = BagOutputs { scores: &pos, weights: &wp };
        let n = BagOutputs { scores: &neg, weights: &wn };
        assert_eq!(total_loss(p, n, 0.0, LossMode::Attention), attention_hinge_loss(&pos, &wp, &neg, &wn));
        assert_eq!(total_loss(p, n, 0.0, LossMode::Max), max_hinge_loss(&pos, &neg));
        let lambda = 8e-5;
        assert!((total_loss(p, n, lambda, LossMode::Attention) - (att_oracle + lambda * ap)).abs() < 1e-6);
    }
}

#[test]
fn hinge_is_zero_exactly_when_the_margin_holds() {
    for (p, n) in [(1.0, 0.0), (0.75, -0.25), (0.9, 0.0), (0.5, 0.4)] {
        let loss = max_hinge_loss(&[p], &[n]);
        assert_eq!(loss == 0.0, p - n >= 1.0, "{p} {n}");
    }
}

#[test]
fn autoencoder_gradient_matches_finite_differences_on_fifty_parameters() {
    let config = TanConfig { height: 8, width: 8, encoder_widths: [3, 4, 5], bottleneck_channels: 6, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut params = TanParams::<f32>::init(&config, 2).cast::<f64>();
    for layer in &mut params.layers {
        for b in layer.bias.data_mut() {
            *b = rng.random_range(0.05..0.3);
        }
    }
    let x = Tensor::from_fn(&[2, 30, 8, 8], |_| rng.random_range(-1.0..1.0));
    let loss = |p: &TanParams<f64>| recon_loss(&x, tan_forward(&config, p, &x).unwrap().reconstruction()).unwrap();
    let acts = tan_forward(&config, &params, &x).unwrap();
    let grads = tan_backward(&config, &params, &acts, &recon_loss_grad(&x, acts.reconstruction())).unwrap();

    let mut report = GradReport::default();
    let total = params.param_count();
    let mut probed = 0;
    while probed < 50 {
        let flat = rng.random_range(0..total);
        let (l, i) = params.locate(flat);
        let x0 = params.layers[l].get(i);
        let numeric = central_difference(x0, |v| {
            let mut p = params.clone();
            p.layers[l].set(i, v);
            loss(&p)
        });
        let analytic = grads[l].get(i);
        // an L1 kink inside the difference window makes the numeric slope meaningless
        let kinked = {
            let mut p = params.clone();
            p.layers[l].set(i, x0 + 1e-5);
            let up = loss(&p);
            p.layers[l].set(i, x0 - 1e-5);
            let down = loss(&p);
            ((up - down) / 2e-5 - numeric).abs() > 1e-3 * numeric.abs().max(1e-6)
        };
        if kinked {
            continue;
        }
        report.record(|| format!("layer {l} param {i}"), analytic, numeric);
        probed += 1;
    }
    assert!(report.passes(), "{report:?}");
}
