use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::files::{frame_level, TruthEntry, VideoScores};
use super::report::NamedCurve;
use super::roc::{roc_auc, RocCurve};
use crate::error::{Error, Result};
use crate::mil::{l2_normalize, train_mil, Bag, MilConfig, MilModel};
use crate::motiondata::VideoLabel;
use crate::nncore::Tensor;

/// Dropout-free segment scores for every bag.
pub fn score_videos(model: &MilModel, bags: &[Bag]) -> Result<Vec<VideoScores>> {
    bags.iter()
        .map(|b| Ok(VideoScores { video_id: b.video_id.clone(), segments: model.score_segments(b)? }))
        .collect()
}

pub fn evaluate_model(model: &MilModel, bags: &[Bag], truth: &[TruthEntry]) -> Result<RocCurve> {
    let scores = score_videos(model, bags)?;
    let (s, l) = frame_level(&scores, truth)?;
    roc_auc(&s, &l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub auc: f64,
    /// AUC minus the first row's AUC.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub curves: Vec<NamedCurve>,
}

impl Comparison {
    /// Tab-separated `name auc delta` table with a header line.
    pub fn table(&self) -> String {
        let mut s = String::from("name\tauc\tdelta\n");
        for r in &self.rows {
            s.push_str(&format!("{}\t{}\t{}\n", r.name, r.auc, r.delta));
        }
        s
    }
}

/// Trains one model per named config on the same bags and evaluates each
/// on the same test set.
pub fn compare_modes(train: &[Bag], test: &[Bag], truth: &[TruthEntry], configs: &[(String, MilConfig)]) -> Result<Comparison> {
    if configs.is_empty() {
        return Err(Error::InvalidInput("compare_modes: no configs".into()));
    }
    let mut rows: Vec<ComparisonRow> = Vec::new();
    let mut curves = Vec::new();
    for (name, config) in configs {
        let trained = train_mil(train, config)?;
        let model = MilModel { config: config.clone(), params: trained.params };
        let curve = evaluate_model(&model, test, truth)?;
        let delta = rows.first().map_or(0.0, |r| curve.auc - r.auc);
        rows.push(ComparisonRow { name: name.clone(), auc: curve.auc, delta });
        curves.push(NamedCurve { name: name.clone(), curve });
    }
    Ok(Comparison { rows, curves })
}

/// Feature dimension of [`planted_scenario`] bags.
pub const PLANTED_DIM: usize = 16;
/// Frames per segment in [`planted_scenario`] videos.
pub const PLANTED_FRAMES_PER_SEGMENT: usize = 4;

/// Constructed bags where each anomalous video holds two disjoint anomaly
/// intervals with different signatures: a strong one along feature 0 and
/// a weaker one along feature 1. A loss that only looks at the top segment
/// of a bag rarely sees the weaker kind.
#[derive(Clone, Debug)]
pub struct PlantedScenario {
    pub train: Vec<Bag>,
    /// Per training bag, which segments are anomalous.
    pub train_masks: Vec<Vec<bool>>,
    pub test: Vec<Bag>,
    pub truth: Vec<TruthEntry>,
}

pub fn planted_scenario(seed: u64, per_side: usize, segments: usize) -> PlantedScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make = |prefix: &str, rng: &mut ChaCha8Rng| {
        let mut bags = Vec::new();
        let mut masks = Vec::new();
        let mut truth = Vec::new();
        for k in 0..2 * per_side {
            let label = if k < per_side { VideoLabel::Anomalous } else { VideoLabel::Normal };
            let mut kind = vec![0u8; segments];
            if label.is_anomalous() {
                let half = segments / 2;
                let len_a = rng.random_range(2..=(half / 3).max(2));
                let len_b = rng.random_range(2..=(half / 3).max(2));
                let a = rng.random_range(0..half - len_a);
                let b = half + rng.random_range(0..half - len_b);
                let (ka, kb) = if rng.random::<bool>() { (1, 2) } else { (2, 1) };
                kind[a..a + len_a].fill(ka);
                kind[b..b + len_b].fill(kb);
            }
            let mut data = Vec::with_capacity(segments * PLANTED_DIM);
            for &kd in &kind {
                let mut row: Vec<f32> = (0..PLANTED_DIM).map(|_| rng.random_range(0.0..0.5)).collect();
                row[PLANTED_DIM - 1] = 1.0;
                match kd {
                    1 => row[0] += 1.2,
                    2 => row[1] += 0.6,
                    _ => {}
                }
                l2_normalize(&mut row);
                data.extend(row);
            }
            let id = format!("{prefix}{k:03}");
            let features = Tensor::from_vec(&[segments, PLANTED_DIM], data).expect("sized above");
            bags.push(Bag::new(id.clone(), label, features).expect("non-empty"));
            let mask: Vec<bool> = kind.iter().map(|&k| k != 0).collect();
            let mut intervals = Vec::new();
            let mut s = 0;
            while s < segments {
                if mask[s] {
                    let e = (s..segments).find(|&e| !mask[e]).unwrap_or(segments);
                    intervals.push((s * PLANTED_FRAMES_PER_SEGMENT, e * PLANTED_FRAMES_PER_SEGMENT));
                    s = e;
                } else {
                    s += 1;
                }
            }
            truth.push(TruthEntry { video_id: id, frames: segments * PLANTED_FRAMES_PER_SEGMENT, intervals });
            masks.push(mask);
        }
        (bags, masks, truth)
    };
    let (train, train_masks, _) = make("train", &mut rng);
    let (test, _, truth) = make("test", &mut rng);
    PlantedScenario { train, train_masks, test, truth }
}
