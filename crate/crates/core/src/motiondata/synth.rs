//! Seeded generator of weakly labelled synthetic surveillance-like videos.
//!
//! Normal videos show a smooth random texture drifting slowly in one slowly
//! rotating direction, plus a couple of slow blobs. Anomalous videos embed
//! one or more frame intervals of a different motion regime. Only the
//! video-level label is meant for training; the per-frame mask is exposed
//! through [`SyntheticVideo::ground_truth`] for evaluation.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::flow::GrayImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    /// Global motion speeds up several-fold.
    SpeedBurst,
    /// Global motion flips direction every couple of frames.
    DirectionReversal,
    /// Many fast objects move in independent random directions.
    Scatter,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [AnomalyKind::SpeedBurst, AnomalyKind::DirectionReversal, AnomalyKind::Scatter];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoLabel {
    Normal,
    Anomalous,
}

impl VideoLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            VideoLabel::Normal => "normal",
            VideoLabel::Anomalous => "anomalous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(VideoLabel::Normal),
            "anomalous" => Some(VideoLabel::Anomalous),
            _ => None,
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == VideoLabel::Anomalous
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub normal: usize,
    pub anomalous: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub kinds: Vec<AnomalyKind>,
    /// Upper bound on anomaly intervals per anomalous video.
    pub max_intervals: usize,
    /// Prefix of generated video ids.
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            normal: 10,
            anomalous: 10,
            frames: 128,
            height: 64,
            width: 64,
            kinds: AnomalyKind::ALL.to_vec(),
            max_intervals: 2,
            id_prefix: "vid".into(),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.normal + self.anomalous == 0 {
            errs.push("dataset must contain at least one video".to_string());
        }
        if self.frames < 16 {
            errs.push(format!("frame count {} below 16", self.frames));
        }
        if self.anomalous > 0 && self.frames < 32 {
            errs.push(format!("anomalous videos need at least 32 frames, got {}", self.frames));
        }
        if self.height < 8 || self.width < 8 {
            errs.push(format!("frame size {}x{} below 8x8", self.width, self.height));
        }
        if self.anomalous > 0 && self.kinds.is_empty() {
            errs.push("no anomaly kinds configured".to_string());
        }
        if self.max_intervals == 0 {
            errs.push("max_intervals must be at least 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Frame-level anomaly annotation for one video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub video_id: String,
    pub mask: Vec<bool>,
}

impl GroundTruth {
    /// Maximal runs of anomalous frames as half-open ranges.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (t, &a) in self.mask.iter().chain(std::iter::once(&false)).enumerate() {
            match (a, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    out.push((s, t));
                    start = None;
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub id: String,
    pub label: VideoLabel,
    pub frames: Vec<GrayImage>,
    mask: Vec<bool>,
}

impl SyntheticVideo {
    pub fn new(id: String, label: VideoLabel, frames: Vec<GrayImage>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != frames.len() {
            return Err(Error::shape("video mask", &[frames.len()], &[mask.len()]));
        }
        Ok(SyntheticVideo { id, label, frames, mask })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Per-frame annotation. Evaluation-only: nothing on the training path
    /// takes a [`GroundTruth`].
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth { video_id: self.id.clone(), mask: self.mask.clone() }
    }

    /// Same motion, photometrically inverted frames.
    pub fn inverted(&self) -> Self {
        SyntheticVideo { frames: self.frames.iter().map(GrayImage::inverted).collect(), ..self.clone() }
    }
}

/// Generates `config.normal` normal videos followed by `config.anomalous`
/// anomalous ones. A pure function of the config.
pub fn generate_dataset(config: &SynthConfig) -> Result<Vec<SyntheticVideo>> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let labels = std::iter::repeat_n(VideoLabel::Normal, config.normal)
        .chain(std::iter::repeat_n(VideoLabel::Anomalous, config.anomalous));
    labels
        .enumerate()
        .map(|(i, label)| {
            let seed = master.random::<u64>();
            generate_video(format!("{}{:04}", config.id_prefix, i), label, config, seed)
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Blob {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    radius: f64,
    amplitude: f64,
}

/// Per-frame motion regime, `None` for normal frames.
fn plan_intervals(frames: usize, max_intervals: usize, kinds: &[AnomalyKind], rng: &mut impl Rng) -> Vec<Option<AnomalyKind>> {
    let mut plan = vec![None; frames];
    let total = rng.random_range(16..=frames / 2);
    let max_k = max_intervals.min(total / 8).max(1);
    let k = rng.random_range(1..=max_k);
    // lengths: each at least 8 frames, summing to `total`
    let mut lengths = vec![8usize; k];
    for _ in 0..total - 8 * k {
        lengths[rng.random_range(0..k)] += 1;
    }
    // gaps: k + 1 of them, interior ones at least 1, summing to frames - total
    let free = frames - total;
    let mut gaps = vec![0usize; k + 1];
    for g in gaps.iter_mut().take(k).skip(1) {
        *g = 1;
    }
    let interior = k - 1;
    for _ in 0..free - interior {
        gaps[rng.random_range(0..=k)] += 1;
    }
    let mut t = 0;
    for (i, len) in lengths.iter().enumerate() {
        t += gaps[i];
        let kind = kinds[rng.random_range(0..kinds.len())];
        plan[t..t + len].iter_mut().for_each(|p| *p = Some(kind));
        t += len;
    }
    plan
}

/// Smooth toroidal texture: white noise box-blurred a few times, stretched
/// to a fixed contrast range.
fn texture(w: usize, h: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut t: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
    for _ in 0..3 {
        let mut next = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).rem_euclid(h as i64) as usize;
                        let xx = (x as i64 + dx).rem_euclid(w as i64) as usize;
                        s += t[yy * w + xx];
                    }
                }
                next[y * w + x] = s / 9.0;
            }
        }
        t = next;
    }
    let (lo, hi) = t.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-12);
    t.iter().map(|v| 40.0 + 170.0 * (v - lo) / span).collect()
}

fn sample_torus(tex: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.rem_euclid(w as f64);
    let y = y.rem_euclid(h as f64);
    let (x0, y0) = (x.floor() as usize % w, y.floor() as usize % h);
    let (x1, y1) = ((x0 + 1) % w, (y0 + 1) % h);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    let top = tex[y0 * w + x0] * (1.0 - fx) + tex[y0 * w + x1] * fx;
    let bottom = tex[y1 * w + x0] * (1.0 - fx) + tex[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

fn torus_delta(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    if d > period / 2.0 {
        d - period
    } else {
        d
    }
}

fn random_blob(w: usize, h: usize, max_speed: f64, rng: &mut impl Rng) -> Blob {
    let angle = rng.random_range(0.0..TAU);
    let speed = rng.random_range(0.3 * max_speed..max_speed);
    Blob {
        x: rng.random_range(0.0..w as f64),
        y: rng.random_range(0.0..h as f64),
        vx: speed * angle.cos(),
        vy: speed * angle.sin(),
        radius: rng.random_range(2.5..4.5),
        amplitude: if rng.random::<bool>() { 60.0 } else { -60.0 },
    }
}

fn render(tex: &[f64], w: usize, h: usize, ox: f64, oy: f64, blobs: &[Blob]) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| {
        let mut v = sample_torus(tex, w, h, x as f64 - ox, y as f64 - oy);
        for b in blobs {
            let dx = torus_delta(x as f64, b.x, w as f64);
            let dy = torus_delta(y as f64, b.y, h as f64);
            let r2 = (dx * dx + dy * dy) / (b.radius * b.radius);
            if r2 < 9.0 {
                v += b.amplitude * (-0.5 * r2).exp();
            }
        }
        v.round().clamp(0.0, 255.0) as u8
    })
}

pub fn generate_video(id: String, label: VideoLabel, config: &SynthConfig, seed: u64) -> Result<SyntheticVideo> {
    let (w, h, n) = (config.width, config.height, config.frames);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = texture(w, h, &mut rng);
    let plan = match label {
        VideoLabel::Normal => vec![None; n],
        VideoLabel::Anomalous => plan_intervals(n, config.max_intervals, &config.kinds, &mut rng),
    };

    let base_speed = rng.random_range(0.4..1.2);
    let mut heading = rng.random_range(0.0..TAU);
    let turn = rng.random_range(-0.02..0.02);
    let burst_speed = rng.random_range(3.5..5.5);
    let mut slow: Vec<Blob> = (0..2).map(|_| random_blob(w, h, 1.0, &mut rng)).collect();
    let mut fast: Vec<Blob> = (0..8).map(|_| random_blob(w, h, 5.0, &mut rng)).collect();
    for b in &mut fast {
        let s = (b.vx * b.vx + b.vy * b.vy).sqrt().max(1e-9);
        let target = rng.random_range(3.0..5.0);
        b.vx *= target / s;
        b.vy *= target / s;
    }

    let (mut ox, mut oy) = (0.0f64, 0.0f64);
    let mut frames = Vec::with_capacity(n);
    let mut reversal_phase = 0usize;
    for t in 0..n {
        if t > 0 {
            heading += turn;
            let (mut vx, mut vy) = (base_speed * heading.cos(), base_speed * heading.sin());
            match plan[t] {
                Some(AnomalyKind::SpeedBurst) => {
                    vx *= burst_speed / base_speed;
                    vy *= burst_speed / base_speed;
                }
                Some(AnomalyKind::DirectionReversal) => {
                    let sign = if (reversal_phase / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    reversal_phase += 1;
                    vx *= sign * 3.0 / base_speed;
                    vy *= sign * 3.0 / base_speed;
                }
                _ => {}
            }
            ox += vx;
            oy += vy;
            for b in slow.iter_mut().chain(fast.iter_mut()) {
                b.x = (b.x + b.vx).rem_euclid(w as f64);
                b.y = (b.y + b.vy).rem_euclid(h as f64);
            }
        }
        let mut blobs = slow.clone();
        if plan[t] == Some(AnomalyKind::Scatter) {
            blobs.extend_from_slice(&fast);
        }
        frames.push(render(&tex, w, h, ox, oy, &blobs));
    }
    let mask = plan.iter().map(Option::is_some).collect();
    SyntheticVideo::new(id, label, frames, mask)
}

/// Frames of a texture translating rigidly by a constant integer velocity.
pub fn translating_sequence(width: usize, height: usize, frames: usize, dx: isize, dy: isize, seed: u64) -> Vec<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = texture(width, height, &mut rng);
    (0..frames)
        .map(|t| render(&tex, width, height, (dx * t as isize) as f64, (dy * t as isize) as f64, &[]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { normal: 2, anomalous: 2, frames: 48, height: 24, width: 24, seed, ..Default::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(&small(7)).unwrap();
        let b = generate_dataset(&small(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&small(8)).unwrap());
    }

    #[test]
    fn normal_masks_empty_anomalous_masks_bounded() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = rng.random_range(32..200);
            let plan = plan_intervals(frames, 3, &AnomalyKind::ALL, &mut rng);
            let covered = plan.iter().filter(|p| p.is_some()).count();
            assert!(covered >= 16 && covered <= frames / 2, "seed {seed}: {covered}/{frames}");
        }
        let videos = generate_dataset(&small(3)).unwrap();
        for v in &videos {
            let gt = v.ground_truth();
            match v.label {
                VideoLabel::Normal => assert!(gt.mask.iter().all(|&m| !m)),
                VideoLabel::Anomalous => assert!(!gt.intervals().is_empty()),
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small(0);
        c.frames = 15;
        assert!(generate_dataset(&c).is_err());
        c.frames = 20;
        assert!(generate_dataset(&c).is_err());
        c.anomalous = 0;
        assert!(generate_dataset(&c).is_ok());
        c.normal = 0;
        assert!(generate_dataset(&c).is_err());
    }

    #[test]
    fn intervals_from_mask() {
        let gt = GroundTruth { video_id: "v".into(), mask: vec![false, true, true, false, true] };
        assert_eq!(gt.intervals(), vec![(1, 3), (4, 5)]);
    }
}
