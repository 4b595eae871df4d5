use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape("image", &[height, width], &[pixels.len()]));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage { width, height, pixels: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Photometric negative; motion content is unchanged.
    pub fn inverted(&self) -> Self {
        GrayImage { pixels: self.pixels.iter().map(|&p| 255 - p).collect(), ..self.clone() }
    }
}

/// Two-channel displacement field `[2, H, W]`: channel 0 horizontal, channel 1
/// vertical, in pixels per frame.
pub type FlowMap = Tensor<f32>;

/// Anything that turns a pair of frames into a flow map.
pub trait FlowEstimator {
    fn estimate(&self, prev: &GrayImage, next: &GrayImage) -> Result<FlowMap>;
}

/// Exhaustive block matching under the sum of absolute differences.
///
/// Each `block x block` tile of `prev` is matched against every displacement
/// within `±search` in `next` that keeps the tile inside the image. Ties go
/// to the smallest displacement magnitude, then to the lexicographically
/// smallest `(dy, dx)`. The winning integer displacement is written to every
/// pixel of the tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockMatcher {
    pub block: usize,
    pub search: usize,
}

impl Default for BlockMatcher {
    fn default() -> Self {
        BlockMatcher { block: 8, search: 6 }
    }
}

impl BlockMatcher {
    fn candidates(&self) -> Vec<(isize, isize)> {
        let r = self.search as isize;
        let mut c: Vec<(isize, isize)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dy, dx))).collect();
        c.sort_by_key(|&(dy, dx)| (dy * dy + dx * dx, dy, dx));
        c
    }
}

impl FlowEstimator for BlockMatcher {
    fn estimate(&self, prev: &GrayImage, next: &GrayImage) -> Result<FlowMap> {
        block_matching_flow(prev, next, self.block, self.search)
    }
}

pub fn block_matching_flow(prev: &GrayImage, next: &GrayImage, block: usize, search: usize) -> Result<FlowMap> {
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(Error::shape("block_matching_flow", &[prev.height, prev.width], &[next.height, next.width]));
    }
    if block == 0 {
        return Err(Error::InvalidInput("block size must be positive".into()));
    }
    let (w, h) = (prev.width, prev.height);
    let mut flow = Tensor::zeros(&[2, h, w]);
    let candidates = BlockMatcher { block, search }.candidates();
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let bh = block.min(h - by);
            let bw = block.min(w - bx);
            let mut best: Option<(u32, isize, isize)> = None;
            for &(dy, dx) in &candidates {
                let (ty, tx) = (by as isize + dy, bx as isize + dx);
                if ty < 0 || tx < 0 || ty as usize + bh > h || tx as usize + bw > w {
                    continue;
                }
                let bound = best.map_or(u32::MAX, |b| b.0);
                let mut sad = 0u32;
                for row in 0..bh {
                    let a = &prev.pixels[(by + row) * w + bx..][..bw];
                    let b = &next.pixels[(ty as usize + row) * w + tx as usize..][..bw];
                    sad += a.iter().zip(b).map(|(&p, &q)| p.abs_diff(q) as u32).sum::<u32>();
                    if sad >= bound {
                        break;
                    }
                }
                // candidates are pre-sorted by tie-break order, so only a
                // strict improvement replaces the incumbent
                if sad < bound {
                    best = Some((sad, dy, dx));
                }
            }
            let (_, dy, dx) = best.unwrap_or((0, 0, 0));
            let data = flow.data_mut();
            for row in by..by + bh {
                data[row * w + bx..row * w + bx + bw].fill(dx as f32);
                data[(h + row) * w + bx..(h + row) * w + bx + bw].fill(dy as f32);
            }
        }
    }
    Ok(flow)
}

pub const CLIP_FRAMES: usize = 16;
pub const STACK_CHANNELS: usize = 2 * (CLIP_FRAMES - 1);
/// Displacements are clipped to this many pixels before normalization.
pub const FLOW_CLIP: f32 = 16.0;

/// The motion content of one 16-frame clip: 15 flow maps stacked into 30
/// channels, horizontal then vertical per adjacent frame pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowStack {
    pub video_id: String,
    pub clip_index: usize,
    pub tensor: Tensor<f32>,
}

impl FlowStack {
    pub fn new(video_id: impl Into<String>, clip_index: usize, tensor: Tensor<f32>) -> Result<Self> {
        match *tensor.shape() {
            [STACK_CHANNELS, h, w] if h > 0 && w > 0 => {}
            _ => return Err(Error::shape("flow stack", &[STACK_CHANNELS, 0, 0], tensor.shape())),
        }
        if !tensor.is_finite() {
            return Err(Error::InvalidInput("flow stack contains non-finite displacement".into()));
        }
        Ok(FlowStack { video_id: video_id.into(), clip_index, tensor })
    }

    /// `<video id>#<clip index>`.
    pub fn clip_id(&self) -> String {
        clip_id(&self.video_id, self.clip_index)
    }

    /// Frames covered by this clip within its video.
    pub fn frame_range(&self) -> std::ops::Range<usize> {
        self.clip_index * CLIP_FRAMES..(self.clip_index + 1) * CLIP_FRAMES
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    /// Autoencoder input: displacements clipped to ±16 px and scaled into [-1, 1].
    pub fn normalized(&self) -> Tensor<f32> {
        normalize_flow(&self.tensor)
    }
}

pub fn normalize_flow(t: &Tensor<f32>) -> Tensor<f32> {
    let mut n = t.clone();
    for v in n.data_mut() {
        *v = v.clamp(-FLOW_CLIP, FLOW_CLIP) / FLOW_CLIP;
    }
    n
}

pub fn clip_id(video_id: &str, clip_index: usize) -> String {
    format!("{video_id}#{clip_index}")
}

/// Splits `<video id>#<clip index>` at the last `#`.
pub fn parse_clip_id(id: &str) -> Option<(&str, usize)> {
    let (video, idx) = id.rsplit_once('#')?;
    Some((video, idx.parse().ok()?))
}

/// Stacks the 15 adjacent-pair flow maps of exactly 16 frames into a
/// `[30, H, W]` tensor.
pub fn build_flow_stack(frames: &[GrayImage], estimator: &impl FlowEstimator) -> Result<Tensor<f32>> {
    if frames.len() != CLIP_FRAMES {
        return Err(Error::InvalidInput(format!(
            "flow stack needs exactly {CLIP_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    if let Some(f) = frames.iter().find(|f| (f.width, f.height) != (w, h)) {
        return Err(Error::shape("build_flow_stack", &[h, w], &[f.height, f.width]));
    }
    let plane = 2 * h * w;
    let mut stack = Tensor::zeros(&[STACK_CHANNELS, h, w]);
    for (i, pair) in frames.windows(2).enumerate() {
        let flow = estimator.estimate(&pair[0], &pair[1])?;
        stack.data_mut()[i * plane..(i + 1) * plane].copy_from_slice(flow.data());
    }
    Ok(stack)
}

/// Flow stacks of every non-overlapping 16-frame clip of a video, in order.
pub fn video_flow_stacks(video_id: &str, frames: &[GrayImage], estimator: &impl FlowEstimator) -> Result<Vec<FlowStack>> {
    frames
        .chunks_exact(CLIP_FRAMES)
        .enumerate()
        .map(|(k, clip)| FlowStack::new(video_id, k, build_flow_stack(clip, estimator)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random())
    }

    fn shifted(img: &GrayImage, dx: isize, dy: isize) -> GrayImage {
        let (w, h) = (img.width() as isize, img.height() as isize);
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            img.get(((x as isize - dx).rem_euclid(w)) as usize, ((y as isize - dy).rem_euclid(h)) as usize)
        })
    }

    #[test]
    fn identical_images_give_zero_flow() {
        let a = noise(32, 32, 1);
        let f = block_matching_flow(&a, &a, 8, 4).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_images_tie_break_to_zero() {
        let a = GrayImage::filled(24, 24, 77);
        let f = block_matching_flow(&a, &a.clone(), 8, 4).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_shift_recovered_on_interior_blocks() {
        let a = noise(40, 40, 2);
        let b = shifted(&a, 3, 0);
        let f = block_matching_flow(&a, &b, 8, 4).unwrap();
        // interior blocks: those whose match stays inside the image
        for y in 0..40 {
            for x in 0..32 {
                assert_eq!(f.data()[y * 40 + x], 3.0, "dx at ({x},{y})");
                assert_eq!(f.data()[1600 + y * 40 + x], 0.0, "dy at ({x},{y})");
            }
        }
    }

    #[test]
    fn flow_stack_rejects_wrong_frame_count_and_sizes() {
        let frames: Vec<_> = (0..15).map(|_| GrayImage::filled(8, 8, 0)).collect();
        assert!(build_flow_stack(&frames, &BlockMatcher::default()).is_err());
        let mut frames: Vec<_> = (0..16).map(|_| GrayImage::filled(8, 8, 0)).collect();
        frames[7] = GrayImage::filled(8, 9, 0);
        assert!(matches!(build_flow_stack(&frames, &BlockMatcher::default()), Err(Error::Shape { .. })));
    }

    #[test]
    fn static_clip_gives_zero_stack() {
        let img = noise(16, 16, 3);
        let frames = vec![img; 16];
        let s = build_flow_stack(&frames, &BlockMatcher::default()).unwrap();
        assert_eq!(s.shape(), &[30, 16, 16]);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_order_is_horizontal_then_vertical_per_pair() {
        let base = noise(48, 48, 4);
        let frames: Vec<_> = (0..16).map(|t| shifted(&base, 0, if t < 8 { 0 } else { 2 * (t as isize - 7) })).collect();
        let s = build_flow_stack(&frames, &BlockMatcher { block: 8, search: 4 }).unwrap();
        let plane = 48 * 48;
        let at = |c: usize| s.data()[c * plane + 20 * 48 + 20];
        for pair in 0..15 {
            let expect_dy = if pair < 7 { 0.0 } else { 2.0 };
            assert_eq!(at(2 * pair), 0.0);
            assert_eq!(at(2 * pair + 1), expect_dy, "pair {pair}");
        }
    }

    #[test]
    fn normalization_clips_and_scales() {
        let t = Tensor::from_vec(&[4], vec![-40.0f32, -8.0, 4.0, 16.0]).unwrap();
        assert_eq!(normalize_flow(&t).data(), &[-1.0, -0.5, 0.25, 1.0]);
    }

    #[test]
    fn clip_ids_round_trip() {
        assert_eq!(parse_clip_id(&clip_id("a#b", 12)), Some(("a#b", 12)));
        assert_eq!(parse_clip_id("nohash"), None);
    }
}
