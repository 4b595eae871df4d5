#![allow(dead_code)]

use std::path::Path;

use motionmil::motiondata::{generate_dataset, video_flow_stacks, BlockMatcher, FlowStack, SynthConfig};
use motionmil::pipeline::PipelineConfig;

/// A pipeline small enough to run every stage in a few seconds.
pub const TINY: &str = r#"
[motiondata]
train_normal = 3
train_anomalous = 3
test_normal = 2
test_anomalous = 2
frames = 48
height = 32
width = 32

[tan]
height = 32
width = 32
encoder_widths = [4, 8, 8]
bottleneck_channels = 16

[tan.schedule]
learning_rate = 0.005
iterations = 12
milestones = [6]
batch_size = 2

[mil]
segments = 8
regressor_widths = [16, 8, 1]
attention_widths = [8, 4, 1]
bags_per_side = 3

[mil.schedule]
learning_rate = 0.01
iterations = 20
milestones = [10]
batch_size = 6

[eval]
compare = ["max", "attention"]
"#;

pub fn tiny_config(out_dir: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::from_toml(TINY, None).expect("tiny config parses");
    c.out_dir = out_dir.to_path_buf();
    c
}

/// Flow stacks of `videos` short synthetic videos (two clips each).
pub fn synthetic_stacks(videos: usize, size: usize, seed: u64) -> Vec<FlowStack> {
    let cfg = SynthConfig {
        normal: videos / 2,
        anomalous: videos - videos / 2,
        frames: 32,
        height: size,
        width: size,
        seed,
        ..Default::default()
    };
    generate_dataset(&cfg)
        .expect("valid synth config")
        .iter()
        .flat_map(|v| video_flow_stacks(&v.id, &v.frames, &BlockMatcher::default()).expect("flow"))
        .collect()
}
