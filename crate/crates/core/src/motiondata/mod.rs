//! Synthetic weakly labelled videos, block-matching optical flow and
//! 30-channel flow stacks.

mod files;
mod flow;
mod synth;

pub use files::{
    flow_from_bytes, flow_to_bytes, format_manifest, format_truth, parse_manifest, read_flow_file, read_manifest,
    read_video_file, video_from_bytes, video_to_bytes, write_flow_file, write_truth_file, write_video_file,
    ExternalFeatureFile, ManifestEntry, StoredVideo,
};
pub use flow::{
    block_matching_flow, build_flow_stack, clip_id, normalize_flow, parse_clip_id, video_flow_stacks, BlockMatcher,
    FlowEstimator, FlowMap, FlowStack, GrayImage, CLIP_FRAMES, FLOW_CLIP, STACK_CHANNELS,
};
pub use synth::{
    generate_dataset, generate_video, translating_sequence, AnomalyKind, GroundTruth, SynthConfig, SyntheticVideo,
    VideoLabel,
};
