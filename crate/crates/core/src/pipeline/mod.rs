//! Configuration, stages and run manifests for the end-to-end pipeline.

mod config;
mod manifest;
mod stages;

pub use config::{stage_seed, validate_config, DataConfig, EvalConfig, PipelineConfig, Preset, Split};
pub use manifest::{
    digest_file, relative_name, sha256_hex, ArtifactRecord, DirLock, RunManifest, StageRecord, LOCK_FILE,
    MANIFEST_FILE,
};
pub use stages::{evaluate_files, Pipeline, Stage, StageOutcome};
