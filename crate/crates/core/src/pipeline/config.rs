//! Pipeline configuration.
//!
//! A config file is TOML with four optional sections on top of a preset:
//!
//! ```toml
//! seed = 7               # global seed; every stage seed derives from it
//! out_dir = "run"        # where artifacts, manifest and lock live
//! preset = "desk"        # "desk" (default) or "paper"
//!
//! [motiondata]           # synthetic videos and block-matching flow
//! train_normal = 20
//! frames = 128
//!
//! [tan]                  # flow autoencoder
//! encoder_widths = [16, 32, 64]
//! [tan.schedule]
//! iterations = 1500
//!
//! [mil]                  # ranking model
//! mode = "attention"
//! lambda1 = 8e-5
//!
//! [eval]
//! compare = ["max", "attention"]
//! ```
//!
//! Keys left out take the preset's value; unknown keys are errors. Stage
//! seeds are never written in the file: `schedule.seed` is derived from the
//! global seed and the stage name.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mil::{LossMode, MilConfig};
use crate::motiondata::{AnomalyKind, BlockMatcher, SynthConfig};
use crate::nncore::TrainSchedule;
use crate::tan::TanConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Scaled to finish on one CPU core in minutes; the tested path.
    Desk,
    /// The published training scale: 112×112 stacks, 50K autoencoder
    /// iterations with batch 50, 10K ranking iterations.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(vec![format!("unknown preset `{other}` (expected desk or paper)")])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_normal: usize,
    pub train_anomalous: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub kinds: Vec<AnomalyKind>,
    pub max_intervals: usize,
    pub block: usize,
    pub search: usize,
}

impl DataConfig {
    /// Generator config for one split. `seed` is the split's own seed.
    pub fn synth(&self, split: Split, seed: u64) -> SynthConfig {
        let (normal, anomalous) = match split {
            Split::Train => (self.train_normal, self.train_anomalous),
            Split::Test => (self.test_normal, self.test_anomalous),
        };
        SynthConfig {
            normal,
            anomalous,
            frames: self.frames,
            height: self.height,
            width: self.width,
            kinds: self.kinds.clone(),
            max_intervals: self.max_intervals,
            id_prefix: split.as_str().to_string(),
            seed,
        }
    }

    pub fn matcher(&self) -> BlockMatcher {
        BlockMatcher { block: self.block, search: self.search }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Loss modes trained side by side by the `compare` stage.
    pub compare: Vec<LossMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub preset: Preset,
    pub motiondata: DataConfig,
    pub tan: TanConfig,
    pub mil: MilConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let data = DataConfig {
            train_normal: 20,
            train_anomalous: 20,
            test_normal: 10,
            test_anomalous: 10,
            frames: 128,
            height: 64,
            width: 64,
            kinds: AnomalyKind::ALL.to_vec(),
            max_intervals: 2,
            block: 8,
            search: 6,
        };
        let mut config = PipelineConfig {
            seed: 7,
            out_dir: PathBuf::from("run"),
            preset,
            motiondata: data,
            tan: TanConfig::default(),
            mil: MilConfig::default(),
            eval: EvalConfig { compare: vec![LossMode::Max, LossMode::Attention] },
        };
        match preset {
            Preset::Desk => {
                config.tan.encoder_widths = [16, 32, 64];
                config.tan.schedule = TrainSchedule {
                    learning_rate: 0.005,
                    iterations: 1500,
                    milestones: vec![750, 1200],
                    batch_size: 8,
                    seed: 0,
                };
                config.mil.schedule.iterations = 1000;
                config.mil.schedule.milestones = vec![400, 800];
            }
            Preset::Paper => {
                config.motiondata.height = 112;
                config.motiondata.width = 112;
                config.tan.height = 112;
                config.tan.width = 112;
                config.tan.schedule = TrainSchedule {
                    learning_rate: 0.005,
                    iterations: 50_000,
                    milestones: vec![25_000, 40_000],
                    batch_size: 50,
                    seed: 0,
                };
            }
        }
        config.derive_seeds();
        config
    }

    /// Seed of the named stage: the first eight bytes of
    /// `SHA-256("<global seed>/<stage>")`, little-endian, top bit cleared.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    fn derive_seeds(&mut self) {
        self.tan.schedule.seed = self.stage_seed("train-tan");
        self.mil.schedule.seed = self.stage_seed("train-mil");
    }

    /// Parses config text on top of a preset. The preset comes from
    /// `preset_override`, else the file's `preset` key, else desk.
    pub fn from_toml(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        let mut errs = Vec::new();
        for (section, table) in &user {
            if let Some(t) = table.as_table() {
                for (k, v) in t {
                    if k == "seed" || (k == "schedule" && v.get("seed").is_some()) {
                        errs.push(format!("[{section}]: stage seeds derive from the global `seed` and cannot be set"));
                    }
                }
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let preset = match preset_override {
            Some(p) => p,
            None => match user.get("preset") {
                Some(v) => v
                    .as_str()
                    .ok_or_else(|| Error::Config(vec!["`preset` must be a string".into()]))?
                    .parse()?,
                None => Preset::Desk,
            },
        };
        let base = toml::Table::try_from(PipelineConfig::preset(preset))
            .map_err(|e| Error::Config(vec![format!("internal: {e}")]))?;
        let mut merged = toml::Value::Table(base);
        merge(&mut merged, toml::Value::Table(user));
        if let Some(t) = merged.as_table_mut() {
            t.insert("preset".into(), toml::Value::String(format!("{preset:?}").to_lowercase()));
        }
        let config: PipelineConfig =
            merged.try_into().map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        config.normalized()
    }

    /// Re-derives stage seeds and keeps the duplicated frame size in step,
    /// then validates every section.
    pub fn normalized(mut self) -> Result<Self> {
        self.derive_seeds();
        let mut errs = Vec::new();
        let d = &self.motiondata;
        if (self.tan.height, self.tan.width) != (d.height, d.width) {
            errs.push(format!(
                "tan input {}x{} differs from motiondata frame size {}x{}",
                self.tan.width, self.tan.height, d.width, d.height
            ));
        }
        for split in Split::ALL {
            if let Err(Error::Config(mut e)) = d.synth(split, 0).validate() {
                errs.append(&mut e);
            }
        }
        if d.train_normal == 0 || d.train_anomalous == 0 || d.test_normal == 0 || d.test_anomalous == 0 {
            errs.push("each split needs at least one normal and one anomalous video".into());
        }
        if d.block == 0 || d.block > d.height.min(d.width) {
            errs.push(format!("flow block size {} must be in 1..={}", d.block, d.height.min(d.width)));
        }
        for (name, result) in [("tan", self.tan.validate()), ("mil", self.mil.validate())] {
            match result {
                Err(Error::Config(e)) => errs.extend(e.into_iter().map(|m| format!("[{name}] {m}"))),
                Err(e) => errs.push(format!("[{name}] {e}")),
                Ok(()) => {}
            }
        }
        if self.eval.compare.is_empty() {
            errs.push("[eval] compare needs at least one mode".into());
        }
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(errs))
        }
    }

    /// The config as TOML, without the derived stage seeds.
    pub fn to_toml(&self) -> String {
        let mut v = toml::Table::try_from(self).expect("config serializes");
        for section in ["tan", "mil"] {
            if let Some(s) = v.get_mut(section).and_then(|t| t.get_mut("schedule")).and_then(|t| t.as_table_mut()) {
                s.remove("seed");
            }
        }
        toml::to_string(&v).expect("table serializes")
    }
}

pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{global}/{stage}").as_bytes());
    // top bit cleared so the seed fits a TOML integer
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest")) & (i64::MAX as u64)
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses and normalizes a config, or lists every problem found.
pub fn validate_config(text: &str) -> Result<PipelineConfig> {
    PipelineConfig::from_toml(text, None)
}
