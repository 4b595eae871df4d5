//! The pipeline stages and the runner that sequences them.
//!
//! Output layout under the output directory:
//!
//! | stage        | writes                                                           |
//! |--------------|------------------------------------------------------------------|
//! | `generate`   | `data/<split>/{videos.tsv,truth.tsv,flows.tsv}`, `videos/`, `flows/` |
//! | `train-tan`  | `tan/tan.fmnn`, `tan/step_<n>.fmnn` per milestone, `tan/losses.tsv` |
//! | `extract`    | `features/<split>/features.tsv` and one `.fmft` per clip          |
//! | `build-bags` | `bags/<split>/bags.tsv` and one `.fmbg` per video                 |
//! | `train-mil`  | `mil/mil.fmnn`, `mil/losses.tsv`                                  |
//! | `eval`       | `eval/scores.tsv`, `eval/roc_<mode>.csv`, `eval/summary.tsv`, `eval/roc.svg` |
//! | `compare`    | `compare/table.tsv`, `compare/roc_<mode>.csv`, `compare/summary.tsv`, `compare/roc.svg` |
//!
//! `<split>` is `train` or `test`. Only the test split's truth file is read,
//! and only by `eval` and `compare`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{PipelineConfig, Split};
use super::manifest::{digest_file, relative_name, ArtifactRecord, DirLock, RunManifest, StageRecord, MANIFEST_FILE};
use crate::binio::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::eval::{
    compare_modes, emit_report, frame_level, read_truth_file, roc_auc, score_videos, write_scores_file, NamedCurve,
};
use crate::mil::{build_bag, format_bag_manifest, parse_bag_manifest, train_mil, Bag, BagManifestEntry, MilModel, MilParams};
use crate::motiondata::{
    format_manifest, generate_dataset, parse_clip_id, read_flow_file, read_manifest, video_flow_stacks,
    write_flow_file, write_truth_file, write_video_file, FlowStack, ManifestEntry,
};
use crate::nncore::Checkpoint;
use crate::tan::{read_feature_file, train_tan, write_feature_file, TanModel, TanParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    TrainTan,
    Extract,
    BuildBags,
    TrainMil,
    Eval,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Generate, Stage::TrainTan, Stage::Extract, Stage::BuildBags, Stage::TrainMil, Stage::Eval, Stage::Compare];

    /// The stages `run-all` executes, in order.
    pub const RUN_ALL: [Stage; 6] =
        [Stage::Generate, Stage::TrainTan, Stage::Extract, Stage::BuildBags, Stage::TrainMil, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::TrainTan => "train-tan",
            Stage::Extract => "extract",
            Stage::BuildBags => "build-bags",
            Stage::TrainMil => "train-mil",
            Stage::Eval => "eval",
            Stage::Compare => "compare",
        }
    }

    /// Directory the stage owns, relative to the output directory.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Generate => "data",
            Stage::TrainTan => "tan",
            Stage::Extract => "features",
            Stage::BuildBags => "bags",
            Stage::TrainMil => "mil",
            Stage::Eval => "eval",
            Stage::Compare => "compare",
        }
    }

    fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Generate => &[],
            Stage::TrainTan => &[Stage::Generate],
            Stage::Extract => &[Stage::TrainTan],
            Stage::BuildBags => &[Stage::Extract],
            Stage::TrainMil => &[Stage::BuildBags],
            Stage::Eval => &[Stage::TrainMil],
            Stage::Compare => &[Stage::BuildBags],
        }
    }

    /// Every stage this one depends on, directly or not, upstream first.
    pub fn upstream(self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        for &s in self.inputs() {
            for u in s.upstream().into_iter().chain([s]) {
                if !out.contains(&u) {
                    out.push(u);
                }
            }
        }
        out.sort();
        out
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage `{s}`")))
    }
}

/// Summary of one finished stage.
#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    /// Human-readable lines such as the final AUC.
    pub notes: Vec<String>,
}

/// Owns an output directory for the lifetime of the value.
pub struct Pipeline {
    config: PipelineConfig,
    out: PathBuf,
    manifest: RunManifest,
    progress: bool,
    _lock: DirLock,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("out", &self.out).finish_non_exhaustive()
    }
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config values serialize")
}

impl Pipeline {
    /// Locks `config.out_dir` and loads its run manifest, if any.
    pub fn open(config: PipelineConfig) -> Result<Self> {
        let out = config.out_dir.clone();
        let lock = DirLock::acquire(&out)?;
        let path = out.join(MANIFEST_FILE);
        let mut manifest = if path.is_file() { RunManifest::load(&path)? } else { RunManifest::new(json(&config)) };
        manifest.config = json(&config);
        Ok(Pipeline { config, out, manifest, progress: false, _lock: lock })
    }

    /// Print per-stage progress to stderr.
    pub fn with_progress(mut self, on: bool) -> Self {
        self.progress = on;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn say(&self, msg: impl FnOnce() -> String) {
        if self.progress {
            eprintln!("{}", msg());
        }
    }

    /// Verifies upstream artifacts, runs `stage`, and records its outputs.
    /// Records of stages downstream of `stage` are dropped, since their
    /// inputs are about to change.
    pub fn run(&mut self, stage: Stage) -> Result<StageOutcome> {
        for up in stage.upstream() {
            self.manifest.verify_stage(&self.out, up.name(), Path::new(up.dir()))?;
        }
        let started = Instant::now();
        let dir = self.out.join(stage.dir());
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let (outputs, notes, config) = match stage {
            Stage::Generate => (self.generate()?, vec![], json(&self.config.motiondata)),
            Stage::TrainTan => (self.train_tan()?, vec![], json(&self.config.tan)),
            Stage::Extract => (self.extract()?, vec![], json(&self.config.tan)),
            Stage::BuildBags => (self.build_bags()?, vec![], json(&self.config.mil.segments)),
            Stage::TrainMil => (self.train_mil()?, vec![], json(&self.config.mil)),
            Stage::Eval => {
                let (o, n) = self.eval()?;
                (o, n, json(&self.config.mil))
            }
            Stage::Compare => {
                let (o, n) = self.compare()?;
                (o, n, json(&(&self.config.mil, &self.config.eval)))
            }
        };
        let mut records = Vec::with_capacity(outputs.len());
        for p in &outputs {
            records.push(ArtifactRecord { path: relative_name(&self.out, p), sha256: digest_file(p)? });
        }
        records.sort_by(|a, b| a.path.cmp(&b.path));
        let downstream: Vec<&str> =
            Stage::ALL.iter().filter(|s| s.upstream().contains(&stage)).map(|s| s.name()).collect();
        self.manifest.stages.retain(|k, _| !downstream.contains(&k.as_str()));
        self.manifest.stages.insert(
            stage.name().to_string(),
            StageRecord { seconds: started.elapsed().as_secs_f64(), config, outputs: records },
        );
        self.manifest.save(&self.out.join(MANIFEST_FILE))?;
        self.say(|| format!("{}: done in {:.1}s", stage.name(), started.elapsed().as_secs_f64()));
        Ok(StageOutcome { stage, outputs, notes })
    }

    pub fn run_all(&mut self) -> Result<Vec<StageOutcome>> {
        Stage::RUN_ALL.iter().map(|&s| self.run(s)).collect()
    }

    fn split_dir(&self, stage: Stage, split: Split) -> PathBuf {
        self.out.join(stage.dir()).join(split.as_str())
    }

    fn generate(&self) -> Result<Vec<PathBuf>> {
        let data = &self.config.motiondata;
        let matcher = data.matcher();
        let mut outputs = Vec::new();
        for split in Split::ALL {
            let dir = self.split_dir(Stage::Generate, split);
            let synth = data.synth(split, self.config.stage_seed(&format!("generate/{}", split.as_str())));
            let videos = generate_dataset(&synth)?;
            let mut entries = Vec::new();
            let mut flows = String::new();
            for v in &videos {
                let rel = PathBuf::from("videos").join(format!("{}.fmvd", v.id));
                write_video_file(v, &dir.join(&rel))?;
                outputs.push(dir.join(&rel));
                entries.push(ManifestEntry { id: v.id.clone(), label: v.label, frames: v.frame_count(), path: rel });
                for stack in video_flow_stacks(&v.id, &v.frames, &matcher)? {
                    let rel = format!("flows/{}_{:03}.fmfl", v.id, stack.clip_index);
                    write_flow_file(&stack, &dir.join(&rel))?;
                    outputs.push(dir.join(&rel));
                    let _ = writeln!(flows, "{}\t{}", stack.clip_id(), rel);
                }
                self.say(|| format!("generate: {} {}", split.as_str(), v.id));
            }
            let truths: Vec<_> = videos.iter().map(|v| v.ground_truth()).collect();
            for (name, bytes) in [("videos.tsv", format_manifest(&entries)), ("flows.tsv", flows)] {
                write_atomic(&dir.join(name), bytes.as_bytes())?;
                outputs.push(dir.join(name));
            }
            write_truth_file(&truths, &dir.join("truth.tsv"))?;
            outputs.push(dir.join("truth.tsv"));
        }
        Ok(outputs)
    }

    fn load_flows(&self, split: Split) -> Result<Vec<FlowStack>> {
        let dir = self.split_dir(Stage::Generate, split);
        read_index(&dir.join("flows.tsv"))?.into_iter().map(|(_, rel)| read_flow_file(&dir.join(rel))).collect()
    }

    fn train_tan(&self) -> Result<Vec<PathBuf>> {
        let stacks = self.load_flows(Split::Train)?;
        let dir = self.out.join(Stage::TrainTan.dir());
        let mut outputs = Vec::new();
        let total = self.config.tan.schedule.iterations;
        let training = train_tan(&stacks, &self.config.tan, |step, model| {
            if step + 1 < total {
                let p = dir.join(format!("step_{}.fmnn", step + 1));
                model.params.to_checkpoint().save(&p)?;
                outputs.push(p);
            }
            Ok(())
        })?;
        let final_path = dir.join("tan.fmnn");
        training.model.params.to_checkpoint().save(&final_path)?;
        outputs.push(final_path);
        outputs.push(write_losses(&dir.join("losses.tsv"), &training.losses)?);
        let tail = &training.losses[training.losses.len().saturating_sub(50)..];
        self.say(|| format!("train-tan: final loss {:.5}", tail.iter().sum::<f64>() / tail.len().max(1) as f64));
        Ok(outputs)
    }

    fn load_tan(&self) -> Result<TanModel> {
        let ck = Checkpoint::load(&self.out.join(Stage::TrainTan.dir()).join("tan.fmnn"))?;
        let params = TanParams::from_checkpoint(&self.config.tan, &ck)?;
        Ok(TanModel { config: self.config.tan.clone(), params })
    }

    fn extract(&self) -> Result<Vec<PathBuf>> {
        let model = self.load_tan()?;
        let mut outputs = Vec::new();
        for split in Split::ALL {
            let src = self.split_dir(Stage::Generate, split);
            let dir = self.split_dir(Stage::Extract, split);
            let mut index = String::new();
            for (clip, rel) in read_index(&src.join("flows.tsv"))? {
                let stack = read_flow_file(&src.join(rel))?;
                let feature = model.extract_feature(&stack)?;
                let rel = format!("{}_{:03}.fmft", stack.video_id, stack.clip_index);
                write_feature_file(&feature, &dir.join(&rel))?;
                outputs.push(dir.join(&rel));
                let _ = writeln!(index, "{clip}\t{rel}");
            }
            write_atomic(&dir.join("features.tsv"), index.as_bytes())?;
            outputs.push(dir.join("features.tsv"));
        }
        Ok(outputs)
    }

    fn build_bags(&self) -> Result<Vec<PathBuf>> {
        let m = self.config.mil.segments;
        let mut outputs = Vec::new();
        for split in Split::ALL {
            let videos = read_manifest(&self.split_dir(Stage::Generate, split).join("videos.tsv"))?;
            let src = self.split_dir(Stage::Extract, split);
            let mut clips: BTreeMap<String, Vec<(usize, Vec<f32>)>> = BTreeMap::new();
            for (clip, rel) in read_index(&src.join("features.tsv"))? {
                let path = src.join(&rel);
                let (video, k) = parse_clip_id(&clip).ok_or_else(|| Error::format(&path, format!("bad clip id `{clip}`")))?;
                let f = read_feature_file(&path)?;
                clips.entry(video.to_string()).or_default().push((k, f.values));
            }
            let dir = self.split_dir(Stage::BuildBags, split);
            let mut entries = Vec::new();
            for v in &videos {
                let mut feats = clips.remove(&v.id).ok_or_else(|| Error::MissingArtifact {
                    stage: Stage::Extract.name().into(),
                    path: src.join(format!("{}_000.fmft", v.id)),
                })?;
                feats.sort_by_key(|(k, _)| *k);
                let feats: Vec<Vec<f32>> = feats.into_iter().map(|(_, f)| f).collect();
                let bag = build_bag(&v.id, v.label, &feats, m)?;
                let rel = PathBuf::from(format!("{}.fmbg", v.id));
                bag.save(&dir.join(&rel))?;
                outputs.push(dir.join(&rel));
                entries.push(BagManifestEntry { video_id: v.id.clone(), label: v.label, path: rel });
            }
            write_atomic(&dir.join("bags.tsv"), format_bag_manifest(&entries).as_bytes())?;
            outputs.push(dir.join("bags.tsv"));
        }
        Ok(outputs)
    }

    fn load_bags(&self, split: Split) -> Result<Vec<Bag>> {
        let dir = self.split_dir(Stage::BuildBags, split);
        let manifest = dir.join("bags.tsv");
        let text = String::from_utf8(read_file(&manifest)?).map_err(|_| Error::format(&manifest, "not UTF-8"))?;
        parse_bag_manifest(&manifest, &text)?.iter().map(|e| Bag::load(&dir.join(&e.path))).collect()
    }

    fn train_mil(&self) -> Result<Vec<PathBuf>> {
        let bags = self.load_bags(Split::Train)?;
        let training = train_mil(&bags, &self.config.mil)?;
        let dir = self.out.join(Stage::TrainMil.dir());
        let ck = dir.join("mil.fmnn");
        training.params.to_checkpoint().save(&ck)?;
        let losses = write_losses(&dir.join("losses.tsv"), &training.losses)?;
        Ok(vec![ck, losses])
    }

    fn eval(&self) -> Result<(Vec<PathBuf>, Vec<String>)> {
        let ck = Checkpoint::load(&self.out.join(Stage::TrainMil.dir()).join("mil.fmnn"))?;
        let model = MilModel { config: self.config.mil.clone(), params: MilParams::from_checkpoint(&ck)? };
        let bags = self.load_bags(Split::Test)?;
        let truth = read_truth_file(&self.split_dir(Stage::Generate, Split::Test).join("truth.tsv"))?;
        let scores = score_videos(&model, &bags)?;
        let dir = self.out.join(Stage::Eval.dir());
        let scores_path = dir.join("scores.tsv");
        write_scores_file(&scores, &scores_path)?;
        let (s, l) = frame_level(&scores, &truth)?;
        let curve = roc_auc(&s, &l)?;
        let name = self.config.mil.mode.as_str().to_string();
        let note = format!("{name}\tauc {}", curve.auc);
        let files = emit_report(&[NamedCurve { name, curve }], &dir)?;
        let mut outputs = vec![scores_path];
        outputs.extend(files.roc);
        outputs.extend([files.summary, files.plot]);
        Ok((outputs, vec![note]))
    }

    fn compare(&self) -> Result<(Vec<PathBuf>, Vec<String>)> {
        let train = self.load_bags(Split::Train)?;
        let test = self.load_bags(Split::Test)?;
        let truth = read_truth_file(&self.split_dir(Stage::Generate, Split::Test).join("truth.tsv"))?;
        let mut configs = Vec::new();
        for &mode in &self.config.eval.compare {
            let name = mode.as_str().to_string();
            if configs.iter().any(|(n, _)| n == &name) {
                continue;
            }
            configs.push((name, crate::mil::MilConfig { mode, ..self.config.mil.clone() }));
        }
        let cmp = compare_modes(&train, &test, &truth, &configs)?;
        let dir = self.out.join(Stage::Compare.dir());
        let files = emit_report(&cmp.curves, &dir)?;
        let table = dir.join("table.tsv");
        write_atomic(&table, cmp.table().as_bytes())?;
        let mut outputs = vec![table];
        outputs.extend(files.roc);
        outputs.extend([files.summary, files.plot]);
        Ok((outputs, cmp.table().lines().skip(1).map(str::to_string).collect()))
    }
}

/// Two-column `id<TAB>relative path` index files.
fn read_index(path: &Path) -> Result<Vec<(String, String)>> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| Error::format(path, "not UTF-8"))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| Error::format(path, format!("line {}: expected `id<TAB>path`", i + 1)))
        })
        .collect()
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<PathBuf> {
    let mut s = String::from("step\tloss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{}\t{l}", i + 1);
    }
    write_atomic(path, s.as_bytes())?;
    Ok(path.to_path_buf())
}

/// Standalone evaluation of a score file against a truth file, outside any
/// pipeline run. Returns the report files and the AUC.
pub fn evaluate_files(scores: &Path, truth: &Path, out_dir: &Path, name: &str) -> Result<(Vec<PathBuf>, f64)> {
    let s = crate::eval::read_scores_file(scores)?;
    let t = read_truth_file(truth)?;
    let (fs, fl) = frame_level(&s, &t)?;
    let curve = roc_auc(&fs, &fl)?;
    let auc = curve.auc;
    let files = emit_report(&[NamedCurve { name: name.to_string(), curve }], out_dir)?;
    let mut out = files.roc;
    out.extend([files.summary, files.plot]);
    Ok((out, auc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upstream_is_transitive_and_ordered() {
        assert_eq!(Stage::TrainMil.upstream(), [Stage::Generate, Stage::TrainTan, Stage::Extract, Stage::BuildBags]);
        assert_eq!(Stage::Compare.upstream(), [Stage::Generate, Stage::TrainTan, Stage::Extract, Stage::BuildBags]);
        assert!(Stage::Generate.upstream().is_empty());
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
    }
}
