//! `motionmil`: run the anomaly-detection pipeline stage by stage.
//!
//! On failure the last line on stderr is `error[<kind>]: <message>` and the
//! exit code is 1 (2 for usage errors).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motionmil::mil::LossMode;
use motionmil::pipeline::{evaluate_files, Pipeline, PipelineConfig, Preset, Stage, StageOutcome};
use motionmil::Error;

#[derive(Parser, Debug)]
#[command(name = "motionmil", version, about = "Motion-aware features and MIL ranking for video anomaly detection")]
struct Cli {
    /// TOML config file; omitted keys take the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory holding artifacts, run.json and the lock file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// desk or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize train/test videos, ground truth and flow stacks.
    Generate,
    /// Train the flow autoencoder.
    TrainTan(StepArgs),
    /// Pool bottleneck features for every clip.
    Extract,
    /// Average clip features into L2-normalized segment bags.
    BuildBags(BagArgs),
    /// Train the ranking model.
    TrainMil(MilArgs),
    /// Score test videos and write ROC/AUC reports. With --scores and
    /// --truth, evaluates those files instead of a pipeline run.
    Eval(EvalArgs),
    /// Train each configured loss mode and compare AUCs.
    Compare(MilArgs),
    /// generate, train-tan, extract, build-bags, train-mil, eval.
    RunAll(MilArgs),
    /// Print the effective config as TOML.
    ShowConfig,
}

#[derive(Args, Debug, Default)]
struct StepArgs {
    /// Training iterations; milestones are scaled proportionally.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct BagArgs {
    /// Segments per bag.
    #[arg(long)]
    segments: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct MilArgs {
    #[arg(long)]
    steps: Option<usize>,
    /// max or attention.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    segments: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    mil: MilArgs,
    /// Score file (`id<TAB>s0,s1,…` per line).
    #[arg(long, requires = "truth")]
    scores: Option<PathBuf>,
    /// Ground-truth file (`id<TAB>frames<TAB>start-end,…`).
    #[arg(long, requires = "scores")]
    truth: Option<PathBuf>,
}

fn scale_steps(schedule: &mut motionmil::nncore::TrainSchedule, steps: usize) {
    let old = schedule.iterations.max(1);
    let mut ms: Vec<usize> = schedule.milestones.iter().map(|&m| m * steps / old).filter(|&m| m > 0 && m < steps).collect();
    ms.dedup();
    schedule.milestones = ms;
    schedule.iterations = steps;
}

fn apply_mil(config: &mut PipelineConfig, args: &MilArgs) -> Result<(), Error> {
    if let Some(s) = args.steps {
        scale_steps(&mut config.mil.schedule, s);
    }
    if let Some(m) = &args.mode {
        config.mil.mode = m.parse::<LossMode>().map_err(|e| Error::Config(vec![e]))?;
    }
    if let Some(l) = args.lambda1 {
        config.mil.lambda1 = l;
    }
    if let Some(m) = args.segments {
        config.mil.segments = m;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let preset = cli.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?,
        None => String::new(),
    };
    let mut config = PipelineConfig::from_toml(&text, preset)?;
    if let Some(s) = cli.seed {
        if s > i64::MAX as u64 {
            return Err(Error::Config(vec![format!("seed {s} exceeds {}", i64::MAX)]));
        }
        config.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        config.out_dir = d.clone();
    }
    match &cli.command {
        Command::TrainTan(a) => {
            if let Some(s) = a.steps {
                scale_steps(&mut config.tan.schedule, s);
            }
        }
        Command::BuildBags(a) => {
            if let Some(m) = a.segments {
                config.mil.segments = m;
            }
        }
        Command::TrainMil(a) | Command::Compare(a) | Command::RunAll(a) => apply_mil(&mut config, a)?,
        Command::Eval(a) => apply_mil(&mut config, &a.mil)?,
        _ => {}
    }
    config.normalized()
}

fn report(outcome: &StageOutcome) {
    println!("{}: {} artifacts", outcome.stage.name(), outcome.outputs.len());
    for n in &outcome.notes {
        println!("{}: {n}", outcome.stage.name());
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::Eval(EvalArgs { scores: Some(scores), truth: Some(truth), mil }) = &cli.command {
        let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("eval"));
        let name = mil.mode.clone().unwrap_or_else(|| "scores".into());
        let (files, auc) = evaluate_files(scores, truth, &out, &name)?;
        println!("eval: {} artifacts", files.len());
        println!("eval: {name}\tauc {auc}");
        return Ok(());
    }
    let config = load_config(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let mut pipeline = Pipeline::open(config)?.with_progress(!cli.quiet);
    let stages: Vec<Stage> = match &cli.command {
        Command::Generate => vec![Stage::Generate],
        Command::TrainTan(_) => vec![Stage::TrainTan],
        Command::Extract => vec![Stage::Extract],
        Command::BuildBags(_) => vec![Stage::BuildBags],
        Command::TrainMil(_) => vec![Stage::TrainMil],
        Command::Eval(_) => vec![Stage::Eval],
        Command::Compare(_) => vec![Stage::Compare],
        Command::RunAll(_) => Stage::RUN_ALL.to_vec(),
        Command::ShowConfig => unreachable!("handled above"),
    };
    for s in stages {
        report(&pipeline.run(s)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
