//! `sanlite`: runs pipeline stages from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sanlite_core::detector::StreamMode;
use sanlite_core::pipeline::{Pipeline, PipelineConfig, Stage, StageOutcome};

#[derive(Parser)]
#[command(name = "sanlite", version, about = "Style-aggregated two-stream landmark detection at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic train and test faces.
    SynthData(Common),
    /// Write light, gray and sketch copies of both splits.
    Stylize(Common),
    /// Train the style classifier and cluster styled faces.
    Discover(Common),
    /// Train cycle generators between the largest and smallest cluster.
    TrainGan(Common),
    /// Precompute style-aggregated faces for every split and style.
    Aggregate(Common),
    /// Train the landmark detector on the original training faces.
    TrainDetector(Common),
    /// Evaluate the trained detector on every test style.
    Evaluate(Common),
    /// Train and evaluate the train-style by test-style grid.
    CrossStyle(Common),
    /// Write CSV tables and the CED plot.
    Report(Common),
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Skip stages whose recorded inputs and outputs are unchanged.
        #[arg(long)]
        resume: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration; built-in desk defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; overrides the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["two-stream", "original-only", "aggregated-only"])]
    stream_mode: Option<String>,
    /// Detector training schedule.
    #[arg(long, value_parser = ["desk", "paper"])]
    preset: Option<String>,
}

impl Common {
    fn config(&self) -> sanlite_core::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.preset {
            config.apply_preset(p)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(mode) = &self.stream_mode {
            config.detector.stream_mode = mode.parse::<StreamMode>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("SANLITE_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().map_err(|_| format!("SANLITE_THREADS must be a positive integer, got `{value}`"))?;
    if n == 0 {
        return Err("SANLITE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> sanlite_core::Result<()> {
    let (common, stages, resume) = match &cli.command {
        Command::Pipeline { common, resume } => (common, None, *resume),
        Command::SynthData(c) => (c, Some(Stage::SynthData), false),
        Command::Stylize(c) => (c, Some(Stage::Stylize), false),
        Command::Discover(c) => (c, Some(Stage::Discover), false),
        Command::TrainGan(c) => (c, Some(Stage::TrainGan), false),
        Command::Aggregate(c) => (c, Some(Stage::Aggregate), false),
        Command::TrainDetector(c) => (c, Some(Stage::TrainDetector), false),
        Command::Evaluate(c) => (c, Some(Stage::Evaluate), false),
        Command::CrossStyle(c) => (c, Some(Stage::CrossStyle), false),
        Command::Report(c) => (c, Some(Stage::Report), false),
    };
    let pipeline = Pipeline::new(common.config()?)?;
    let stages = stages.map_or_else(|| pipeline.pipeline_stages(), |s| vec![s]);
    for (stage, outcome) in pipeline.run(&stages, resume)? {
        let verb = match outcome {
            StageOutcome::Ran => "done",
            StageOutcome::Reused => "reused",
        };
        println!("{} {verb}", stage.name());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
