use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gfiqa_core::Error;

mod model;
mod prep;
mod study;

#[derive(Parser)]
#[command(name = "gfiqa", version, about = "Face image quality assessment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Face detection, alignment crops and diversity selection.
    #[command(subcommand)]
    Prep(prep::PrepCommand),
    /// Subjective-study batches, rater reliability and MOS.
    #[command(subcommand)]
    Study(study::StudyCommand),
    /// Train a quality model and write checkpoints and a metrics log.
    Train(model::TrainArgs),
    /// Score a checkpoint on one split of the configured dataset.
    Eval(model::EvalArgs),
    /// Print `image_id<TAB>score` for each image.
    Predict(model::PredictArgs),
    /// Train and test each model variant and write a results table.
    Ablate(model::AblateArgs),
}

/// Shared run-configuration flags.
#[derive(clap::Args, Clone, Debug)]
pub struct ConfigArgs {
    /// TOML run configuration; falls back to $GFIQA_CONFIG, then the toy profile.
    #[arg(long, env = "GFIQA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the training and split seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Io(_) | Error::DegenerateLandmarks(_) | Error::UndefinedStatistic(_) => 1,
        Error::Config(_) | Error::InvalidArgument(_) | Error::Shape { .. } => 2,
        Error::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prep(c) => prep::run(c),
        Command::Study(c) => study::run(c),
        Command::Train(a) => model::train(a),
        Command::Eval(a) => model::eval(a),
        Command::Predict(a) => model::predict(a),
        Command::Ablate(a) => model::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gfiqa: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
