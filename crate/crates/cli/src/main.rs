//! `svtk` command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 degenerate data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "svtk", version, about = "Speaker verification evaluation toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Experiment config (key=value); for `fuse`, the fusion config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed=` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Log mel filterbank features for every utterance in a list.
    Features(commands::FeaturesArgs),
    /// Online augmentation of every utterance in a list.
    Augment(commands::AugmentArgs),
    /// Builds and renders the offline augmentation manifest.
    Render(commands::RenderArgs),
    /// Segment and utterance embeddings.
    Embed(commands::EmbedArgs),
    /// Cosine trial scores.
    Score(commands::ScoreArgs),
    /// AS-norm, optionally with a cohort grid search.
    Norm(commands::NormArgs),
    /// Min-max scaled weighted score fusion.
    Fuse(commands::FuseArgs),
    /// EER and minDCF.
    Eval(commands::EvalArgs),
    /// Synthetic embeddings, cohort and trial list.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let jobs = cli.global.jobs;
    let run = move || commands::run(&cli.global, &cli.command);
    let result = match jobs {
        Some(0) => Err(svtk::Error::InvalidInput("--jobs must be positive".into())),
        Some(n) => svtk::par::with_threads(n, run),
        None => run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svtk: {e}");
            ExitCode::from(if e.is_degenerate() { 2 } else { 1 })
        }
    }
}
