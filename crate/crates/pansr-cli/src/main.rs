//! `pansr` — progressive adversarial super-resolution from the command line.
//!
//! Six subcommands cover the whole workflow: `train` fits a model on a PNG
//! folder or a procedural synthetic set, `sr` upscales images with a trained
//! checkpoint, `evaluate` scores an output set against a reference set,
//! `degrade` runs the stochastic camera-degradation pipeline, `dimlab`
//! reproduces the high-dimensional distance-concentration experiment, and
//! `fit-niqe` fits the no-reference quality model to a pristine corpus.
//!
//! Every subcommand accepts `--config FILE` with flat `key=value` lines;
//! explicit flags override file values. Each run writes a manifest next to
//! its outputs recording the resolved configuration, the seed, the build,
//! and a content hash per output file. Exit codes: 0 success, 2 bad
//! configuration, 3 data problems, 4 numerical divergence.

mod cmd_degrade;
mod cmd_dimlab;
mod cmd_evaluate;
mod cmd_fit_niqe;
mod cmd_sr;
mod cmd_train;
mod plot;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pansr::PanError;

#[derive(Parser, Debug)]
#[command(name = "pansr", version, about = "Perceptual super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a super-resolution model.
    Train(cmd_train::TrainArgs),
    /// Upscale images with a trained checkpoint.
    Sr(cmd_sr::SrArgs),
    /// Score an image set against a reference set.
    Evaluate(cmd_evaluate::EvaluateArgs),
    /// Apply the random camera-degradation pipeline to images.
    Degrade(cmd_degrade::DegradeArgs),
    /// Run the distance-concentration sweep across dimensions.
    Dimlab(cmd_dimlab::DimlabArgs),
    /// Fit the NIQE pristine model from a corpus of clean images.
    FitNiqe(cmd_fit_niqe::FitNiqeArgs),
}

/// Flags shared by every subcommand.
#[derive(clap::Args, Debug)]
struct CommonArgs {
    /// Optional key=value config file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for every random draw the command makes.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train::run(args),
        Command::Sr(args) => cmd_sr::run(args),
        Command::Evaluate(args) => cmd_evaluate::run(args),
        Command::Degrade(args) => cmd_degrade::run(args),
        Command::Dimlab(args) => cmd_dimlab::run(args),
        Command::FitNiqe(args) => cmd_fit_niqe::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .chain()
                .find_map(|c| c.downcast_ref::<PanError>())
                .map_or(3, PanError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
