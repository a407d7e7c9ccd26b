//! Subcommand definitions and dispatch.

mod bench_gen;
mod compose;
mod eval;
mod gradcheck;
mod report;
mod separate;
mod synth;
mod train;

use clap::Subcommand;

use lumisplit_core::formation::FormationError;
use lumisplit_core::imgcore::ImageError;
use lumisplit_core::losses::LossError;
use lumisplit_core::nnstack::NnError;
use lumisplit_core::physsep::PhyssepError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, missing files, malformed inputs: exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Numeric failure (non-finite loss, failed gradient check, degenerate
    /// fits on required data): exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FormationError> for CliError {
    fn from(e: FormationError) -> Self {
        match e {
            FormationError::UnsatisfiableLightSeparation { .. }
            | FormationError::UnsatisfiableZExtremes { .. }
            | FormationError::DegenerateWhiteBalance(_) => CliError::Numeric(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PhyssepError> for CliError {
    fn from(e: PhyssepError) -> Self {
        match e {
            PhyssepError::TooFewValidPixels { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::DegenerateScale | LossError::EmptyMask => CliError::Numeric(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            NnError::Loss(l) => l.into(),
            NnError::Physsep(p) => p.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate synthetic two-light scenes into a dataset directory.
    Synth(synth::SynthArgs),
    /// Compose a two-light sample from a flash/no-flash image pair.
    Compose(compose::ComposeArgs),
    /// Build a benchmark of two-light mixtures from single-light renders.
    BenchGen(bench_gen::BenchGenArgs),
    /// Train a separation network on a dataset directory.
    Train(train::TrainArgs),
    /// Separate one image, from a chromaticity map or a checkpoint.
    Separate(separate::SeparateArgs),
    /// Evaluate predicted separations against ground truth.
    Eval(eval::EvalArgs),
    /// Run the finite-difference gradient-check suite.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Train all network variants and report the ablation table.
    Report(report::ReportArgs),
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => synth::run(args),
        Command::Compose(args) => compose::run(args),
        Command::BenchGen(args) => bench_gen::run(args),
        Command::Train(args) => train::run(args),
        Command::Separate(args) => separate::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
        Command::Report(args) => report::run(args),
    }
}
