//! `lumisplit`: separate a photograph lit by two spectrally distinct
//! illuminants into the per-light images.
//!
//! Subcommands cover the whole workflow: synthetic dataset generation
//! (`synth`), flash/no-flash composition (`compose`), benchmark construction
//! (`bench-gen`), training (`train`), separation (`separate`), evaluation
//! (`eval`), gradient checking (`gradcheck`), and the ablation report
//! (`report`).
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric failure.

mod commands;
mod config;

use clap::Parser;

use commands::CliError;

#[derive(Parser)]
#[command(name = "lumisplit", version, about = "Two-illuminant image separation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                CliError::Validation(_) => 2,
                CliError::Numeric(_) => 3,
            };
            std::process::exit(code);
        }
    }
}
