//! `lumisplit gradcheck`: run the finite-difference suite over every layer
//! type and loss; nonzero exit on any failure.

use std::path::PathBuf;

use clap::Args;

use lumisplit_core::nnstack::gradcheck::{run_suite, REL_TOL};

use super::CliError;

#[derive(Args)]
pub struct GradcheckArgs {
    /// Number of seeds to sweep.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    /// Relative-error tolerance.
    #[arg(long, default_value_t = REL_TOL)]
    pub tol: f64,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: GradcheckArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Validation("need at least one seed".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_start + i).collect();
    let report = run_suite(&seeds, args.tol);

    println!("{:<20} {:>7} {:>14} {:>10}  result", "check", "runs", "max rel err", "tol");
    for e in &report.entries {
        println!(
            "{:<20} {:>7} {:>14.3e} {:>10.1e}  {}",
            e.name,
            e.checks,
            e.max_rel_err,
            e.tol,
            if e.passed { "pass" } else { "FAIL" }
        );
    }

    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Validation(format!("report json: {e}")))?;
        std::fs::write(path, json)
            .map_err(|e| CliError::Validation(format!("write {}: {e}", path.display())))?;
        #[derive(serde::Serialize)]
        struct Resolved {
            seeds: usize,
            seed_start: u64,
            tol: f64,
        }
        crate::config::write_resolved_at(
            &path.with_extension("config.json"),
            "gradcheck",
            &Resolved { seeds: args.seeds, seed_start: args.seed_start, tol: args.tol },
        )?;
    }

    if report.passed {
        println!("gradcheck: all checks passed");
        Ok(())
    } else {
        Err(CliError::Numeric("gradient check failed".into()))
    }
}
