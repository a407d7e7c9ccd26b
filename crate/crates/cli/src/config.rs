//! Config resolution shared by the subcommands: optional JSON config file
//! (unknown keys rejected), CLI flag overrides, the LUMISPLIT_SEED fallback,
//! and the resolved-config JSON emitted next to every run's outputs.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::commands::CliError;

pub const SEED_ENV: &str = "LUMISPLIT_SEED";

/// Parse a JSON config file into a `deny_unknown_fields` struct.
pub fn load_config_file<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let raw = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
            serde_json::from_str(&raw)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))
        }
    }
}

/// Seed precedence: explicit flag, then config value, then LUMISPLIT_SEED,
/// then zero.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = config {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .parse()
            .map_err(|_| CliError::Validation(format!("{SEED_ENV}={raw} is not a valid seed"))),
        Err(_) => Ok(0),
    }
}

/// Write the fully resolved configuration next to the outputs so a run can
/// be reproduced from its artifacts alone.
pub fn write_resolved<T: Serialize>(dir: &Path, command: &str, resolved: &T) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Validation(format!("create {}: {e}", dir.display())))?;
    write_resolved_at(&dir.join("resolved_config.json"), command, resolved)
}

/// Same as [`write_resolved`] but to an explicit file path.
pub fn write_resolved_at<T: Serialize>(path: &Path, command: &str, resolved: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        command: &'a str,
        config: &'a T,
    }
    let json = serde_json::to_string_pretty(&Envelope { command, config: resolved })
        .map_err(|e| CliError::Validation(format!("serialize config: {e}")))?;
    std::fs::write(path, json)
        .map_err(|e| CliError::Validation(format!("write {}: {e}", path.display())))
}

/// Parse an `r,g,b` triple.
pub fn parse_rgb(raw: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Validation(format!("expected r,g,b, got '{raw}'")));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("bad channel '{p}' in '{raw}'")))?;
    }
    Ok(out)
}

/// Run per-item work serially or on a bounded rayon pool, preserving order.
pub fn run_jobs<T: Send, R: Send>(
    jobs: usize,
    items: Vec<T>,
    work: impl Fn(T) -> Result<R, CliError> + Sync + Send,
) -> Result<Vec<R>, CliError> {
    if jobs <= 1 {
        items.into_iter().map(work).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
        pool.install(|| items.into_par_iter().map(&work).collect())
    }
}
