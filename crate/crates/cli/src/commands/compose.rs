//! `lumisplit compose`: two-light training sample from a flash/no-flash
//! pair with a recolored synthetic second light.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use lumisplit_core::formation::dataset::{save_sample, SampleMeta};
use lumisplit_core::formation::{compose_flash_pair, ComposeParams};
use lumisplit_core::imgcore::{load_image, Transfer};

use super::CliError;
use crate::config;

#[derive(Args)]
pub struct ComposeArgs {
    /// Flash photograph (PFM or PNG).
    #[arg(long)]
    pub flash: PathBuf,
    /// No-flash (ambient) photograph.
    #[arg(long)]
    pub noflash: PathBuf,
    /// Chromaticity for the recolored flash light, as r,g,b summing to 1.
    #[arg(long)]
    pub recolor: String,
    /// Brightness gain applied to the recolored light.
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Transfer function for PNG inputs.
    #[arg(long, default_value = "linear")]
    pub transfer: Transfer,
    /// Chromaticity of the physical flash (defaults to neutral).
    #[arg(long)]
    pub flash_chrom: Option<String>,
    /// Output sample directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Resolved {
    flash: String,
    noflash: String,
    recolor: [f64; 3],
    gain: f64,
    transfer: Transfer,
    params: ComposeParams,
}

pub fn run(args: ComposeArgs) -> Result<(), CliError> {
    let recolor = config::parse_rgb(&args.recolor)?;
    let mut params = ComposeParams::default();
    if let Some(raw) = &args.flash_chrom {
        params.flash_chrom = config::parse_rgb(raw)?;
    }

    let flash = load_image(&args.flash, args.transfer)?;
    let noflash = load_image(&args.noflash, args.transfer)?;
    let sample = compose_flash_pair(&flash, &noflash, recolor, args.gain, &params)?;

    let resolved = Resolved {
        flash: args.flash.display().to_string(),
        noflash: args.noflash.display().to_string(),
        recolor,
        gain: args.gain,
        transfer: args.transfer,
        params: params.clone(),
    };
    config::write_resolved(&args.out, "compose", &resolved)?;

    let meta = SampleMeta {
        lights: [sample.lights.l1(), sample.lights.l2()],
        seed: None,
        params: serde_json::to_value(&params)
            .map_err(|e| CliError::Validation(format!("params serialize: {e}")))?,
    };
    save_sample(&args.out, &sample, &meta)?;
    println!("compose: wrote sample to {}", args.out.display());
    Ok(())
}
