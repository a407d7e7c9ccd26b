//! `lumisplit separate`: split one image into its two per-light images,
//! either from a known reflectance chromaticity map or from a trained
//! checkpoint. Emits `<prefix>_1.pfm`, `<prefix>_2.pfm`, `<prefix>_fit.json`.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use lumisplit_core::imgcore::{chromaticity, load_image, save_image, Transfer, CHROMATICITY_EPS};
use lumisplit_core::nnstack::{infer, load_checkpoint, InferMode};
use lumisplit_core::physsep::{separate_with_chrom, FitMethod, FitOptions, TwoIlluminantFit};

use super::CliError;
use crate::config;

#[derive(Args)]
pub struct SeparateArgs {
    /// Input image (PFM or PNG).
    #[arg(long)]
    pub input: PathBuf,
    /// Reflectance chromaticity map; mutually exclusive with --checkpoint.
    #[arg(long)]
    pub alpha: Option<PathBuf>,
    /// Trained checkpoint directory; mutually exclusive with --alpha.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Inference route for checkpoints: direct cascade or physics pipeline.
    #[arg(long, default_value = "physics")]
    pub infer_mode: InferMode,
    /// Transfer function for PNG inputs.
    #[arg(long, default_value = "linear")]
    pub transfer: Transfer,
    /// Use RANSAC initialization for the two-illuminant fit.
    #[arg(long, default_value_t = false)]
    pub ransac: bool,
    #[arg(long, default_value_t = 256)]
    pub ransac_iters: usize,
    #[arg(long, default_value_t = 0.02)]
    pub ransac_threshold: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Serialize)]
struct FitJson {
    mode: String,
    lights: Option<[[f64; 3]; 2]>,
    residual_rms: Option<f64>,
    degenerate: Option<bool>,
    inlier_count: Option<usize>,
}

impl FitJson {
    fn from_fit(mode: &str, fit: Option<&TwoIlluminantFit>) -> FitJson {
        match fit {
            None => FitJson {
                mode: mode.into(),
                lights: None,
                residual_rms: None,
                degenerate: None,
                inlier_count: None,
            },
            Some(f) => FitJson {
                mode: mode.into(),
                lights: Some([f.l1, f.l2]),
                residual_rms: Some(f.residual_rms),
                degenerate: Some(f.degenerate),
                inlier_count: Some(f.inlier_mask.count()),
            },
        }
    }
}

#[derive(Serialize)]
struct Resolved {
    input: String,
    alpha: Option<String>,
    checkpoint: Option<String>,
    infer_mode: InferMode,
    transfer: Transfer,
    fit: FitOptions,
}

pub fn run(args: SeparateArgs) -> Result<(), CliError> {
    if args.alpha.is_some() == args.checkpoint.is_some() {
        return Err(CliError::Validation(
            "provide exactly one of --alpha or --checkpoint".into(),
        ));
    }
    let seed = config::resolve_seed(args.seed, None)?;
    let fit_options = FitOptions {
        method: if args.ransac {
            FitMethod::Ransac {
                iterations: args.ransac_iters,
                inlier_threshold: args.ransac_threshold,
                seed,
            }
        } else {
            FitMethod::Irls
        },
    };

    let input = load_image(&args.input, args.transfer)?;

    let (i1, i2, fit, mode_str) = match (&args.alpha, &args.checkpoint) {
        (Some(alpha_path), None) => {
            let alpha_img = load_image(alpha_path, args.transfer)?;
            if alpha_img.height() != input.height() || alpha_img.width() != input.width() {
                return Err(CliError::Validation(format!(
                    "alpha dims {}x{} do not match input {}x{}",
                    alpha_img.height(),
                    alpha_img.width(),
                    input.height(),
                    input.width()
                )));
            }
            let (alpha, _) = chromaticity(&alpha_img, CHROMATICITY_EPS);
            let (i1, i2, fit) = separate_with_chrom(&input, &alpha, &fit_options)?;
            (i1, i2, Some(fit), "alpha+physics")
        }
        (None, Some(ckpt_dir)) => {
            let (bundle, _, _) = load_checkpoint(ckpt_dir)?;
            let (i1, i2, fit) = infer(&bundle, &input, args.infer_mode, &fit_options)?;
            let mode_str = match args.infer_mode {
                InferMode::Direct => "checkpoint+direct",
                InferMode::Physics => "checkpoint+physics",
            };
            (i1, i2, fit, mode_str)
        }
        _ => unreachable!("validated above"),
    };

    let parent = args.out_prefix.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let stem = args
        .out_prefix
        .file_name()
        .ok_or_else(|| CliError::Validation("out prefix needs a file stem".into()))?
        .to_string_lossy()
        .into_owned();
    if !parent.as_os_str().is_empty() {
        std::fs::create_dir_all(&parent)
            .map_err(|e| CliError::Validation(format!("create {}: {e}", parent.display())))?;
    }
    let path_1 = parent.join(format!("{stem}_1.pfm"));
    let path_2 = parent.join(format!("{stem}_2.pfm"));
    let path_fit = parent.join(format!("{stem}_fit.json"));
    save_image(&i1, &path_1, Transfer::Linear)?;
    save_image(&i2, &path_2, Transfer::Linear)?;
    let fit_json = serde_json::to_string_pretty(&FitJson::from_fit(mode_str, fit.as_ref()))
        .map_err(|e| CliError::Validation(format!("fit json: {e}")))?;
    std::fs::write(&path_fit, fit_json)
        .map_err(|e| CliError::Validation(format!("write {}: {e}", path_fit.display())))?;

    let resolved = Resolved {
        input: args.input.display().to_string(),
        alpha: args.alpha.as_ref().map(|p| p.display().to_string()),
        checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
        infer_mode: args.infer_mode,
        transfer: args.transfer,
        fit: fit_options,
    };
    config::write_resolved_at(&parent.join(format!("{stem}_config.json")), "separate", &resolved)?;

    println!("separate: wrote {} and {}", path_1.display(), path_2.display());
    Ok(())
}
