//! `lumisplit train`: train one of the supervision variants on a dataset
//! directory; emits a checkpoint, the metrics CSV, and the resolved config.

use std::path::PathBuf;

use clap::Args;

use lumisplit_core::formation::dataset::load_dataset;
use lumisplit_core::nnstack::{
    load_checkpoint, save_checkpoint, train as train_loop, write_metrics_csv, TrainConfig,
    TrainMode,
};

use super::CliError;
use crate::config;

pub fn parse_mode(raw: &str) -> Result<TrainMode, CliError> {
    match raw {
        "chrom-only" | "chrom_only" => Ok(TrainMode::ChromOnly),
        "final-only" | "final_only" => Ok(TrainMode::FinalOnly),
        "full" => Ok(TrainMode::Full),
        "singlenet" => Ok(TrainMode::SingleNet),
        other => Err(CliError::Validation(format!(
            "unknown mode '{other}', expected chrom-only|final-only|full|singlenet"
        ))),
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset directory (see `synth`).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint + metrics.
    #[arg(long)]
    pub out: PathBuf,
    /// Supervision variant: chrom-only, final-only, full, or singlenet.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epoch at which the learning rate drops by the drop factor.
    #[arg(long)]
    pub lr_drop_epoch: Option<usize>,
    /// Pyramid depth for the multi-scale loss terms.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Disable horizontal-flip augmentation.
    #[arg(long, default_value_t = false)]
    pub no_flips: bool,
    /// Resume from an existing checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// JSON config file holding a full TrainConfig; flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg: TrainConfig = config::load_config_file(args.config.as_ref())?;
    if let Some(raw) = &args.mode {
        cfg.mode = parse_mode(raw)?;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.lr_drop_epoch {
        cfg.lr_drop_epoch = Some(v);
    }
    if let Some(v) = args.levels {
        cfg.levels = v;
    }
    if args.no_flips {
        cfg.augment_flips = false;
    }
    cfg.seed = config::resolve_seed(args.seed, Some(cfg.seed))?;
    Ok(cfg)
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_train_config(&args)?;
    config::write_resolved(&args.out, "train", &cfg)?;

    let dataset = load_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Validation(format!("no samples under {}", args.data.display())));
    }
    let samples: Vec<_> = dataset.into_iter().map(|(s, _)| s).collect();

    let resume = match &args.resume {
        None => None,
        Some(dir) => {
            let (bundle, adam, _old_cfg) = load_checkpoint(dir)?;
            let adam = adam.ok_or_else(|| {
                CliError::Validation(format!("{}: checkpoint lacks optimizer state", dir.display()))
            })?;
            Some((bundle, adam))
        }
    };

    let diag_dir = args.out.join("diagnostic");
    let out = train_loop(&cfg, &samples, resume, Some(&diag_dir))?;

    save_checkpoint(&args.out, &out.bundle, Some(&out.adam), &cfg)?;
    write_metrics_csv(args.out.join("metrics.csv"), &out.metrics)?;

    let last = out.metrics.last();
    println!(
        "train: {} steps, mode {}, final loss {}",
        out.bundle.step,
        cfg.mode.as_str(),
        last.map(|m| m.total.to_string()).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}
