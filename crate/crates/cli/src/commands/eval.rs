//! `lumisplit eval`: per-sample and aggregate separation metrics (and
//! chromaticity error where predictions carry an alpha map), CSV plus JSON.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use lumisplit_core::formation::dataset::{list_samples, load_sample, ALPHA_FILE, SEP_FILES};
use lumisplit_core::imgcore::{chromaticity, load_image, Transfer, CHROMATICITY_EPS};
use lumisplit_core::losses::{eval_metric, masked_mean_l1};

use super::CliError;
use crate::config;

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of predicted samples (subdirs with sep1.pfm/sep2.pfm and
    /// optionally alpha.pfm).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Per-sample CSV output path.
    #[arg(long)]
    pub out_csv: PathBuf,
    /// Aggregate JSON output path.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Report the raw (not scale-aligned) metric variant.
    #[arg(long, default_value_t = false)]
    pub raw: bool,
    /// Parallel per-sample workers.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Serialize, Clone)]
pub struct SampleEval {
    pub id: String,
    pub sep_metric: f64,
    pub chrom_l1: Option<f64>,
}

#[derive(Serialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean_sep_metric: f64,
    pub median_sep_metric: f64,
    pub mean_chrom_l1: Option<f64>,
    pub scale_aligned: bool,
}

pub fn evaluate_dirs(
    pred_root: &Path,
    gt_root: &Path,
    scale_align: bool,
    jobs: usize,
) -> Result<(Vec<SampleEval>, Aggregate), CliError> {
    let gt_dirs = list_samples(gt_root)?;
    if gt_dirs.is_empty() {
        return Err(CliError::Validation(format!("no ground-truth samples under {}", gt_root.display())));
    }

    let items: Vec<(String, PathBuf)> = gt_dirs
        .into_iter()
        .map(|gt_dir| {
            let id = gt_dir.file_name().expect("sample dir").to_string_lossy().into_owned();
            (id, gt_dir)
        })
        .collect();

    let pred_root = pred_root.to_path_buf();
    let rows = config::run_jobs(jobs, items, move |(id, gt_dir)| {
        let pred_dir = pred_root.join(&id);
        if !pred_dir.join(SEP_FILES[0]).exists() {
            return Err(CliError::Validation(format!(
                "missing prediction {} for sample {id}",
                pred_dir.join(SEP_FILES[0]).display()
            )));
        }
        let (gt, _) = load_sample(&gt_dir)?;
        let p1 = load_image(pred_dir.join(SEP_FILES[0]), Transfer::Linear)?;
        let p2 = load_image(pred_dir.join(SEP_FILES[1]), Transfer::Linear)?;
        let sep_metric = eval_metric(
            [p1.raster(), p2.raster()],
            [gt.separated[0].raster(), gt.separated[1].raster()],
            &gt.mask,
            scale_align,
        )?;
        let alpha_path = pred_dir.join(ALPHA_FILE);
        let chrom_l1 = if alpha_path.exists() {
            let pred_alpha_img = load_image(&alpha_path, Transfer::Linear)?;
            let (pred_alpha, _) = chromaticity(&pred_alpha_img, CHROMATICITY_EPS);
            Some(masked_mean_l1(pred_alpha.raster(), gt.albedo_chrom.raster(), &gt.mask)?)
        } else {
            None
        };
        Ok(SampleEval { id, sep_metric, chrom_l1 })
    })?;

    let aggregate = aggregate(&rows, scale_align);
    Ok((rows, aggregate))
}

pub fn aggregate(rows: &[SampleEval], scale_aligned: bool) -> Aggregate {
    let mut metrics: Vec<f64> = rows.iter().map(|r| r.sep_metric).collect();
    metrics.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
    let mean = metrics.iter().sum::<f64>() / metrics.len().max(1) as f64;
    let median = if metrics.is_empty() { 0.0 } else { metrics[metrics.len() / 2] };
    let chroms: Vec<f64> = rows.iter().filter_map(|r| r.chrom_l1).collect();
    let mean_chrom =
        if chroms.is_empty() { None } else { Some(chroms.iter().sum::<f64>() / chroms.len() as f64) };
    Aggregate {
        count: rows.len(),
        mean_sep_metric: mean,
        median_sep_metric: median,
        mean_chrom_l1: mean_chrom,
        scale_aligned,
    }
}

pub fn write_rows_csv(path: &Path, rows: &[SampleEval]) -> Result<(), CliError> {
    let mut out = String::from("id,sep_metric,chrom_l1\n");
    for r in rows {
        let chrom = r.chrom_l1.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.id, r.sep_metric, chrom));
    }
    std::fs::write(path, out).map_err(|e| CliError::Validation(format!("write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Resolved {
    pred: String,
    gt: String,
    scale_aligned: bool,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let (rows, agg) = evaluate_dirs(&args.pred, &args.gt, !args.raw, args.jobs)?;
    if let Some(parent) = args.out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Validation(format!("create {}: {e}", parent.display())))?;
        }
    }
    write_rows_csv(&args.out_csv, &rows)?;
    config::write_resolved_at(
        &args.out_csv.with_extension("config.json"),
        "eval",
        &Resolved {
            pred: args.pred.display().to_string(),
            gt: args.gt.display().to_string(),
            scale_aligned: !args.raw,
        },
    )?;
    if let Some(json_path) = &args.out_json {
        let json = serde_json::to_string_pretty(&agg)
            .map_err(|e| CliError::Validation(format!("aggregate json: {e}")))?;
        std::fs::write(json_path, json)
            .map_err(|e| CliError::Validation(format!("write {}: {e}", json_path.display())))?;
    }
    println!(
        "eval: {} samples, mean metric {}, median {}",
        agg.count, agg.mean_sep_metric, agg.median_sep_metric
    );
    Ok(())
}
