//! `lumisplit report`: train every supervision variant on the same data,
//! evaluate all of them (plus the true-chromaticity physics reference) on a
//! benchmark, and emit the ablation table.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use lumisplit_core::formation::dataset::load_dataset;
use lumisplit_core::formation::SceneSample;
use lumisplit_core::losses::{eval_metric, masked_mean_l1};
use lumisplit_core::nnstack::{
    infer, predict_chromaticity, save_checkpoint, train as train_loop, write_metrics_csv,
    InferMode, ModelBundle, TrainConfig, TrainMode,
};
use lumisplit_core::physsep::{separate_with_chrom_full, FitOptions};

use super::CliError;
use crate::config;

#[derive(Args)]
pub struct ReportArgs {
    /// Training dataset directory.
    #[arg(long)]
    pub train_data: PathBuf,
    /// Benchmark dataset directory.
    #[arg(long)]
    pub bench: PathBuf,
    /// Output directory (per-variant checkpoints, report.csv, report.json).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel per-sample evaluation workers.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub name: String,
    /// Mean masked L1 chromaticity error, when the variant predicts one.
    pub chrom_l1: Option<f64>,
    /// Mean scale-aligned separation metric over the benchmark.
    pub sep_metric: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportChecks {
    /// Physics route at most as bad as the direct route for the fully
    /// supervised model (reported ordering; informational).
    pub full_physics_le_full_direct: bool,
    /// True-chromaticity physics separation beats every learned variant.
    pub oracle_beats_learned: bool,
    /// Largest conservation violation of the physics routes over unclamped
    /// pixels.
    pub conservation_inf: f64,
}

#[derive(Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub oracle: ReportRow,
    pub checks: ReportChecks,
}

#[derive(Serialize)]
struct Resolved {
    epochs: usize,
    batch: usize,
    lr: f64,
    seed: u64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Evaluate a trained bundle on the benchmark with the given route.
fn eval_bundle(
    bundle: &ModelBundle,
    bench: &[SceneSample],
    mode: InferMode,
    jobs: usize,
) -> Result<f64, CliError> {
    let metrics = config::run_jobs(jobs, bench.iter().collect(), move |sample| {
        let (i1, i2, _) = infer(bundle, &sample.input, mode, &FitOptions::default())?;
        Ok(eval_metric(
            [i1.raster(), i2.raster()],
            [sample.separated[0].raster(), sample.separated[1].raster()],
            &sample.mask,
            true,
        )?)
    })?;
    Ok(mean(&metrics))
}

/// Mean chromaticity error of a bundle's predicted alpha over the benchmark.
fn eval_chrom(bundle: &ModelBundle, bench: &[SceneSample], jobs: usize) -> Result<f64, CliError> {
    let errs = config::run_jobs(jobs, bench.iter().collect(), move |sample| {
        let alpha = predict_chromaticity(bundle, &sample.input)?;
        Ok(masked_mean_l1(alpha.raster(), sample.albedo_chrom.raster(), &sample.mask)?)
    })?;
    Ok(mean(&errs))
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    let seed = config::resolve_seed(args.seed, None)?;
    let lr = args.lr.unwrap_or(5e-4);
    config::write_resolved(
        &args.out,
        "report",
        &Resolved { epochs: args.epochs, batch: args.batch, lr, seed },
    )?;

    let train_samples: Vec<SceneSample> =
        load_dataset(&args.train_data)?.into_iter().map(|(s, _)| s).collect();
    if train_samples.is_empty() {
        return Err(CliError::Validation(format!("no samples under {}", args.train_data.display())));
    }
    let bench: Vec<SceneSample> = load_dataset(&args.bench)?.into_iter().map(|(s, _)| s).collect();
    if bench.is_empty() {
        return Err(CliError::Validation(format!("no samples under {}", args.bench.display())));
    }

    // train the four variants with a shared schedule
    let mut bundles = Vec::new();
    for mode in [TrainMode::ChromOnly, TrainMode::FinalOnly, TrainMode::Full, TrainMode::SingleNet] {
        let cfg = TrainConfig {
            mode,
            epochs: args.epochs,
            batch: args.batch,
            lr,
            seed,
            ..TrainConfig::default()
        };
        eprintln!("report: training {}", mode.as_str());
        let out = train_loop(&cfg, &train_samples, None, None)?;
        let variant_dir = args.out.join(mode.as_str());
        save_checkpoint(&variant_dir, &out.bundle, Some(&out.adam), &cfg)?;
        write_metrics_csv(variant_dir.join("metrics.csv"), &out.metrics)?;
        bundles.push(out.bundle);
    }
    let (chrom_only, final_only, full, singlenet) =
        (&bundles[0], &bundles[1], &bundles[2], &bundles[3]);

    // oracle reference: physics separation from the true chromaticity
    let mut oracle_metrics = Vec::new();
    let mut conservation_inf = 0.0f64;
    for sample in &bench {
        let out = separate_with_chrom_full(&sample.input, &sample.albedo_chrom, &FitOptions::default())?;
        oracle_metrics.push(eval_metric(
            [out.i1.raster(), out.i2.raster()],
            [sample.separated[0].raster(), sample.separated[1].raster()],
            &sample.mask,
            true,
        )?);
        let sum = out.i1.raster().add(out.i2.raster())?;
        for y in 0..sample.input.height() {
            for x in 0..sample.input.width() {
                if out.unclamped.get(x, y) {
                    let a = sample.input.pixel(x, y);
                    let b = sum.pixel(x, y);
                    for c in 0..3 {
                        conservation_inf = conservation_inf.max((a[c] - b[c]).abs());
                    }
                }
            }
        }
    }
    let oracle = ReportRow {
        name: "Oracle-alpha+physics".into(),
        chrom_l1: Some(0.0),
        sep_metric: mean(&oracle_metrics),
    };

    // the five variant rows
    eprintln!("report: evaluating variants on {} benchmark samples", bench.len());
    let chrom_only_chrom = eval_chrom(chrom_only, &bench, args.jobs)?;
    let full_chrom = eval_chrom(full, &bench, args.jobs)?;
    let rows = vec![
        ReportRow {
            name: "Chrom-Only".into(),
            chrom_l1: Some(chrom_only_chrom),
            sep_metric: eval_bundle(chrom_only, &bench, InferMode::Physics, args.jobs)?,
        },
        ReportRow {
            name: "Final-Only".into(),
            chrom_l1: None,
            sep_metric: eval_bundle(final_only, &bench, InferMode::Direct, args.jobs)?,
        },
        ReportRow {
            name: "Full-Direct".into(),
            chrom_l1: Some(full_chrom),
            sep_metric: eval_bundle(full, &bench, InferMode::Direct, args.jobs)?,
        },
        ReportRow {
            name: "Full+physics".into(),
            chrom_l1: Some(full_chrom),
            sep_metric: eval_bundle(full, &bench, InferMode::Physics, args.jobs)?,
        },
        ReportRow {
            name: "SingleNet".into(),
            chrom_l1: None,
            sep_metric: eval_bundle(singlenet, &bench, InferMode::Direct, args.jobs)?,
        },
    ];

    let full_direct = rows[2].sep_metric;
    let full_physics = rows[3].sep_metric;
    let checks = ReportChecks {
        full_physics_le_full_direct: full_physics <= full_direct,
        oracle_beats_learned: rows.iter().all(|r| oracle.sep_metric < r.sep_metric),
        conservation_inf,
    };

    // table output
    let mut csv = String::from("name,chrom_l1,sep_metric\n");
    let mut table = String::new();
    for row in rows.iter().chain(std::iter::once(&oracle)) {
        let chrom = row.chrom_l1.map(|v| format!("{v:.6}")).unwrap_or_else(|| "---".into());
        csv.push_str(&format!(
            "{},{},{}\n",
            row.name,
            row.chrom_l1.map(|v| v.to_string()).unwrap_or_default(),
            row.sep_metric
        ));
        table.push_str(&format!("{:<22} {:>10} {:>12.6}\n", row.name, chrom, row.sep_metric));
    }
    let csv_path = args.out.join("report.csv");
    std::fs::write(&csv_path, csv)
        .map_err(|e| CliError::Validation(format!("write {}: {e}", csv_path.display())))?;

    let report = Report { rows, oracle, checks };
    let json_path = args.out.join("report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Validation(format!("report json: {e}")))?;
    std::fs::write(&json_path, json)
        .map_err(|e| CliError::Validation(format!("write {}: {e}", json_path.display())))?;

    println!("{:<22} {:>10} {:>12}", "variant", "chrom_l1", "sep_metric");
    print!("{table}");
    println!(
        "checks: full_physics<=full_direct {}, oracle_beats_learned {}, conservation_inf {:.3e}",
        report.checks.full_physics_le_full_direct,
        report.checks.oracle_beats_learned,
        report.checks.conservation_inf
    );
    Ok(())
}
