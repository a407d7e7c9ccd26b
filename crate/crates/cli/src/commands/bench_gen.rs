//! `lumisplit bench-gen`: synthesize per-scene single-light renders, then
//! white-balance, recolor, and pair them into benchmark mixtures.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use lumisplit_core::formation::dataset::{sample_dir_name, save_sample, SampleMeta};
use lumisplit_core::formation::{
    gen_bench_scene, make_benchmark, BenchmarkParams, LightPair, SynthParams,
};
use lumisplit_core::rng::Rng;

use super::CliError;
use crate::config;

#[derive(Args)]
pub struct BenchGenArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of benchmark samples.
    #[arg(long)]
    pub count: Option<usize>,
    /// Number of distinct scenes.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Single-light renders per scene.
    #[arg(long)]
    pub singles: Option<usize>,
    /// Number of pre-selected light-color pairs.
    #[arg(long)]
    pub colors: Option<usize>,
    /// Square image side.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel per-sample workers.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchGenConfig {
    pub count: usize,
    pub scenes: usize,
    pub singles_per_scene: usize,
    pub color_pairs: usize,
    pub seed: Option<u64>,
    pub singles_params: SynthParams,
    pub benchmark: BenchmarkParams,
    /// Minimum L1 separation when sampling color pairs.
    pub min_color_sep: f64,
}

impl Default for BenchGenConfig {
    fn default() -> Self {
        BenchGenConfig {
            count: 100,
            scenes: 8,
            singles_per_scene: 4,
            color_pairs: 6,
            seed: None,
            singles_params: SynthParams::bench_singles(),
            benchmark: BenchmarkParams::default(),
            min_color_sep: 0.15,
        }
    }
}

#[derive(Serialize)]
struct Resolved {
    seed: u64,
    #[serde(flatten)]
    config: BenchGenConfig,
}

pub fn run(args: BenchGenArgs) -> Result<(), CliError> {
    let mut cfg: BenchGenConfig = config::load_config_file(args.config.as_ref())?;
    if let Some(v) = args.count {
        cfg.count = v;
    }
    if let Some(v) = args.scenes {
        cfg.scenes = v;
    }
    if let Some(v) = args.singles {
        cfg.singles_per_scene = v;
    }
    if let Some(v) = args.colors {
        cfg.color_pairs = v;
    }
    if let Some(v) = args.size {
        cfg.singles_params.size = v;
    }
    let seed = config::resolve_seed(args.seed, cfg.seed)?;

    config::write_resolved(&args.out, "bench-gen", &Resolved { seed, config: cfg.clone() })?;

    // scenes can be generated in parallel; assembly is cheap
    let singles_params = cfg.singles_params.clone();
    let singles_per_scene = cfg.singles_per_scene;
    let scenes = config::run_jobs(args.jobs, (0..cfg.scenes).collect(), move |s| {
        let scene_seed = (seed ^ 0xbe5c_0000).wrapping_add(s as u64);
        Ok(gen_bench_scene(scene_seed, &singles_params, singles_per_scene)?)
    })?;

    let mut color_rng = Rng::substream(seed, 0xc010);
    let colors: Vec<LightPair> = (0..cfg.color_pairs)
        .map(|_| sample_color_pair(&mut color_rng, cfg.min_color_sep))
        .collect::<Result<_, _>>()?;

    let samples = make_benchmark(&scenes, &colors, cfg.count, seed, &cfg.benchmark)?;
    for (index, sample) in samples.iter().enumerate() {
        let meta = SampleMeta {
            lights: [sample.lights.l1(), sample.lights.l2()],
            seed: Some(seed),
            params: serde_json::to_value(&cfg)
                .map_err(|e| CliError::Validation(format!("params serialize: {e}")))?,
        };
        save_sample(args.out.join(sample_dir_name(index)), sample, &meta)?;
    }

    println!("bench-gen: wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn sample_color_pair(rng: &mut Rng, min_sep: f64) -> Result<LightPair, CliError> {
    for _ in 0..200 {
        let sample = |rng: &mut Rng| loop {
            let r = rng.range(0.15, 0.7);
            let g = rng.range(0.15, 0.7);
            let b = 1.0 - r - g;
            if (0.15..=0.7).contains(&b) {
                return [r, g, b];
            }
        };
        let l1 = sample(rng);
        let l2 = sample(rng);
        let sep: f64 = (0..3).map(|c| (l1[c] - l2[c]).abs()).sum();
        if sep >= min_sep {
            return Ok(LightPair::new(l1, l2)?);
        }
    }
    Err(CliError::Numeric(format!("could not sample color pairs with separation >= {min_sep}")))
}
