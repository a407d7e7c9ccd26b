//! Benchmark construction from single-light images: white-balance each
//! single, modulate with pre-selected light colors, and add pairs to form
//! two-light inputs whose ground-truth separation is exact by construction.

use serde::{Deserialize, Serialize};

use super::{per_light_shadings, FormationError, LightPair, Result, SceneSample, ALPHA_DIV_EPS};
use crate::imgcore::{chromaticity, valid_mask, ChromaticityMap, LinearImage, CHROMATICITY_EPS, MASK_TAU};
use crate::rng::Rng;

/// Several single-light renders of one scene. `albedo_chrom` carries the
/// scene's reflectance chromaticity when the upstream generator knows it;
/// otherwise the benchmark falls back to the chromaticity of the summed
/// white-balanced singles.
#[derive(Debug, Clone)]
pub struct BenchScene {
    pub albedo_chrom: Option<ChromaticityMap>,
    pub singles: Vec<LinearImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkParams {
    /// "Close to black" threshold for the gray-world estimate and masks.
    pub mask_tau: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams { mask_tau: MASK_TAU }
    }
}

/// Gray-world white balance: divide by three times the image's global
/// illuminant chromaticity estimate, so a neutrally lit image is unchanged.
/// Returns the balanced image and the estimated chromaticity.
pub fn white_balance(img: &LinearImage, tau: f64) -> Result<(LinearImage, [f64; 3])> {
    let mask = valid_mask(img, tau);
    if mask.count() == 0 {
        return Err(FormationError::DegenerateWhiteBalance("no pixels above the black threshold".into()));
    }
    let (h, w) = (img.height(), img.width());
    let mut mean = [0.0f64; 3];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let px = img.pixel(x, y);
                for c in 0..3 {
                    mean[c] += px[c];
                }
            }
        }
    }
    let total: f64 = mean.iter().sum();
    if total <= 0.0 {
        return Err(FormationError::DegenerateWhiteBalance("zero mean radiance".into()));
    }
    let chrom = [mean[0] / total, mean[1] / total, mean[2] / total];
    if chrom.iter().any(|&c| c < 1e-6) {
        return Err(FormationError::DegenerateWhiteBalance(format!(
            "estimated illuminant chromaticity {chrom:?} has a vanishing channel"
        )));
    }
    let mut balanced = img.raster().clone();
    for (i, v) in balanced.data_mut().iter_mut().enumerate() {
        *v /= 3.0 * chrom[i % 3];
    }
    Ok((LinearImage::new(balanced)?, chrom))
}

/// Modulate a white-balanced image with a light chromaticity, using the
/// times-three convention so a neutral light is the identity.
pub fn modulate(img: &LinearImage, light: [f64; 3]) -> LinearImage {
    let tinted = img.raster().tint([3.0 * light[0], 3.0 * light[1], 3.0 * light[2]]);
    LinearImage::new(tinted).expect("tint by non-negative factors preserves invariants")
}

/// Build `count` benchmark samples by sampling (scene, pair of singles,
/// color pair) with replacement, deterministically from `seed`.
pub fn make_benchmark(
    scenes: &[BenchScene],
    colors: &[LightPair],
    count: usize,
    seed: u64,
    params: &BenchmarkParams,
) -> Result<Vec<SceneSample>> {
    if scenes.is_empty() || colors.is_empty() {
        return Err(FormationError::EmptyBenchmarkInputs);
    }
    for (index, scene) in scenes.iter().enumerate() {
        if scene.singles.len() < 2 {
            return Err(FormationError::TooFewSingles { index, got: scene.singles.len() });
        }
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut rng = Rng::substream(seed, k as u64);
        let scene = &scenes[rng.index(scenes.len())];
        let ia = rng.index(scene.singles.len());
        let ib = loop {
            let i = rng.index(scene.singles.len());
            if i != ia {
                break i;
            }
        };
        let pair = colors[rng.index(colors.len())];
        out.push(compose_benchmark_sample(scene, ia, ib, &pair, params)?);
    }
    Ok(out)
}

fn compose_benchmark_sample(
    scene: &BenchScene,
    ia: usize,
    ib: usize,
    pair: &LightPair,
    params: &BenchmarkParams,
) -> Result<SceneSample> {
    let (wb_a, _) = white_balance(&scene.singles[ia], params.mask_tau)?;
    let (wb_b, _) = white_balance(&scene.singles[ib], params.mask_tau)?;
    wb_a.raster().same_dims(wb_b.raster())?;

    let sep1 = modulate(&wb_a, pair.l1());
    let sep2 = modulate(&wb_b, pair.l2());
    let input = LinearImage::new(sep1.raster().add(sep2.raster())?)?;

    let alpha = match &scene.albedo_chrom {
        Some(a) => {
            a.raster().same_dims(wb_a.raster())?;
            a.clone()
        }
        None => {
            let sum = LinearImage::new(wb_a.raster().add(wb_b.raster())?)?;
            chromaticity(&sum, CHROMATICITY_EPS).0
        }
    };

    let (s1, s2, shading_valid) = per_light_shadings(&sep1, &sep2, &alpha, ALPHA_DIV_EPS)?;
    let mask = valid_mask(&input, params.mask_tau).and(&shading_valid)?;

    let sample = SceneSample {
        input,
        albedo_chrom: alpha,
        shadings: [s1, s2],
        separated: [sep1, sep2],
        mask,
        lights: *pair,
    };
    debug_assert!(sample.validate(1e-9).is_ok());
    Ok(sample)
}
