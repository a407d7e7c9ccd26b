//! Procedural scene synthesis: Voronoi albedo, compactly supported shading
//! blobs, and simplex-sampled lights. Every sample is a deterministic
//! function of its seed.

use serde::{Deserialize, Serialize};

use super::{
    render_two_light_with_tau, FormationError, LightPair, Result, SceneSample, ShadingField,
};
use crate::imgcore::{chromaticity, LinearImage, Raster3, ScalarField, CHROMATICITY_EPS};
use crate::rng::Rng;

const LIGHT_SAMPLE_ATTEMPTS: usize = 200;
const Z_EXTREME_ATTEMPTS: usize = 64;

/// How the two scene lights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LightSampler {
    /// Rejection-sample both chromaticities with each channel inside
    /// `channel_range` until their L1 separation reaches `min_sep`.
    Random,
    /// Use a fixed pair.
    Fixed { l1: [f64; 3], l2: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Square image side.
    pub size: usize,
    pub n_albedo_regions: usize,
    /// Shading blobs per light.
    pub blob_count: usize,
    /// Minimum L1 separation between the two light chromaticities.
    pub min_light_sep: f64,
    /// Shading floor added to both lights. Zero lets the relative shading
    /// reach 0 and 1 where only one light's blobs cover a pixel.
    pub ambient: f64,
    pub amp_range: (f64, f64),
    /// Blob sigma as a fraction of the image side.
    pub sigma_range: (f64, f64),
    /// Per-channel albedo bounds (kept away from black).
    pub albedo_range: (f64, f64),
    /// Per-channel bounds for sampled light chromaticities.
    pub light_channel_range: (f64, f64),
    /// When set, resample (bounded) until at least this fraction of valid
    /// pixels is lit purely by each light.
    pub require_z_extremes: Option<f64>,
    /// "Close to black" validity threshold.
    pub mask_tau: f64,
    pub light_sampler: LightSampler,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 64,
            n_albedo_regions: 6,
            blob_count: 4,
            min_light_sep: 0.1,
            ambient: 0.0,
            amp_range: (0.4, 1.0),
            sigma_range: (0.12, 0.35),
            albedo_range: (0.15, 0.9),
            light_channel_range: (0.15, 0.7),
            require_z_extremes: None,
            mask_tau: crate::imgcore::MASK_TAU,
            light_sampler: LightSampler::Random,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.size < 16 {
            return Err(FormationError::BadParams(format!("size {} < 16", self.size)));
        }
        if self.n_albedo_regions < 2 {
            return Err(FormationError::BadParams(format!(
                "n_albedo_regions {} < 2",
                self.n_albedo_regions
            )));
        }
        if self.blob_count == 0 {
            return Err(FormationError::BadParams("blob_count must be positive".into()));
        }
        if self.amp_range.0 > self.amp_range.1 || self.amp_range.0 < 0.0 {
            return Err(FormationError::BadParams("bad amp_range".into()));
        }
        if self.albedo_range.0 <= 0.0 || self.albedo_range.0 > self.albedo_range.1 {
            return Err(FormationError::BadParams("bad albedo_range".into()));
        }
        Ok(())
    }
}

pub(crate) fn sample_light(rng: &mut Rng, channel_range: (f64, f64)) -> [f64; 3] {
    loop {
        let r = rng.range(channel_range.0, channel_range.1);
        let g = rng.range(channel_range.0, channel_range.1);
        let b = 1.0 - r - g;
        if b >= channel_range.0 && b <= channel_range.1 {
            return [r, g, b];
        }
    }
}

pub(crate) fn sample_light_pair(
    rng: &mut Rng,
    channel_range: (f64, f64),
    min_sep: f64,
) -> Result<LightPair> {
    for _ in 0..LIGHT_SAMPLE_ATTEMPTS {
        let l1 = sample_light(rng, channel_range);
        let l2 = sample_light(rng, channel_range);
        let sep: f64 = (0..3).map(|c| (l1[c] - l2[c]).abs()).sum();
        if sep >= min_sep {
            return LightPair::new(l1, l2);
        }
    }
    Err(FormationError::UnsatisfiableLightSeparation {
        min_sep,
        attempts: LIGHT_SAMPLE_ATTEMPTS,
    })
}

/// Piecewise-constant albedo from Voronoi cells of `n` random sites.
pub(crate) fn voronoi_albedo(rng: &mut Rng, size: usize, n: usize, color_range: (f64, f64)) -> LinearImage {
    let sites: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.range(0.0, size as f64), rng.range(0.0, size as f64))).collect();
    let colors: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.range(color_range.0, color_range.1),
                rng.range(color_range.0, color_range.1),
                rng.range(color_range.0, color_range.1),
            ]
        })
        .collect();
    let raster = Raster3::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, &(sx, sy)) in sites.iter().enumerate() {
            let d = (px - sx) * (px - sx) + (py - sy) * (py - sy);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        colors[best]
    });
    LinearImage::new(raster).expect("colors are positive")
}

/// Sum of compactly supported blobs: each blob is a Gaussian bump truncated
/// (and shifted to zero) at radius 2.5 sigma, so the field genuinely
/// vanishes away from its blobs.
pub(crate) fn blob_field(rng: &mut Rng, size: usize, params: &SynthParams) -> ScalarField {
    struct Blob {
        cx: f64,
        cy: f64,
        inv_two_sigma2: f64,
        cutoff: f64,
        scale: f64,
    }
    let blobs: Vec<Blob> = (0..params.blob_count)
        .map(|_| {
            let sigma = rng.range(params.sigma_range.0, params.sigma_range.1) * size as f64;
            let amp = rng.range(params.amp_range.0, params.amp_range.1);
            let radius = 2.5 * sigma;
            let cutoff = (-radius * radius / (2.0 * sigma * sigma)).exp();
            Blob {
                cx: rng.range(-0.2 * size as f64, 1.2 * size as f64),
                cy: rng.range(-0.2 * size as f64, 1.2 * size as f64),
                inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
                cutoff,
                scale: amp / (1.0 - cutoff),
            }
        })
        .collect();
    ScalarField::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = params.ambient;
        for b in &blobs {
            let d2 = (px - b.cx) * (px - b.cx) + (py - b.cy) * (py - b.cy);
            let g = (-d2 * b.inv_two_sigma2).exp();
            if g > b.cutoff {
                v += b.scale * (g - b.cutoff);
            }
        }
        v
    })
}

/// Fraction of mask-valid pixels lit purely by light 1 (z = 1) and purely by
/// light 2 (z = 0).
fn z_extreme_fractions(sample: &SceneSample, shadings: &ShadingField) -> (f64, f64) {
    let (h, w) = (sample.input.height(), sample.input.width());
    let mut only1 = 0usize;
    let mut only2 = 0usize;
    let mut valid = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !sample.mask.get(x, y) {
                continue;
            }
            valid += 1;
            let (la, lb) = (shadings.lambda1.get(x, y), shadings.lambda2.get(x, y));
            if la > 0.0 && lb == 0.0 {
                only1 += 1;
            } else if lb > 0.0 && la == 0.0 {
                only2 += 1;
            }
        }
    }
    if valid == 0 {
        return (0.0, 0.0);
    }
    (only1 as f64 / valid as f64, only2 as f64 / valid as f64)
}

/// Generate one synthetic two-light scene, deterministically from the seed.
pub fn synth_scene(seed: u64, params: &SynthParams) -> Result<SceneSample> {
    params.validate()?;
    let attempts = if params.require_z_extremes.is_some() { Z_EXTREME_ATTEMPTS } else { 1 };
    for attempt in 0..attempts {
        let mut rng = Rng::substream(seed, attempt as u64);
        let lights = match params.light_sampler {
            LightSampler::Random => {
                sample_light_pair(&mut rng, params.light_channel_range, params.min_light_sep)?
            }
            LightSampler::Fixed { l1, l2 } => LightPair::new(l1, l2)?,
        };
        let albedo = voronoi_albedo(&mut rng, params.size, params.n_albedo_regions, params.albedo_range);
        let lam1 = blob_field(&mut rng, params.size, params);
        let lam2 = blob_field(&mut rng, params.size, params);
        let shadings = ShadingField::new(lam1, lam2)?;
        let sample = render_two_light_with_tau(&albedo, &shadings, &lights, params.mask_tau)?;
        match params.require_z_extremes {
            None => return Ok(sample),
            Some(frac) => {
                let (f1, f2) = z_extreme_fractions(&sample, &shadings);
                if f1 >= frac && f2 >= frac && sample.mask.count() >= 100 {
                    return Ok(sample);
                }
            }
        }
    }
    Err(FormationError::UnsatisfiableZExtremes {
        frac: params.require_z_extremes.unwrap_or(0.0),
        attempts,
    })
}

impl SynthParams {
    /// Profile for benchmark single-light renders: no ambient floor and
    /// small compact blobs, so mixtures of two singles have regions lit by
    /// each light alone (the regime the endpoint fit identifies exactly).
    pub fn bench_singles() -> SynthParams {
        SynthParams {
            ambient: 0.0,
            blob_count: 3,
            sigma_range: (0.08, 0.22),
            ..SynthParams::default()
        }
    }
}

/// Generate a benchmark scene: one albedo, `n_singles` single-light renders
/// with independent shading fields and light colors.
pub fn gen_bench_scene(seed: u64, params: &SynthParams, n_singles: usize) -> Result<super::BenchScene> {
    params.validate()?;
    if n_singles < 2 {
        return Err(FormationError::BadParams(format!("n_singles {n_singles} < 2")));
    }
    let mut rng = Rng::substream(seed, 0x5ce0);
    let albedo = voronoi_albedo(&mut rng, params.size, params.n_albedo_regions, params.albedo_range);
    let (alpha, _) = chromaticity(&albedo, CHROMATICITY_EPS);
    let mut singles = Vec::with_capacity(n_singles);
    for _ in 0..n_singles {
        let light = sample_light(&mut rng, params.light_channel_range);
        let lam = blob_field(&mut rng, params.size, params);
        let raster = Raster3::from_fn(params.size, params.size, |x, y| {
            let r = albedo.pixel(x, y);
            let l = lam.get(x, y);
            [r[0] * l * light[0], r[1] * l * light[1], r[2] * l * light[2]]
        });
        singles.push(LinearImage::new(raster)?);
    }
    Ok(super::BenchScene { albedo_chrom: Some(alpha), singles })
}
