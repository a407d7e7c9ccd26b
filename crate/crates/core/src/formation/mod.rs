//! Forward two-light image formation, procedural scene synthesis,
//! flash/no-flash pair composition, and benchmark construction.
//!
//! The formation model treats a pixel as albedo times a sum of per-light
//! shading contributions, each tinted by that light's RGB chromaticity. A
//! rendered or composed [`SceneSample`] bundles the mixed input together
//! with every ground-truth quantity the losses and the separation pipeline
//! are supervised against.

mod benchmark;
mod flashpair;
mod synth;

pub mod dataset;

pub use benchmark::{make_benchmark, white_balance, BenchScene, BenchmarkParams};
pub use flashpair::{compose_flash_pair, ComposeParams};
pub use synth::{gen_bench_scene, synth_scene, LightSampler, SynthParams};

use crate::imgcore::{
    chromaticity, valid_mask, ChromaticityMap, ImageError, LinearImage, Raster3, ScalarField,
    ValidMask, CHROMATICITY_EPS, MASK_TAU,
};

/// Tolerance for simplex checks on light chromaticities.
pub const LIGHT_SIMPLEX_TOL: f64 = 1e-6;

/// Guard used when dividing by reflectance chromaticity channels.
pub const ALPHA_DIV_EPS: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum FormationError {
    #[error("light chromaticity {0:?} is off the unit simplex")]
    LightOffSimplex([f64; 3]),
    #[error("light chromaticities coincide (L1 separation {sep:.3e})")]
    LightsCoincide { sep: f64 },
    #[error("could not sample lights with separation >= {min_sep} after {attempts} attempts")]
    UnsatisfiableLightSeparation { min_sep: f64, attempts: usize },
    #[error("could not satisfy z-extremes fraction {frac} after {attempts} attempts")]
    UnsatisfiableZExtremes { frac: f64, attempts: usize },
    #[error("synthesis parameter out of range: {0}")]
    BadParams(String),
    #[error("pure flash image carries no signal above {tau}")]
    NoFlashSignal { tau: f64 },
    #[error("ambient chromaticity is indistinguishable from the recolor target")]
    AmbientMatchesRecolor,
    #[error("benchmark needs non-empty scene and color lists")]
    EmptyBenchmarkInputs,
    #[error("benchmark scene {index} has {got} single-light images, need at least 2")]
    TooFewSingles { index: usize, got: usize },
    #[error("white balance degenerate: {0}")]
    DegenerateWhiteBalance(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, FormationError>;

/// Two distinct illuminant chromaticities on the unit simplex.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LightPair {
    l1: [f64; 3],
    l2: [f64; 3],
}

impl LightPair {
    pub fn new(l1: [f64; 3], l2: [f64; 3]) -> Result<Self> {
        for l in [l1, l2] {
            let sum: f64 = l.iter().sum();
            if (sum - 1.0).abs() > LIGHT_SIMPLEX_TOL || l.iter().any(|&c| c < 0.0) {
                return Err(FormationError::LightOffSimplex(l));
            }
        }
        let pair = LightPair { l1, l2 };
        if pair.separation() <= 0.0 {
            return Err(FormationError::LightsCoincide { sep: pair.separation() });
        }
        Ok(pair)
    }

    pub fn l1(&self) -> [f64; 3] {
        self.l1
    }

    pub fn l2(&self) -> [f64; 3] {
        self.l2
    }

    /// L1 distance between the two chromaticities.
    pub fn separation(&self) -> f64 {
        (0..3).map(|c| (self.l1[c] - self.l2[c]).abs()).sum()
    }

    pub fn swapped(&self) -> LightPair {
        LightPair { l1: self.l2, l2: self.l1 }
    }
}

/// Per-light shading-times-brightness maps.
#[derive(Debug, Clone)]
pub struct ShadingField {
    pub lambda1: ScalarField,
    pub lambda2: ScalarField,
}

impl ShadingField {
    pub fn new(lambda1: ScalarField, lambda2: ScalarField) -> Result<Self> {
        if lambda1.height() != lambda2.height() || lambda1.width() != lambda2.width() {
            return Err(ImageError::DimMismatch {
                left_h: lambda1.height(),
                left_w: lambda1.width(),
                right_h: lambda2.height(),
                right_w: lambda2.width(),
            }
            .into());
        }
        for f in [&lambda1, &lambda2] {
            if !f.is_finite() || f.min() < 0.0 {
                return Err(FormationError::BadParams("shading fields must be finite and non-negative".into()));
            }
        }
        Ok(ShadingField { lambda1, lambda2 })
    }
}

/// Bundled ground truth for one training or benchmark item.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub input: LinearImage,
    pub albedo_chrom: ChromaticityMap,
    /// Per-light illuminant shadings as RGB maps (relative shading times
    /// light chromaticity); their per-pixel channel total is 1 on valid
    /// pixels.
    pub shadings: [LinearImage; 2],
    pub separated: [LinearImage; 2],
    pub mask: ValidMask,
    pub lights: LightPair,
}

impl SceneSample {
    /// Check the construction invariants: matching dims, input equals the sum
    /// of the separated pair, shadings total one per valid pixel, and the
    /// separated images are recoverable from input and shadings.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (h, w) = (self.input.height(), self.input.width());
        for img in [
            &self.albedo_chrom.as_linear(),
            &self.shadings[0],
            &self.shadings[1],
            &self.separated[0],
            &self.separated[1],
        ] {
            if img.height() != h || img.width() != w {
                return Err(ImageError::DimMismatch {
                    left_h: h,
                    left_w: w,
                    right_h: img.height(),
                    right_w: img.width(),
                }
                .into());
            }
        }
        let sum = self.separated[0].raster().add(self.separated[1].raster())?;
        let err = self.input.raster().max_abs_diff(&sum)?;
        if err > tol {
            return Err(FormationError::BadParams(format!(
                "input differs from separated sum by {err:.3e} (tol {tol:.1e})"
            )));
        }
        for y in 0..h {
            for x in 0..w {
                if !self.mask.get(x, y) {
                    continue;
                }
                let s1 = self.shadings[0].pixel(x, y);
                let s2 = self.shadings[1].pixel(x, y);
                let total: f64 = (0..3).map(|c| s1[c] + s2[c]).sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(FormationError::BadParams(format!(
                        "shading channel total {total} at valid pixel ({x},{y})"
                    )));
                }
                let input = self.input.pixel(x, y);
                for c in 0..3 {
                    let denom = s1[c] + s2[c];
                    if denom > 1e-9 {
                        let recovered = input[c] * s1[c] / denom;
                        if (recovered - self.separated[0].pixel(x, y)[c]).abs() > tol.max(1e-6) {
                            return Err(FormationError::BadParams(format!(
                                "separated image inconsistent with shadings at ({x},{y}) channel {c}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Render the two-light formation model: per pixel and channel,
/// `input = albedo * (lambda1 * l1 + lambda2 * l2)`, with the per-light
/// terms kept as the separated ground truth.
pub fn render_two_light(
    albedo: &LinearImage,
    shadings: &ShadingField,
    lights: &LightPair,
) -> Result<SceneSample> {
    render_two_light_with_tau(albedo, shadings, lights, MASK_TAU)
}

pub fn render_two_light_with_tau(
    albedo: &LinearImage,
    shadings: &ShadingField,
    lights: &LightPair,
    tau: f64,
) -> Result<SceneSample> {
    let (h, w) = (albedo.height(), albedo.width());
    if shadings.lambda1.height() != h || shadings.lambda1.width() != w {
        return Err(ImageError::DimMismatch {
            left_h: h,
            left_w: w,
            right_h: shadings.lambda1.height(),
            right_w: shadings.lambda1.width(),
        }
        .into());
    }

    let (l1, l2) = (lights.l1(), lights.l2());
    let mut input = Raster3::zeros(h, w);
    let mut sep1 = Raster3::zeros(h, w);
    let mut sep2 = Raster3::zeros(h, w);
    let mut s1 = Raster3::zeros(h, w);
    let mut s2 = Raster3::zeros(h, w);
    let mut lam_valid = vec![false; h * w];

    for y in 0..h {
        for x in 0..w {
            let r = albedo.pixel(x, y);
            let (la, lb) = (shadings.lambda1.get(x, y), shadings.lambda2.get(x, y));
            let mut in_px = [0.0; 3];
            let mut s1_px = [0.0; 3];
            let mut s2_px = [0.0; 3];
            for c in 0..3 {
                s1_px[c] = r[c] * la * l1[c];
                s2_px[c] = r[c] * lb * l2[c];
                in_px[c] = s1_px[c] + s2_px[c];
            }
            sep1.set_pixel(x, y, s1_px);
            sep2.set_pixel(x, y, s2_px);
            input.set_pixel(x, y, in_px);

            let lam_sum = la + lb;
            if lam_sum > 0.0 {
                lam_valid[y * w + x] = true;
                let (z1, z2) = (la / lam_sum, lb / lam_sum);
                s1.set_pixel(x, y, [z1 * l1[0], z1 * l1[1], z1 * l1[2]]);
                s2.set_pixel(x, y, [z2 * l2[0], z2 * l2[1], z2 * l2[2]]);
            }
        }
    }

    let input = LinearImage::new(input)?;
    let (alpha, alpha_mask) = chromaticity(albedo, CHROMATICITY_EPS);
    let bright = valid_mask(&input, tau);
    let lam_mask = ValidMask::new(h, w, lam_valid)?;
    let mask = bright.and(&alpha_mask)?.and(&lam_mask)?;

    let sample = SceneSample {
        input,
        albedo_chrom: alpha,
        shadings: [LinearImage::new(s1)?, LinearImage::new(s2)?],
        separated: [LinearImage::new(sep1)?, LinearImage::new(sep2)?],
        mask,
        lights: *lights,
    };
    debug_assert!(sample.validate(1e-9).is_ok());
    Ok(sample)
}

/// Recover per-light illuminant-shading maps from a pair of separated images
/// and the reflectance chromaticity: descale each separated image by alpha
/// and normalize by the total descaled energy. Returns the two RGB shading
/// maps and the mask of pixels where the normalization was well posed.
///
/// For a scene that exactly follows the formation model this reproduces
/// `z_i * l_i` per pixel.
pub fn per_light_shadings(
    sep1: &LinearImage,
    sep2: &LinearImage,
    alpha: &ChromaticityMap,
    alpha_eps: f64,
) -> Result<(LinearImage, LinearImage, ValidMask)> {
    sep1.raster().same_dims(sep2.raster())?;
    sep1.raster().same_dims(alpha.raster())?;
    let (h, w) = (sep1.height(), sep1.width());
    let mut s1 = Raster3::zeros(h, w);
    let mut s2 = Raster3::zeros(h, w);
    let mut bits = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let a = alpha.pixel(x, y);
            let p1 = sep1.pixel(x, y);
            let p2 = sep2.pixel(x, y);
            let mut b1 = [0.0; 3];
            let mut b2 = [0.0; 3];
            let mut total = 0.0;
            for c in 0..3 {
                let d = a[c].max(alpha_eps);
                b1[c] = p1[c] / d;
                b2[c] = p2[c] / d;
                total += b1[c] + b2[c];
            }
            if total > CHROMATICITY_EPS {
                bits[y * w + x] = true;
                s1.set_pixel(x, y, [b1[0] / total, b1[1] / total, b1[2] / total]);
                s2.set_pixel(x, y, [b2[0] / total, b2[1] / total, b2[2] / total]);
            }
        }
    }
    Ok((LinearImage::new(s1)?, LinearImage::new(s2)?, ValidMask::new(h, w, bits)?))
}
