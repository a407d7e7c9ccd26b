//! Physics-based separation: descale by reflectance chromaticity, compute
//! shading chromaticities, fit the two-illuminant model, and recover the
//! per-light images.
//!
//! The pipeline follows the inversion of the formation model step by step.
//! Every stage is a pure function; the robust fit is deterministic so the
//! whole pipeline is golden-testable.

mod fit;

pub use fit::{fit_two_illuminant, FitMethod, FitOptions, TwoIlluminantFit};

use crate::imgcore::{
    chromaticity, valid_mask, ChromaticityMap, ImageError, LinearImage, Raster3, ScalarField,
    ValidMask, CHROMATICITY_EPS, MASK_TAU,
};

/// Guard on reflectance chromaticity channels when descaling.
pub const DESCALE_ALPHA_EPS: f64 = 1e-3;

/// Guard on the shading-sum denominator when separating.
pub const SEPARATE_SUM_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum PhyssepError {
    #[error("two-illuminant fit needs at least {need} valid pixels, got {got}")]
    TooFewValidPixels { got: usize, need: usize },
    #[error("invalid fit parameter: {0}")]
    BadParams(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, PhyssepError>;

/// Image divided channelwise by reflectance chromaticity, with the pixels
/// where the chromaticity had to be clamped flagged for exclusion.
#[derive(Debug, Clone)]
pub struct DescaledImage {
    pub values: LinearImage,
    /// True where at least one alpha channel was below the divide guard.
    pub clamped: ValidMask,
}

/// Divide out the albedo contribution: `beta = img / max(alpha, eps)`.
pub fn descale(img: &LinearImage, alpha: &ChromaticityMap, eps: f64) -> Result<DescaledImage> {
    if eps <= 0.0 {
        return Err(PhyssepError::BadParams(format!("descale eps {eps} must be positive")));
    }
    img.raster().same_dims(alpha.raster())?;
    let (h, w) = (img.height(), img.width());
    let mut out = Raster3::zeros(h, w);
    let mut clamped = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = img.pixel(x, y);
            let a = alpha.pixel(x, y);
            let mut px = [0.0; 3];
            for c in 0..3 {
                if a[c] < eps {
                    clamped[y * w + x] = true;
                }
                px[c] = i[c] / a[c].max(eps);
            }
            out.set_pixel(x, y, px);
        }
    }
    Ok(DescaledImage { values: LinearImage::new(out)?, clamped: ValidMask::new(h, w, clamped)? })
}

/// Normalize the descaled image per pixel to shading chromaticities.
/// Near-zero channel sums are masked invalid (and set neutral).
pub fn shading_chromaticity(beta: &DescaledImage) -> (ChromaticityMap, ValidMask) {
    chromaticity(&beta.values, CHROMATICITY_EPS)
}

/// Expand a fit into per-light RGB shading maps:
/// `S1 = z * l1`, `S2 = (1 - z) * l2` per pixel.
pub fn illuminant_shadings(fit: &TwoIlluminantFit) -> (LinearImage, LinearImage) {
    let (h, w) = (fit.z.height(), fit.z.width());
    let mut s1 = Raster3::zeros(h, w);
    let mut s2 = Raster3::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let z = fit.z.get(x, y);
            s1.set_pixel(x, y, [z * fit.l1[0], z * fit.l1[1], z * fit.l1[2]]);
            s2.set_pixel(x, y, [(1.0 - z) * fit.l2[0], (1.0 - z) * fit.l2[1], (1.0 - z) * fit.l2[2]]);
        }
    }
    (
        LinearImage::new(s1).expect("z in [0,1] and lights non-negative"),
        LinearImage::new(s2).expect("z in [0,1] and lights non-negative"),
    )
}

/// Split the input by the per-channel shading ratio:
/// `I_k = I * S_k / max(S1 + S2, eps)`.
///
/// Returns the two separated images and the mask of pixels where no channel
/// needed the denominator guard; on those pixels the outputs sum exactly to
/// the input.
pub fn separate(
    img: &LinearImage,
    s1: &LinearImage,
    s2: &LinearImage,
    eps: f64,
) -> Result<(LinearImage, LinearImage, ValidMask)> {
    img.raster().same_dims(s1.raster())?;
    img.raster().same_dims(s2.raster())?;
    let (h, w) = (img.height(), img.width());
    let mut i1 = Raster3::zeros(h, w);
    let mut i2 = Raster3::zeros(h, w);
    let mut unclamped = vec![true; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = img.pixel(x, y);
            let a = s1.pixel(x, y);
            let b = s2.pixel(x, y);
            let mut p1 = [0.0; 3];
            let mut p2 = [0.0; 3];
            for c in 0..3 {
                let denom = a[c] + b[c];
                if denom < eps {
                    unclamped[y * w + x] = false;
                }
                let denom = denom.max(eps);
                p1[c] = i[c] * a[c] / denom;
                p2[c] = i[c] * b[c] / denom;
            }
            i1.set_pixel(x, y, p1);
            i2.set_pixel(x, y, p2);
        }
    }
    Ok((LinearImage::new(i1)?, LinearImage::new(i2)?, ValidMask::new(h, w, unclamped)?))
}

/// Everything the full pipeline produces for one image.
#[derive(Debug, Clone)]
pub struct SeparationOutput {
    pub i1: LinearImage,
    pub i2: LinearImage,
    pub fit: TwoIlluminantFit,
    /// Pixels where no channel of the shading sum needed the guard; the
    /// separated pair sums exactly to the input there.
    pub unclamped: ValidMask,
}

/// Full pipeline: descale by the given reflectance chromaticity, compute
/// shading chromaticities, fit the two-illuminant model with luminance
/// weights, and separate. Dark, clamped, or chromaticity-degenerate pixels
/// are excluded from the fit.
pub fn separate_with_chrom(
    img: &LinearImage,
    alpha: &ChromaticityMap,
    options: &FitOptions,
) -> Result<(LinearImage, LinearImage, TwoIlluminantFit)> {
    let out = separate_with_chrom_full(img, alpha, options)?;
    Ok((out.i1, out.i2, out.fit))
}

/// [`separate_with_chrom`] with the separation-guard mask included.
pub fn separate_with_chrom_full(
    img: &LinearImage,
    alpha: &ChromaticityMap,
    options: &FitOptions,
) -> Result<SeparationOutput> {
    let beta = descale(img, alpha, DESCALE_ALPHA_EPS)?;
    let (gamma, gamma_mask) = shading_chromaticity(&beta);

    let (h, w) = (img.height(), img.width());
    let bright = valid_mask(img, MASK_TAU);
    let not_clamped: Vec<bool> = (0..h * w).map(|i| !beta.clamped.bits()[i]).collect();
    let not_clamped = ValidMask::new(h, w, not_clamped)?;
    let mask = gamma_mask.and(&bright)?.and(&not_clamped)?;

    let weights = ScalarField::new(h, w, img.raster().luminance()).expect("dims match");
    let fit = fit_two_illuminant(&gamma, &weights, &mask, options)?;
    let (s1, s2) = illuminant_shadings(&fit);
    let (i1, i2, unclamped) = separate(img, &s1, &s2, SEPARATE_SUM_EPS)?;
    Ok(SeparationOutput { i1, i2, fit, unclamped })
}
