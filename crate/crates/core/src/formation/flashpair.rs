//! Compose a two-light training sample from a flash/no-flash pair: the pure
//! flash image (flash minus no-flash) reads off the reflectance chromaticity
//! directly, and recoloring it synthesizes a second light with a known
//! chromaticity on top of the ambient image.

use serde::{Deserialize, Serialize};

use super::{per_light_shadings, FormationError, LightPair, Result, SceneSample, ALPHA_DIV_EPS};
use crate::imgcore::{chromaticity, valid_mask, LinearImage, Raster3, CHROMATICITY_EPS, MASK_TAU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComposeParams {
    /// Chromaticity of the physical flash; the pure flash image is divided
    /// by it channelwise before recoloring. Real flash spectra vary, so this
    /// is configurable; neutral by default.
    pub flash_chrom: [f64; 3],
    /// "Close to black" threshold applied to the pure flash image.
    pub mask_tau: f64,
}

impl Default for ComposeParams {
    fn default() -> Self {
        ComposeParams { flash_chrom: [1.0 / 3.0; 3], mask_tau: MASK_TAU }
    }
}

/// Compose a two-light sample: light 1 is the ambient (no-flash) image,
/// light 2 is the pure flash image re-tinted to `recolor` and scaled by
/// `gain`.
pub fn compose_flash_pair(
    flash: &LinearImage,
    noflash: &LinearImage,
    recolor: [f64; 3],
    gain: f64,
    params: &ComposeParams,
) -> Result<SceneSample> {
    flash.raster().same_dims(noflash.raster())?;
    let recolor_sum: f64 = recolor.iter().sum();
    if (recolor_sum - 1.0).abs() > super::LIGHT_SIMPLEX_TOL || recolor.iter().any(|&c| c < 0.0) {
        return Err(FormationError::LightOffSimplex(recolor));
    }
    if gain < 0.0 {
        return Err(FormationError::BadParams(format!("gain {gain} must be non-negative")));
    }
    if params.flash_chrom.iter().any(|&c| c <= 0.0) {
        return Err(FormationError::BadParams("flash chromaticity must be strictly positive".into()));
    }

    // pure flash: flash minus no-flash, clamped at zero
    let pure = LinearImage::new(flash.raster().zip_map(noflash.raster(), |f, n| (f - n).max(0.0))?)?;
    let pure_mask = valid_mask(&pure, params.mask_tau);
    if pure_mask.count() == 0 {
        return Err(FormationError::NoFlashSignal { tau: params.mask_tau });
    }

    let (alpha, alpha_mask) = chromaticity(&pure, CHROMATICITY_EPS);

    // second light: gain * recolor (x) (pure / flash_chrom)
    let (h, w) = (flash.height(), flash.width());
    let mut light2 = Raster3::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let p = pure.pixel(x, y);
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = gain * recolor[c] * p[c] / params.flash_chrom[c];
            }
            light2.set_pixel(x, y, px);
        }
    }
    let light2 = LinearImage::new(light2)?;

    let input = LinearImage::new(noflash.raster().add(light2.raster())?)?;

    // effective light chromaticities: recolor for the synthetic light, a
    // gray-world estimate for the ambient (neutral if the ambient is black)
    let ambient_chrom = match super::benchmark::white_balance(noflash, params.mask_tau) {
        Ok((_, est)) => est,
        Err(_) => [1.0 / 3.0; 3],
    };
    let sep: f64 = (0..3).map(|c| (ambient_chrom[c] - recolor[c]).abs()).sum();
    if sep < 1e-6 {
        return Err(FormationError::AmbientMatchesRecolor);
    }
    let lights = LightPair::new(ambient_chrom, recolor)?;

    let (s1, s2, shading_valid) = per_light_shadings(noflash, &light2, &alpha, ALPHA_DIV_EPS)?;
    let mask = pure_mask
        .and(&alpha_mask)?
        .and(&shading_valid)?
        .and(&valid_mask(&input, params.mask_tau))?;

    let sample = SceneSample {
        input,
        albedo_chrom: alpha,
        shadings: [s1, s2],
        separated: [noflash.clone(), light2],
        mask,
        lights,
    };
    debug_assert!(sample.validate(1e-9).is_ok());
    Ok(sample)
}
