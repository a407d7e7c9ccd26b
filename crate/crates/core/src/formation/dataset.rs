//! On-disk dataset layout: one directory per sample holding
//! `input.pfm, alpha.pfm, shading1.pfm, shading2.pfm, sep1.pfm, sep2.pfm,
//! mask.png, meta.json`.
//!
//! PFM stores 32-bit floats, so the input image is re-derived from the
//! quantized separated pair before writing; the additivity invariant then
//! survives the round trip to within one float rounding.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FormationError, LightPair, Result, SceneSample};
use crate::imgcore::{
    chromaticity, load_image, load_mask_png, save_image, save_mask_png, LinearImage, Transfer,
    CHROMATICITY_EPS,
};

pub const INPUT_FILE: &str = "input.pfm";
pub const ALPHA_FILE: &str = "alpha.pfm";
pub const SHADING_FILES: [&str; 2] = ["shading1.pfm", "shading2.pfm"];
pub const SEP_FILES: [&str; 2] = ["sep1.pfm", "sep2.pfm"];
pub const MASK_FILE: &str = "mask.png";
pub const META_FILE: &str = "meta.json";

/// Per-sample metadata stored next to the images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMeta {
    pub lights: [[f64; 3]; 2],
    pub seed: Option<u64>,
    /// Generator parameters, persisted verbatim for reproducibility.
    #[serde(default)]
    pub params: serde_json::Value,
}

fn io_wrap(path: &Path, e: std::io::Error) -> FormationError {
    FormationError::Image(crate::imgcore::ImageError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn quantize_f32(img: &LinearImage) -> LinearImage {
    let data: Vec<f64> = img.data().iter().map(|&v| v as f32 as f64).collect();
    LinearImage::from_parts(img.height(), img.width(), data).expect("quantization keeps invariants")
}

/// Write one sample directory. The separated images are quantized to f32
/// first and the stored input is their sum, keeping `input = sep1 + sep2`
/// exact to one rounding after reload.
pub fn save_sample(dir: impl AsRef<Path>, sample: &SceneSample, meta: &SampleMeta) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_wrap(dir, e))?;

    let sep1 = quantize_f32(&sample.separated[0]);
    let sep2 = quantize_f32(&sample.separated[1]);
    let input = LinearImage::new(sep1.raster().add(sep2.raster())?)?;

    save_image(&input, dir.join(INPUT_FILE), Transfer::Linear)?;
    save_image(&sample.albedo_chrom.as_linear(), dir.join(ALPHA_FILE), Transfer::Linear)?;
    save_image(&sample.shadings[0], dir.join(SHADING_FILES[0]), Transfer::Linear)?;
    save_image(&sample.shadings[1], dir.join(SHADING_FILES[1]), Transfer::Linear)?;
    save_image(&sep1, dir.join(SEP_FILES[0]), Transfer::Linear)?;
    save_image(&sep2, dir.join(SEP_FILES[1]), Transfer::Linear)?;
    save_mask_png(&sample.mask, dir.join(MASK_FILE))?;

    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| FormationError::BadParams(format!("meta serialization: {e}")))?;
    fs::write(&meta_path, json).map_err(|e| io_wrap(&meta_path, e))?;
    Ok(())
}

/// Load one sample directory back into memory.
pub fn load_sample(dir: impl AsRef<Path>) -> Result<(SceneSample, SampleMeta)> {
    let dir = dir.as_ref();
    let input = load_image(dir.join(INPUT_FILE), Transfer::Linear)?;
    let alpha_img = load_image(dir.join(ALPHA_FILE), Transfer::Linear)?;
    // stored alpha is f32-quantized; renormalize onto the simplex
    let (alpha, _) = chromaticity(&alpha_img, CHROMATICITY_EPS);
    let s1 = load_image(dir.join(SHADING_FILES[0]), Transfer::Linear)?;
    let s2 = load_image(dir.join(SHADING_FILES[1]), Transfer::Linear)?;
    let sep1 = load_image(dir.join(SEP_FILES[0]), Transfer::Linear)?;
    let sep2 = load_image(dir.join(SEP_FILES[1]), Transfer::Linear)?;
    let mask = load_mask_png(dir.join(MASK_FILE))?;

    let meta_path = dir.join(META_FILE);
    let meta_raw = fs::read_to_string(&meta_path).map_err(|e| io_wrap(&meta_path, e))?;
    let meta: SampleMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| FormationError::BadParams(format!("meta parse ({}): {e}", meta_path.display())))?;
    let lights = LightPair::new(meta.lights[0], meta.lights[1])?;

    let sample = SceneSample {
        input,
        albedo_chrom: alpha,
        shadings: [s1, s2],
        separated: [sep1, sep2],
        mask,
        lights,
    };
    sample.validate(1e-6)?;
    Ok((sample, meta))
}

/// Sorted list of sample subdirectories under a dataset root.
pub fn list_samples(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| io_wrap(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(META_FILE).exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Conventional zero-padded sample id.
pub fn sample_dir_name(index: usize) -> String {
    format!("{index:04}")
}

/// Load a whole dataset, sorted by sample id.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<(SceneSample, SampleMeta)>> {
    list_samples(root)?.iter().map(load_sample).collect()
}
