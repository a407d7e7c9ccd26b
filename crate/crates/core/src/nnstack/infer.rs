//! Inference from a trained bundle: either the direct cascade output or the
//! physics route (predicted chromaticity fed to the exact separation
//! pipeline).

use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::nets::{forward_net, BoundParams, Role};
use super::tensor::{raster_to_tensor, tensor_to_raster};
use super::train::{ModelBundle, TrainMode};
use super::{NnError, Result};
use crate::imgcore::{chromaticity, ChromaticityMap, LinearImage, CHROMATICITY_EPS};
use crate::physsep::{separate_with_chrom, FitOptions, TwoIlluminantFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferMode {
    /// Run the trained cascade (or the single net) end to end.
    Direct,
    /// Run the chromaticity network, then the physics separation pipeline.
    Physics,
}

impl std::str::FromStr for InferMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" => Ok(InferMode::Direct),
            "physics" => Ok(InferMode::Physics),
            other => Err(format!("unknown inference mode '{other}', expected direct|physics")),
        }
    }
}

fn clamp_to_linear(r: crate::imgcore::Raster3) -> Result<LinearImage> {
    // softplus outputs are non-negative already; the clamp only guards f32
    // noise on the way back to f64
    Ok(LinearImage::new(r.map(|v| v.max(0.0)))?)
}

/// Predicted reflectance chromaticity from the bundle's chromaticity
/// network.
pub fn predict_chromaticity(bundle: &ModelBundle, img: &LinearImage) -> Result<ChromaticityMap> {
    let net = bundle
        .network(Role::ChromNet)
        .ok_or_else(|| NnError::RoleMismatch(format!("{} checkpoint has no chromnet", bundle.mode.as_str())))?;
    let mut g = Graph::<f32>::new();
    let x = g.leaf(raster_to_tensor(img.raster()), false);
    let bound = BoundParams::bind(&mut g, net, false);
    let out = forward_net(&mut g, Role::ChromNet, &bound, x)?;
    if !g.value(out).is_finite() {
        return Err(NnError::NonFinite { step: bundle.step, detail: "chromnet output".into() });
    }
    let raster = tensor_to_raster(g.value(out), 0)?;
    // renormalize away the f32 rounding before constructing the typed map
    let linear = clamp_to_linear(raster)?;
    Ok(chromaticity(&linear, CHROMATICITY_EPS).0)
}

/// Separate an image with a trained bundle. Physics mode also returns the
/// two-illuminant fit it used.
pub fn infer(
    bundle: &ModelBundle,
    img: &LinearImage,
    mode: InferMode,
    fit_options: &FitOptions,
) -> Result<(LinearImage, LinearImage, Option<TwoIlluminantFit>)> {
    match mode {
        InferMode::Physics => {
            if bundle.mode == TrainMode::SingleNet {
                return Err(NnError::RoleMismatch(
                    "physics inference needs a chromaticity network; singlenet has none".into(),
                ));
            }
            let alpha = predict_chromaticity(bundle, img)?;
            let (i1, i2, fit) = separate_with_chrom(img, &alpha, fit_options)?;
            Ok((i1, i2, Some(fit)))
        }
        InferMode::Direct => {
            let out = match bundle.mode {
                TrainMode::SingleNet => {
                    let net = bundle.network(Role::SingleNet).expect("mode owns singlenet");
                    let mut g = Graph::<f32>::new();
                    let x = g.leaf(raster_to_tensor(img.raster()), false);
                    let bound = BoundParams::bind(&mut g, net, false);
                    let out = forward_net(&mut g, Role::SingleNet, &bound, x)?;
                    g.value(out).clone()
                }
                TrainMode::Full | TrainMode::FinalOnly => {
                    let mut g = Graph::<f32>::new();
                    let x = g.leaf(raster_to_tensor(img.raster()), false);
                    let chrom = bundle.network(Role::ChromNet).expect("cascade owns chromnet");
                    let shad = bundle.network(Role::ShadingNet).expect("cascade owns shadingnet");
                    let sep = bundle.network(Role::SeparateNet).expect("cascade owns separatenet");
                    let bc = BoundParams::bind(&mut g, chrom, false);
                    let bs = BoundParams::bind(&mut g, shad, false);
                    let bp = BoundParams::bind(&mut g, sep, false);
                    let alpha = forward_net(&mut g, Role::ChromNet, &bc, x)?;
                    let shad_in = g.concat(x, alpha)?;
                    let shad_out = forward_net(&mut g, Role::ShadingNet, &bs, shad_in)?;
                    let sep_in = g.concat(shad_out, x)?;
                    let sep_out = forward_net(&mut g, Role::SeparateNet, &bp, sep_in)?;
                    g.value(sep_out).clone()
                }
                TrainMode::ChromOnly => {
                    return Err(NnError::RoleMismatch(
                        "direct inference needs separation networks; chrom_only has none".into(),
                    ))
                }
            };
            if !out.is_finite() {
                return Err(NnError::NonFinite { step: bundle.step, detail: "cascade output".into() });
            }
            let i1 = clamp_to_linear(tensor_to_raster(&out, 0)?)?;
            let i2 = clamp_to_linear(tensor_to_raster(&out, 3)?)?;
            Ok((i1, i2, None))
        }
    }
}
