//! Robust two-illuminant model fitting.
//!
//! Shading chromaticities of a two-light scene lie on the segment between
//! the two light chromaticities. Projected onto the (r, g) plane this is a
//! line-fitting problem: an IRLS total-least-squares fit with Tukey
//! biweights finds the line, percentile endpoints of the along-line
//! parameter give the two lights, and the normalized parameter is the
//! relative shading of light 1. A RANSAC initialization is available for
//! heavy-outlier inputs.

use serde::{Deserialize, Serialize};

use crate::imgcore::{ChromaticityMap, ScalarField, ValidMask};
use crate::rng::Rng;

use super::{PhyssepError, Result};

/// Tukey biweight scale in chromaticity units.
pub const TUKEY_C: f64 = 0.05;
/// Fixed IRLS iteration count (deterministic, no convergence test).
pub const IRLS_ITERS: usize = 10;
/// Percentile pair defining the light endpoints along the fitted line.
pub const ENDPOINT_PERCENTILES: (usize, usize) = (2, 98);
/// Spread of the along-line parameter below which the fit is degenerate.
pub const DEGENERACY_SPREAD: f64 = 0.02;
/// Minimum number of valid pixels the fit requires.
pub const MIN_VALID_PIXELS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMethod {
    /// Deterministic IRLS total-least-squares line fit (default).
    Irls,
    /// RANSAC line search followed by the IRLS refinement; for inputs with
    /// many gross outliers.
    Ransac { iterations: usize, inlier_threshold: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: FitMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { method: FitMethod::Irls }
    }
}

/// Result of fitting the two-illuminant model to shading chromaticities.
#[derive(Debug, Clone)]
pub struct TwoIlluminantFit {
    /// Chromaticity of light 1 (the z = 1 endpoint).
    pub l1: [f64; 3],
    /// Chromaticity of light 2 (the z = 0 endpoint); equals `l1` when the
    /// fit is degenerate.
    pub l2: [f64; 3],
    /// Relative shading of light 1 per pixel, clamped to [0, 1].
    pub z: ScalarField,
    pub inlier_mask: ValidMask,
    /// RMS distance between the observed chromaticities and the fitted
    /// model reconstruction, over inliers.
    pub residual_rms: f64,
    pub degenerate: bool,
}

impl TwoIlluminantFit {
    /// The fitted lights as a validated pair; `None` when degenerate.
    pub fn light_pair(&self) -> Option<crate::formation::LightPair> {
        if self.degenerate {
            None
        } else {
            crate::formation::LightPair::new(self.l1, self.l2).ok()
        }
    }

    #[cfg(test)]
    pub(crate) fn exact_for_test(l1: [f64; 3], l2: [f64; 3], z: ScalarField) -> Self {
        let (h, w) = (z.height(), z.width());
        TwoIlluminantFit {
            l1,
            l2,
            z,
            inlier_mask: ValidMask::all_true(h, w),
            residual_rms: 0.0,
            degenerate: false,
        }
    }
}

#[derive(Clone, Copy)]
struct Line {
    // centroid
    mx: f64,
    my: f64,
    // unit direction
    dx: f64,
    dy: f64,
}

impl Line {
    fn t(&self, p: (f64, f64)) -> f64 {
        (p.0 - self.mx) * self.dx + (p.1 - self.my) * self.dy
    }

    fn dist(&self, p: (f64, f64)) -> f64 {
        // perpendicular component
        ((p.0 - self.mx) * -self.dy + (p.1 - self.my) * self.dx).abs()
    }
}

fn tukey_weight(r: f64, c: f64) -> f64 {
    if r.abs() >= c {
        0.0
    } else {
        let u = r / c;
        let t = 1.0 - u * u;
        t * t
    }
}

/// Weighted total-least-squares line through 2-d points. Returns `None`
/// when the weighted point cloud has no spread (all points coincide).
fn weighted_tls(points: &[(f64, f64)], weights: &[f64]) -> Option<Line> {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return None;
    }
    let mut mx = 0.0;
    let mut my = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        mx += w * p.0;
        my += w * p.1;
    }
    mx /= wsum;
    my /= wsum;

    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        let (ux, uy) = (p.0 - mx, p.1 - my);
        cxx += w * ux * ux;
        cxy += w * ux * uy;
        cyy += w * uy * uy;
    }
    cxx /= wsum;
    cxy /= wsum;
    cyy /= wsum;

    let half_trace = 0.5 * (cxx + cyy);
    let half_diff = 0.5 * (cxx - cyy);
    let lambda_max = half_trace + (half_diff * half_diff + cxy * cxy).sqrt();
    if lambda_max <= 1e-18 {
        return None;
    }
    let (mut dx, mut dy) = if cxy.abs() > 1e-18 {
        (lambda_max - cyy, cxy)
    } else if cxx >= cyy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (dx * dx + dy * dy).sqrt();
    dx /= norm;
    dy /= norm;
    // canonical orientation so the fit is deterministic
    if dx < 0.0 || (dx == 0.0 && dy < 0.0) {
        dx = -dx;
        dy = -dy;
    }
    Some(Line { mx, my, dx, dy })
}

/// Nearest-rank percentile (integer percent) of an ascending-sorted slice.
fn percentile_sorted(sorted: &[f64], percent: usize) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (percent * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// Lift a point of the (r, g) plane back onto the RGB simplex, clamping
/// negatives and renormalizing.
fn lift_to_simplex(r: f64, g: f64) -> [f64; 3] {
    let b = 1.0 - r - g;
    let v = [r.max(0.0), g.max(0.0), b.max(0.0)];
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 {
        return [1.0 / 3.0; 3];
    }
    [v[0] / sum, v[1] / sum, v[2] / sum]
}

/// Fit the two-illuminant model to shading chromaticities.
///
/// `weights` (typically the input luminance) downweight dark, noisy pixels;
/// `mask` marks the pixels eligible for the fit. The relative-shading map is
/// produced for every pixel, valid or not.
pub fn fit_two_illuminant(
    gamma: &ChromaticityMap,
    weights: &ScalarField,
    mask: &ValidMask,
    options: &FitOptions,
) -> Result<TwoIlluminantFit> {
    let (h, w) = (gamma.height(), gamma.width());
    if weights.height() != h || weights.width() != w || mask.height() != h || mask.width() != w {
        return Err(PhyssepError::BadParams("gamma, weights, and mask dims must match".into()));
    }
    if mask.count() < MIN_VALID_PIXELS {
        return Err(PhyssepError::TooFewValidPixels { got: mask.count(), need: MIN_VALID_PIXELS });
    }

    // gather valid points in the (r, g) plane with their luminance weights
    let mut points = Vec::with_capacity(mask.count());
    let mut lums = Vec::with_capacity(mask.count());
    let mut pixel_index = Vec::with_capacity(mask.count());
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let px = gamma.pixel(x, y);
                points.push((px[0], px[1]));
                lums.push(weights.get(x, y).max(0.0));
                pixel_index.push(y * w + x);
            }
        }
    }

    let initial_tukey: Vec<f64> = match options.method {
        FitMethod::Irls => vec![1.0; points.len()],
        FitMethod::Ransac { iterations, inlier_threshold, seed } => {
            ransac_tukey_init(&points, &lums, iterations, inlier_threshold, seed)
        }
    };

    // IRLS: total-least-squares with luminance times Tukey weights
    let mut tukey = initial_tukey;
    let mut line: Option<Line> = None;
    for _ in 0..IRLS_ITERS {
        let combined: Vec<f64> = lums.iter().zip(&tukey).map(|(&l, &t)| l * t).collect();
        match weighted_tls(&points, &combined) {
            Some(l) => {
                tukey = points.iter().map(|&p| tukey_weight(l.dist(p), TUKEY_C)).collect();
                line = Some(l);
            }
            None => {
                line = None;
                break;
            }
        }
    }

    let line = match line {
        Some(l) => l,
        None => {
            // zero spread: every valid chromaticity identical
            let px = points[0];
            return Ok(degenerate_fit(gamma, mask, lift_to_simplex(px.0, px.1)));
        }
    };

    // inliers: valid pixels the final Tukey window still accepts
    let inlier_flags: Vec<bool> = tukey.iter().map(|&t| t > 0.0).collect();
    let mut inlier_t: Vec<f64> = points
        .iter()
        .zip(&inlier_flags)
        .filter(|(_, &keep)| keep)
        .map(|(&p, _)| line.t(p))
        .collect();
    if inlier_t.len() < 2 {
        let px = points[0];
        return Ok(degenerate_fit(gamma, mask, lift_to_simplex(px.0, px.1)));
    }
    inlier_t.sort_by(|a, b| a.partial_cmp(b).expect("finite t"));
    let t_lo = percentile_sorted(&inlier_t, ENDPOINT_PERCENTILES.0);
    let t_hi = percentile_sorted(&inlier_t, ENDPOINT_PERCENTILES.1);

    if t_hi - t_lo < DEGENERACY_SPREAD {
        let center = lift_to_simplex(line.mx, line.my);
        return Ok(degenerate_fit(gamma, mask, center));
    }

    let l1 = lift_to_simplex(line.mx + t_hi * line.dx, line.my + t_hi * line.dy);
    let l2 = lift_to_simplex(line.mx + t_lo * line.dx, line.my + t_lo * line.dy);
    if (0..3).map(|c| (l1[c] - l2[c]).abs()).sum::<f64>() < 1e-9 {
        return Ok(degenerate_fit(gamma, mask, l1));
    }

    // z over the whole image, clamped to [0, 1]
    let mut z = ScalarField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let px = gamma.pixel(x, y);
            let t = line.t((px[0], px[1]));
            z.set(x, y, ((t - t_lo) / (t_hi - t_lo)).clamp(0.0, 1.0));
        }
    }

    // model reconstruction residual over inliers
    let mut inlier_bits = vec![false; h * w];
    let mut sq_sum = 0.0;
    let mut n_in = 0usize;
    for (k, &idx) in pixel_index.iter().enumerate() {
        if inlier_flags[k] {
            inlier_bits[idx] = true;
            let (x, y) = (idx % w, idx / w);
            let px = gamma.pixel(x, y);
            let zv = z.get(x, y);
            let mut sq = 0.0;
            for c in 0..3 {
                let model = zv * l1[c] + (1.0 - zv) * l2[c];
                sq += (px[c] - model) * (px[c] - model);
            }
            sq_sum += sq;
            n_in += 1;
        }
    }
    let residual_rms = (sq_sum / n_in as f64).sqrt();

    Ok(TwoIlluminantFit {
        l1,
        l2,
        z,
        inlier_mask: ValidMask::new(h, w, inlier_bits).expect("dims match"),
        residual_rms,
        degenerate: false,
    })
}

fn degenerate_fit(gamma: &ChromaticityMap, mask: &ValidMask, light: [f64; 3]) -> TwoIlluminantFit {
    let (h, w) = (gamma.height(), gamma.width());
    TwoIlluminantFit {
        l1: light,
        l2: light,
        z: ScalarField::splat(h, w, 1.0),
        inlier_mask: mask.clone(),
        residual_rms: 0.0,
        degenerate: true,
    }
}

/// RANSAC over two-point line hypotheses; returns Tukey weights measured
/// from the best line, to seed the IRLS refinement.
fn ransac_tukey_init(
    points: &[(f64, f64)],
    lums: &[f64],
    iterations: usize,
    inlier_threshold: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    let mut best_score = -1.0;
    let mut best_line: Option<Line> = None;
    for _ in 0..iterations.max(1) {
        let i = rng.index(points.len());
        let j = rng.index(points.len());
        let (a, b) = (points[i], points[j]);
        let (mut dx, mut dy) = (b.0 - a.0, b.1 - a.1);
        let norm = (dx * dx + dy * dy).sqrt();
        if norm < 1e-12 {
            continue;
        }
        dx /= norm;
        dy /= norm;
        if dx < 0.0 || (dx == 0.0 && dy < 0.0) {
            dx = -dx;
            dy = -dy;
        }
        let line = Line { mx: a.0, my: a.1, dx, dy };
        let score: f64 = points
            .iter()
            .zip(lums)
            .filter(|(&p, _)| line.dist(p) < inlier_threshold)
            .map(|(_, &l)| l)
            .sum();
        if score > best_score {
            best_score = score;
            best_line = Some(line);
        }
    }
    match best_line {
        Some(line) => points.iter().map(|&p| tukey_weight(line.dist(p), TUKEY_C)).collect(),
        None => vec![1.0; points.len()],
    }
}
