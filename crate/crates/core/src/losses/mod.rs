//! Supervision losses and the evaluation metric: a scale-invariant
//! chromaticity loss with multi-scale gradient matching, permutation-min
//! shading and separation losses, and the scale-aligned evaluation metric.
//!
//! Every loss returns its analytic gradient with respect to the prediction.
//! The least-squares scale factors are detached: gradients are taken with
//! the scale held fixed, matching how the factors are used as preprocessing
//! constants during training. Masked pixels contribute exactly zero to both
//! value and gradient.
//!
//! Multi-scale terms run over the shared pyramid with level 0 at full
//! resolution; a gradient position only counts when both pixels of the
//! forward difference are valid at that level, and levels whose pooled mask
//! is empty are skipped.

use serde::{Deserialize, Serialize};

use crate::imgcore::{
    build_mask_pyramid, build_pyramid, grad_fd, ImageError, MaskPyramid, Pyramid, Raster3,
    ValidMask,
};

/// Default pyramid depth for the multi-scale terms.
pub const DEFAULT_LEVELS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("loss requires at least one valid pixel")]
    EmptyMask,
    #[error("degenerate scale: ground truth has zero energy over the valid pixels")]
    DegenerateScale,
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Which global scale a [`ScaleFactor`] compensates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Alpha,
    Shading,
    Separation,
}

/// A closed-form least-squares scale, treated as a constant by gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub value: f64,
    pub kind: ScaleKind,
}

/// Pairing of predictions to ground truth chosen by a permutation-min loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Permutation {
    Identity,
    Swapped,
}

impl Permutation {
    /// Ground-truth index matched to prediction `i` under this pairing.
    pub fn gt_index(&self, pred_index: usize) -> usize {
        match self {
            Permutation::Identity => pred_index,
            Permutation::Swapped => 1 - pred_index,
        }
    }
}

/// Mask pyramid shared by the losses of one sample.
#[derive(Debug, Clone)]
pub struct LossContext {
    masks: MaskPyramid,
}

impl LossContext {
    pub fn new(mask: &ValidMask, levels: usize) -> Result<Self> {
        if mask.count() == 0 {
            return Err(LossError::EmptyMask);
        }
        Ok(LossContext { masks: build_mask_pyramid(mask, levels)? })
    }

    pub fn levels(&self) -> usize {
        self.masks.depth()
    }

    /// Valid-pixel count at full resolution.
    pub fn valid_count(&self) -> usize {
        self.masks.levels[0].count()
    }

    pub fn mask(&self, level: usize) -> &ValidMask {
        &self.masks.levels[level]
    }
}

/// Closed-form least-squares scale `c = <pred,gt> / <gt,gt>` over the valid
/// pixels, all channels pooled.
pub fn lsq_scale(pred: &Raster3, gt: &Raster3, mask: &ValidMask, kind: ScaleKind) -> Result<ScaleFactor> {
    pred.same_dims(gt)?;
    if mask.count() == 0 {
        return Err(LossError::EmptyMask);
    }
    let w = pred.width();
    let mut num = 0.0;
    let mut den = 0.0;
    for y in 0..pred.height() {
        for x in 0..w {
            if mask.get(x, y) {
                let p = pred.pixel(x, y);
                let g = gt.pixel(x, y);
                for c in 0..3 {
                    num += p[c] * g[c];
                    den += g[c] * g[c];
                }
            }
        }
    }
    if den <= 0.0 {
        return Err(LossError::DegenerateScale);
    }
    Ok(ScaleFactor { value: num / den, kind })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Norm {
    L1,
    L2Squared,
}

/// Masked data term at full resolution: mean over valid pixels of the
/// per-pixel channel-summed difference norm against `c * gt`. Accumulates
/// the gradient with respect to `pred` into `grad`.
fn data_term(
    pred: &Raster3,
    gt: &Raster3,
    c: f64,
    mask: &ValidMask,
    norm: Norm,
    grad: Option<&mut Raster3>,
) -> f64 {
    let m = mask.count() as f64;
    let w = pred.width();
    let mut value = 0.0;
    let mut grad = grad;
    for y in 0..pred.height() {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let p = pred.pixel(x, y);
            let g = gt.pixel(x, y);
            for ch in 0..3 {
                let d = p[ch] - c * g[ch];
                match norm {
                    Norm::L1 => {
                        value += d.abs();
                        if let Some(gr) = grad.as_deref_mut() {
                            let i = gr.idx(x, y) + ch;
                            gr.data_mut()[i] += sign(d) / m;
                        }
                    }
                    Norm::L2Squared => {
                        value += d * d;
                        if let Some(gr) = grad.as_deref_mut() {
                            let i = gr.idx(x, y) + ch;
                            gr.data_mut()[i] += 2.0 * d / m;
                        }
                    }
                }
            }
        }
    }
    value / m
}

/// Adjoint of [`crate::imgcore::downsample_avg2`]: distribute each coarse
/// gradient equally over its source block.
fn upsample_adjoint(grad_coarse: &Raster3, fine_h: usize, fine_w: usize) -> Raster3 {
    let mut out = Raster3::zeros(fine_h, fine_w);
    let (ch, cw) = (grad_coarse.height(), grad_coarse.width());
    for oy in 0..ch {
        for ox in 0..cw {
            // block size matches the forward pool at the edges
            let bh = if oy * 2 + 1 < fine_h { 2 } else { 1 };
            let bw = if ox * 2 + 1 < fine_w { 2 } else { 1 };
            let n = (bh * bw) as f64;
            let g = grad_coarse.pixel(ox, oy);
            for dy in 0..bh {
                for dx in 0..bw {
                    let (y, x) = (oy * 2 + dy, ox * 2 + dx);
                    let i = out.idx(x, y);
                    for c in 0..3 {
                        out.data_mut()[i + c] += g[c] / n;
                    }
                }
            }
        }
    }
    out
}

/// Multi-scale gradient term over all pyramid levels. A position counts in
/// the x (resp. y) direction only when both forward-difference endpoints are
/// valid at that level; empty levels contribute nothing. Returns the value
/// and, when requested, the gradient with respect to the full-resolution
/// prediction.
fn grad_term(
    pred_pyr: &Pyramid,
    gt_pyr: &Pyramid,
    c: f64,
    ctx: &LossContext,
    norm: Norm,
    want_grad: bool,
) -> (f64, Option<Raster3>) {
    let levels = ctx.levels();
    let mut value = 0.0;
    // per-level local gradients, folded down to level 0 afterwards
    let mut local: Vec<Option<Raster3>> = vec![None; levels];

    for t in 0..levels {
        let mask = ctx.mask(t);
        let mt = mask.count();
        if mt == 0 {
            continue;
        }
        let mt = mt as f64;
        let p = &pred_pyr.levels[t];
        let g = &gt_pyr.levels[t];
        let (h, w) = (p.height(), p.width());
        let (pgx, pgy) = grad_fd(p);
        let (ggx, ggy) = grad_fd(g);
        let mut lg = if want_grad { Some(Raster3::zeros(h, w)) } else { None };

        let add_dir = |dpx: [f64; 3],
                           dgx: [f64; 3],
                           lo: (usize, usize),
                           hi: (usize, usize),
                           lg: &mut Option<Raster3>,
                           value: &mut f64| {
            for ch in 0..3 {
                let d = dpx[ch] - c * dgx[ch];
                match norm {
                    Norm::L1 => {
                        *value += d.abs() / mt;
                        if let Some(lg) = lg.as_mut() {
                            let s = sign(d) / mt;
                            let i_hi = lg.idx(hi.0, hi.1) + ch;
                            let i_lo = lg.idx(lo.0, lo.1) + ch;
                            lg.data_mut()[i_hi] += s;
                            lg.data_mut()[i_lo] -= s;
                        }
                    }
                    Norm::L2Squared => {
                        *value += d * d / mt;
                        if let Some(lg) = lg.as_mut() {
                            let s = 2.0 * d / mt;
                            let i_hi = lg.idx(hi.0, hi.1) + ch;
                            let i_lo = lg.idx(lo.0, lo.1) + ch;
                            lg.data_mut()[i_hi] += s;
                            lg.data_mut()[i_lo] -= s;
                        }
                    }
                }
            }
        };

        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                if x + 1 < w && mask.get(x + 1, y) {
                    add_dir(pgx.pixel(x, y), ggx.pixel(x, y), (x, y), (x + 1, y), &mut lg, &mut value);
                }
                if y + 1 < h && mask.get(x, y + 1) {
                    add_dir(pgy.pixel(x, y), ggy.pixel(x, y), (x, y), (x, y + 1), &mut lg, &mut value);
                }
            }
        }
        local[t] = lg;
    }

    if !want_grad {
        return (value, None);
    }

    // fold level gradients down through the pooling adjoints
    let mut carry: Option<Raster3> = None;
    for t in (1..levels).rev() {
        let acc = match (carry.take(), local[t].take()) {
            (Some(c), Some(l)) => c.add(&l).expect("same level dims"),
            (Some(c), None) => c,
            (None, Some(l)) => l,
            (None, None) => continue,
        };
        let (fh, fw) = (pred_pyr.levels[t - 1].height(), pred_pyr.levels[t - 1].width());
        carry = Some(upsample_adjoint(&acc, fh, fw));
    }
    let g0 = match (carry, local[0].take()) {
        (Some(c), Some(l)) => c.add(&l).expect("level 0 dims"),
        (Some(c), None) => c,
        (None, Some(l)) => l,
        (None, None) => Raster3::zeros(pred_pyr.levels[0].height(), pred_pyr.levels[0].width()),
    };
    (value, Some(g0))
}

/// Chromaticity-loss output: value, gradient with respect to the
/// prediction, and the detached scale used.
#[derive(Debug, Clone)]
pub struct ChromLossOut {
    pub value: f64,
    pub grad: Raster3,
    pub scale: ScaleFactor,
}

/// Scale-invariant chromaticity loss: masked mean L1 data term plus
/// multi-scale L1 gradient terms, with the scale fitted by least squares on
/// the full-resolution data.
pub fn chrom_loss(pred: &Raster3, gt: &Raster3, ctx: &LossContext) -> Result<ChromLossOut> {
    let scale = lsq_scale(pred, gt, ctx.mask(0), ScaleKind::Alpha)?;
    let (value, grad) = chrom_loss_at_scale(pred, gt, scale.value, ctx)?;
    Ok(ChromLossOut { value, grad, scale })
}

/// Chromaticity loss with the scale frozen at `c` (the function the
/// detached-scale gradient actually differentiates).
pub fn chrom_loss_at_scale(
    pred: &Raster3,
    gt: &Raster3,
    c: f64,
    ctx: &LossContext,
) -> Result<(f64, Raster3)> {
    pred.same_dims(gt)?;
    let mut grad = Raster3::zeros(pred.height(), pred.width());
    let data = data_term(pred, gt, c, ctx.mask(0), Norm::L1, Some(&mut grad));
    let pred_pyr = build_pyramid(pred, ctx.levels())?;
    let gt_pyr = build_pyramid(gt, ctx.levels())?;
    let (gval, ggrad) = grad_term(&pred_pyr, &gt_pyr, c, ctx, Norm::L1, true);
    let grad = grad.add(&ggrad.expect("grad requested"))?;
    Ok((data + gval, grad))
}

/// Output of a permutation-min pair loss.
#[derive(Debug, Clone)]
pub struct PairLossOut {
    pub value: f64,
    /// Gradient with respect to each prediction; contributions of the losing
    /// pairing are discarded.
    pub grads: [Raster3; 2],
    pub permutation: Permutation,
    /// Detached scales of the winning terms, indexed by prediction.
    pub scales: [f64; 2],
}

fn pair_scales(
    pred: [&Raster3; 2],
    gt: [&Raster3; 2],
    mask: &ValidMask,
    kind: ScaleKind,
) -> Result<[[f64; 2]; 2]> {
    let mut scales = [[0.0; 2]; 2];
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            scales[i][j] = lsq_scale(p, g, mask, kind)?.value;
        }
    }
    Ok(scales)
}

/// Shading loss: per pairing, a masked mean squared data term plus
/// multi-scale squared gradient terms; the returned loss is the minimum over
/// the two prediction-to-truth pairings and gradients flow only through the
/// winner. Ties resolve to the identity pairing.
pub fn shading_loss(pred: [&Raster3; 2], gt: [&Raster3; 2], ctx: &LossContext) -> Result<PairLossOut> {
    let scales = pair_scales(pred, gt, ctx.mask(0), ScaleKind::Shading)?;
    shading_loss_at_scales(pred, gt, scales, ctx)
}

/// Shading loss with all four pairing scales frozen.
pub fn shading_loss_at_scales(
    pred: [&Raster3; 2],
    gt: [&Raster3; 2],
    scales: [[f64; 2]; 2],
    ctx: &LossContext,
) -> Result<PairLossOut> {
    let pred_pyrs = [build_pyramid(pred[0], ctx.levels())?, build_pyramid(pred[1], ctx.levels())?];
    let gt_pyrs = [build_pyramid(gt[0], ctx.levels())?, build_pyramid(gt[1], ctx.levels())?];

    // term (i, j): value and gradient wrt pred_i
    let mut values = [[0.0; 2]; 2];
    let mut grads: Vec<Vec<Raster3>> = Vec::with_capacity(2);
    for i in 0..2 {
        let mut row = Vec::with_capacity(2);
        for j in 0..2 {
            let c = scales[i][j];
            let mut g = Raster3::zeros(pred[i].height(), pred[i].width());
            let data = data_term(pred[i], gt[j], c, ctx.mask(0), Norm::L2Squared, Some(&mut g));
            let (gv, gg) = grad_term(&pred_pyrs[i], &gt_pyrs[j], c, ctx, Norm::L2Squared, true);
            values[i][j] = data + gv;
            row.push(g.add(&gg.expect("grad requested"))?);
        }
        grads.push(row);
    }

    finish_pair_loss(values, grads, scales)
}

/// Separation loss: masked mean L1 data term per pairing, minimum over the
/// two pairings, gradients through the winner only.
pub fn separation_loss(pred: [&Raster3; 2], gt: [&Raster3; 2], ctx: &LossContext) -> Result<PairLossOut> {
    let scales = pair_scales(pred, gt, ctx.mask(0), ScaleKind::Separation)?;
    separation_loss_at_scales(pred, gt, scales, ctx)
}

/// Separation loss with all four pairing scales frozen.
pub fn separation_loss_at_scales(
    pred: [&Raster3; 2],
    gt: [&Raster3; 2],
    scales: [[f64; 2]; 2],
    ctx: &LossContext,
) -> Result<PairLossOut> {
    let mut values = [[0.0; 2]; 2];
    let mut grads: Vec<Vec<Raster3>> = Vec::with_capacity(2);
    for i in 0..2 {
        let mut row = Vec::with_capacity(2);
        for j in 0..2 {
            let mut g = Raster3::zeros(pred[i].height(), pred[i].width());
            values[i][j] = data_term(pred[i], gt[j], scales[i][j], ctx.mask(0), Norm::L1, Some(&mut g));
            row.push(g);
        }
        grads.push(row);
    }
    finish_pair_loss(values, grads, scales)
}

fn finish_pair_loss(
    values: [[f64; 2]; 2],
    mut grads: Vec<Vec<Raster3>>,
    scales: [[f64; 2]; 2],
) -> Result<PairLossOut> {
    let identity = values[0][0] + values[1][1];
    let swapped = values[0][1] + values[1][0];
    if identity <= swapped {
        let g1 = std::mem::replace(&mut grads[1][1], Raster3::zeros(1, 1));
        let g0 = std::mem::replace(&mut grads[0][0], Raster3::zeros(1, 1));
        Ok(PairLossOut {
            value: identity,
            grads: [g0, g1],
            permutation: Permutation::Identity,
            scales: [scales[0][0], scales[1][1]],
        })
    } else {
        let g1 = std::mem::replace(&mut grads[1][0], Raster3::zeros(1, 1));
        let g0 = std::mem::replace(&mut grads[0][1], Raster3::zeros(1, 1));
        Ok(PairLossOut {
            value: swapped,
            grads: [g0, g1],
            permutation: Permutation::Swapped,
            scales: [scales[0][1], scales[1][0]],
        })
    }
}

/// Least-squares scale that maps the prediction onto the ground truth:
/// `argmin_c ||c * pred - gt||^2`. Zero when the prediction has no energy,
/// so an all-zero prediction is charged the full ground-truth magnitude
/// rather than scored as perfect.
fn align_scale(pred: &Raster3, gt: &Raster3, mask: &ValidMask) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if mask.get(x, y) {
                let p = pred.pixel(x, y);
                let g = gt.pixel(x, y);
                for c in 0..3 {
                    num += p[c] * g[c];
                    den += p[c] * p[c];
                }
            }
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Evaluation metric for separated image pairs: per pairing, the masked mean
/// L1 error after aligning the prediction's global scale to the ground
/// truth (or raw when `scale_align` is false); the reported value is the
/// smaller of the two pairing sums.
///
/// The alignment direction matters: the metric fits `c` on the prediction
/// (`||c * pred - gt||`), so brightness is forgiven but a degenerate
/// near-zero prediction still pays the full ground-truth error.
pub fn eval_metric(
    pred: [&Raster3; 2],
    gt: [&Raster3; 2],
    mask: &ValidMask,
    scale_align: bool,
) -> Result<f64> {
    if mask.count() == 0 {
        return Err(LossError::EmptyMask);
    }
    let mut e = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let c = if scale_align { align_scale(pred[i], gt[j], mask) } else { 1.0 };
            // ||c * pred - gt|| via the shared kernel with arguments swapped
            e[i][j] = data_term(gt[j], pred[i], c, mask, Norm::L1, None);
        }
    }
    Ok((e[0][0] + e[1][1]).min(e[0][1] + e[1][0]))
}

/// Masked mean per-pixel L1 distance (used for chromaticity error reports).
pub fn masked_mean_l1(a: &Raster3, b: &Raster3, mask: &ValidMask) -> Result<f64> {
    a.same_dims(b)?;
    if mask.count() == 0 {
        return Err(LossError::EmptyMask);
    }
    Ok(data_term(a, b, 1.0, mask, Norm::L1, None))
}

#[cfg(test)]
mod tests;
