//! Per-pixel chromaticity, finite-difference gradients, average-pool
//! downsampling, and pyramid construction.

use super::raster::Raster3;
use super::types::{ChromaticityMap, LinearImage, MaskPyramid, Pyramid, ValidMask};
use super::{ImageError, Result};

/// Normalize each pixel to unit channel sum. Pixels whose channel sum falls
/// below `eps` get the neutral chromaticity (1/3, 1/3, 1/3) and are marked
/// invalid in the returned mask; arithmetic stays total either way.
pub fn chromaticity(img: &LinearImage, eps: f64) -> (ChromaticityMap, ValidMask) {
    assert!(eps > 0.0, "chromaticity eps must be positive");
    let (h, w) = (img.height(), img.width());
    let mut out = Raster3::zeros(h, w);
    let mut bits = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let px = img.pixel(x, y);
            let sum = px[0] + px[1] + px[2];
            if sum < eps {
                out.set_pixel(x, y, [1.0 / 3.0; 3]);
            } else {
                out.set_pixel(x, y, [px[0] / sum, px[1] / sum, px[2] / sum]);
                bits[y * w + x] = true;
            }
        }
    }
    let map = ChromaticityMap::new(out).expect("normalized pixels lie on the simplex");
    let mask = ValidMask::new(h, w, bits).expect("mask dims match image");
    (map, mask)
}

/// Forward-difference gradients: gx(x,y) = f(x+1,y) - f(x,y) with zero on the
/// last column, gy analogous on rows.
pub fn grad_fd(img: &Raster3) -> (Raster3, Raster3) {
    let (h, w) = (img.height(), img.width());
    let mut gx = Raster3::zeros(h, w);
    let mut gy = Raster3::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let here = img.pixel(x, y);
            if x + 1 < w {
                let right = img.pixel(x + 1, y);
                gx.set_pixel(x, y, [right[0] - here[0], right[1] - here[1], right[2] - here[2]]);
            }
            if y + 1 < h {
                let down = img.pixel(x, y + 1);
                gy.set_pixel(x, y, [down[0] - here[0], down[1] - here[1], down[2] - here[2]]);
            }
        }
    }
    (gx, gy)
}

/// Non-overlapping 2x2 mean pooling; odd edges pool the remaining 1x2 / 2x1 /
/// 1x1 block. Output dims are ceil(h/2) x ceil(w/2).
pub fn downsample_avg2(img: &Raster3) -> Raster3 {
    let (h, w) = (img.height(), img.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Raster3::zeros(oh, ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = [0.0f64; 3];
            let mut n = 0.0;
            for dy in 0..2 {
                for dx in 0..2 {
                    let (y, x) = (oy * 2 + dy, ox * 2 + dx);
                    if y < h && x < w {
                        let px = img.pixel(x, y);
                        acc[0] += px[0];
                        acc[1] += px[1];
                        acc[2] += px[2];
                        n += 1.0;
                    }
                }
            }
            out.set_pixel(ox, oy, [acc[0] / n, acc[1] / n, acc[2] / n]);
        }
    }
    out
}

fn max_levels(height: usize, width: usize) -> usize {
    let min_dim = height.min(width);
    let log2 = usize::BITS as usize - 1 - min_dim.leading_zeros() as usize;
    log2.max(1)
}

/// Average-pooled pyramid with `levels` levels; level 0 is the input.
pub fn build_pyramid(img: &Raster3, levels: usize) -> Result<Pyramid> {
    if levels == 0 {
        return Err(ImageError::PyramidEmpty);
    }
    if levels > max_levels(img.height(), img.width()) {
        return Err(ImageError::PyramidTooDeep {
            levels,
            height: img.height(),
            width: img.width(),
        });
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for _ in 1..levels {
        let next = downsample_avg2(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

/// Mask pyramid pooled with the all-true AND rule: a pooled pixel is valid
/// only when every source pixel of its block is valid.
pub fn build_mask_pyramid(mask: &ValidMask, levels: usize) -> Result<MaskPyramid> {
    if levels == 0 {
        return Err(ImageError::PyramidEmpty);
    }
    if levels > max_levels(mask.height(), mask.width()) {
        return Err(ImageError::PyramidTooDeep {
            levels,
            height: mask.height(),
            width: mask.width(),
        });
    }
    let mut out = Vec::with_capacity(levels);
    out.push(mask.clone());
    for _ in 1..levels {
        let prev = out.last().expect("non-empty");
        let (h, w) = (prev.height(), prev.width());
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let mut bits = vec![false; oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut all = true;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (y, x) = (oy * 2 + dy, ox * 2 + dx);
                        if y < h && x < w {
                            all &= prev.get(x, y);
                        }
                    }
                }
                bits[oy * ow + ox] = all;
            }
        }
        out.push(ValidMask::new(oh, ow, bits)?);
    }
    Ok(MaskPyramid { levels: out })
}

/// Mark a pixel valid iff its max channel is at least `tau`.
pub fn valid_mask(img: &LinearImage, tau: f64) -> ValidMask {
    assert!(tau >= 0.0, "mask threshold must be non-negative");
    let (h, w) = (img.height(), img.width());
    let bits: Vec<bool> = (0..h * w)
        .map(|i| {
            let px = &img.data()[i * 3..i * 3 + 3];
            px[0].max(px[1]).max(px[2]) >= tau
        })
        .collect();
    ValidMask::new(h, w, bits).expect("mask dims match image")
}
