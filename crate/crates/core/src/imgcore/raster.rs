//! Unvalidated three-channel raster with the elementwise algebra the rest of
//! the crate builds on. Signed values are allowed here; the validated
//! wrappers in `types` impose non-negativity / simplex constraints.

use super::{ImageError, Result};

/// Dense H×W×3 array of f64, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster3 {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Raster3 {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyImage { height, width });
        }
        let expected = height * width * 3;
        if data.len() != expected {
            return Err(ImageError::BadBufferLength { got: data.len(), expected, height, width });
        }
        Ok(Raster3 { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Raster3 { height, width, data: vec![0.0; height * width * 3] }
    }

    pub fn splat(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut r = Raster3::zeros(height, width);
        for px in r.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        r
    }

    /// Build from a per-pixel function of (x, y).
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Raster3 { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * 3
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = self.idx(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = self.idx(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &Raster3) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(ImageError::DimMismatch {
                left_h: self.height,
                left_w: self.width,
                right_h: other.height,
                right_w: other.width,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster3 {
        Raster3 {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two rasters of equal dims.
    pub fn zip_map(&self, other: &Raster3, f: impl Fn(f64, f64) -> f64) -> Result<Raster3> {
        self.same_dims(other)?;
        Ok(Raster3 {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Raster3) -> Result<Raster3> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Raster3) -> Result<Raster3> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Raster3) -> Result<Raster3> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Raster3 {
        self.map(|v| k * v)
    }

    /// Multiply every pixel by an RGB triple.
    pub fn tint(&self, rgb: [f64; 3]) -> Raster3 {
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(3) {
            px[0] *= rgb[0];
            px[1] *= rgb[1];
            px[2] *= rgb[2];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute channel difference against another raster.
    pub fn max_abs_diff(&self, other: &Raster3) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Per-pixel channel mean (luminance proxy), as an H×W vector.
    pub fn luminance(&self) -> Vec<f64> {
        self.data.chunks_exact(3).map(|px| (px[0] + px[1] + px[2]) / 3.0).collect()
    }
}
