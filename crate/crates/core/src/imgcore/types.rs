//! Validated image types: linear radiance, chromaticity maps, masks, and
//! pyramids.

use super::raster::Raster3;
use super::{ImageError, Result, SIMPLEX_TOL};

/// Non-negative linear-radiance image. The universal pixel container for
/// inputs, albedo, shadings, and separated outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage(Raster3);

impl LinearImage {
    pub fn new(raster: Raster3) -> Result<Self> {
        for y in 0..raster.height() {
            for x in 0..raster.width() {
                let px = raster.pixel(x, y);
                for (c, &v) in px.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(ImageError::NonFinite { value: v, x, y, channel: c });
                    }
                    if v < 0.0 {
                        return Err(ImageError::Negative { value: v, x, y, channel: c });
                    }
                }
            }
        }
        Ok(LinearImage(raster))
    }

    pub fn from_parts(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        LinearImage::new(Raster3::new(height, width, data)?)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        LinearImage(Raster3::zeros(height, width))
    }

    pub fn splat(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        LinearImage::new(Raster3::splat(height, width, rgb))
    }

    pub fn raster(&self) -> &Raster3 {
        &self.0
    }

    pub fn into_raster(self) -> Raster3 {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.0.pixel(x, y)
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }
}

impl std::ops::Deref for LinearImage {
    type Target = Raster3;
    fn deref(&self) -> &Raster3 {
        &self.0
    }
}

/// Per-pixel RGB chromaticity: every pixel lies on the unit simplex
/// (non-negative channels summing to 1 within [`SIMPLEX_TOL`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaticityMap(Raster3);

impl ChromaticityMap {
    pub fn new(raster: Raster3) -> Result<Self> {
        for y in 0..raster.height() {
            for x in 0..raster.width() {
                let px = raster.pixel(x, y);
                for (c, &v) in px.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(ImageError::NonFinite { value: v, x, y, channel: c });
                    }
                    if v < 0.0 {
                        return Err(ImageError::Negative { value: v, x, y, channel: c });
                    }
                }
                let sum = px[0] + px[1] + px[2];
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(ImageError::OffSimplex { sum, x, y, tol: SIMPLEX_TOL });
                }
            }
        }
        Ok(ChromaticityMap(raster))
    }

    pub fn raster(&self) -> &Raster3 {
        &self.0
    }

    pub fn into_raster(self) -> Raster3 {
        self.0
    }

    /// View as a linear image (simplex values satisfy its invariants).
    pub fn as_linear(&self) -> LinearImage {
        LinearImage(self.0.clone())
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.0.pixel(x, y)
    }
}

impl std::ops::Deref for ChromaticityMap {
    type Target = Raster3;
    fn deref(&self) -> &Raster3 {
        &self.0
    }
}

/// H×W boolean validity mask with a cached count of true bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    count: usize,
}

impl ValidMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyImage { height, width });
        }
        if bits.len() != height * width {
            return Err(ImageError::BadBufferLength {
                got: bits.len(),
                expected: height * width,
                height,
                width,
            });
        }
        let count = bits.iter().filter(|&&b| b).count();
        Ok(ValidMask { height, width, bits, count })
    }

    pub fn all_true(height: usize, width: usize) -> Self {
        ValidMask { height, width, bits: vec![true; height * width], count: height * width }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of valid (true) pixels.
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Pixelwise AND of two masks of equal dims.
    pub fn and(&self, other: &ValidMask) -> Result<ValidMask> {
        if self.height != other.height || self.width != other.width {
            return Err(ImageError::DimMismatch {
                left_h: self.height,
                left_w: self.width,
                right_h: other.height,
                right_w: other.width,
            });
        }
        let bits: Vec<bool> = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect();
        ValidMask::new(self.height, self.width, bits)
    }
}

/// Multi-scale stack of rasters; level 0 is full resolution and each level
/// halves both dimensions (ceil) by 2x2 average pooling.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<Raster3>,
}

impl Pyramid {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

/// Mask pyramid matching [`Pyramid`]: a pooled pixel is valid only when the
/// whole source block was valid.
#[derive(Debug, Clone)]
pub struct MaskPyramid {
    pub levels: Vec<ValidMask>,
}

impl MaskPyramid {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}
