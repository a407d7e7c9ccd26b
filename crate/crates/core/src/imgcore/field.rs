//! Single-channel H×W scalar field (shading maps, relative-shading maps,
//! fit weights).

use super::{ImageError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyImage { height, width });
        }
        if data.len() != height * width {
            return Err(ImageError::BadBufferLength {
                got: data.len(),
                expected: height * width,
                height,
                width,
            });
        }
        Ok(ScalarField { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ScalarField { height, width, data: vec![0.0; height * width] }
    }

    pub fn splat(height: usize, width: usize, v: f64) -> Self {
        ScalarField { height, width, data: vec![v; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ScalarField { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
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
}
