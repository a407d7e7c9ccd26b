//! Dense NCHW tensor with conversions to and from the f64 raster type the
//! physics pipeline and losses work on.

use super::scalar::Scalar;
use super::{NnError, Result};
use crate::imgcore::Raster3;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![T::ZERO; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NnError::ShapeMismatch(format!(
                "buffer of {} values for shape {shape:?} (expected {expected})",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.idx(n, c, y, x);
        self.data[i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect() }
    }

    pub fn scale_in_place(&mut self, k: T) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    pub fn add_in_place(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(NnError::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}

/// Single-image (N=1, C=3) tensor from a raster.
pub fn raster_to_tensor<T: Scalar>(r: &Raster3) -> Tensor<T> {
    let (h, w) = (r.height(), r.width());
    let mut t = Tensor::zeros([1, 3, h, w]);
    for y in 0..h {
        for x in 0..w {
            let px = r.pixel(x, y);
            for c in 0..3 {
                t.set(0, c, y, x, T::from_f64(px[c]));
            }
        }
    }
    t
}

/// Channels `[c0, c0+3)` of a single-image tensor as a raster.
pub fn tensor_to_raster<T: Scalar>(t: &Tensor<T>, c0: usize) -> Result<Raster3> {
    let [n, c, h, w] = t.shape();
    if n != 1 || c0 + 3 > c {
        return Err(NnError::ShapeMismatch(format!(
            "cannot take channels {c0}..{} of shape {:?} as an image",
            c0 + 3,
            t.shape()
        )));
    }
    let mut r = Raster3::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            r.set_pixel(
                x,
                y,
                [
                    t.at(0, c0, y, x).to_f64(),
                    t.at(0, c0 + 1, y, x).to_f64(),
                    t.at(0, c0 + 2, y, x).to_f64(),
                ],
            );
        }
    }
    Ok(r)
}

/// Stack two rasters into a single (1, 6, H, W) tensor.
pub fn pair_to_tensor<T: Scalar>(a: &Raster3, b: &Raster3) -> Result<Tensor<T>> {
    a.same_dims(b).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
    let (h, w) = (a.height(), a.width());
    let mut t = Tensor::zeros([1, 6, h, w]);
    for y in 0..h {
        for x in 0..w {
            let pa = a.pixel(x, y);
            let pb = b.pixel(x, y);
            for c in 0..3 {
                t.set(0, c, y, x, T::from_f64(pa[c]));
                t.set(0, c + 3, y, x, T::from_f64(pb[c]));
            }
        }
    }
    Ok(t)
}
