//! Image containers, per-pixel color algebra, masks, pyramids,
//! finite-difference gradients, and image file I/O.
//!
//! Everything downstream of file I/O works in 64-bit linear radiance. Images
//! are immutable after construction and safe to share across threads.

mod field;
mod io;
mod ops;
mod raster;
mod types;

pub use field::ScalarField;
pub use io::{load_image, load_mask_png, save_image, save_mask_png, srgb_decode, srgb_encode, Transfer};
pub use ops::{build_mask_pyramid, build_pyramid, chromaticity, downsample_avg2, grad_fd, valid_mask};
pub use raster::Raster3;
pub use types::{ChromaticityMap, LinearImage, MaskPyramid, Pyramid, ValidMask};

/// Default threshold below which a pixel's channel sum is treated as
/// degenerate when normalizing to a chromaticity.
pub const CHROMATICITY_EPS: f64 = 1e-6;

/// Default "close to black" mask threshold in linear units.
pub const MASK_TAU: f64 = 0.02;

/// Tolerance on the per-pixel channel sum of a chromaticity map.
pub const SIMPLEX_TOL: f64 = 1e-5;

/// Errors from image construction, pyramid building, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {height}x{width}")]
    EmptyImage { height: usize, width: usize },
    #[error("pixel buffer has {got} values, expected {expected} for {height}x{width}x3")]
    BadBufferLength { got: usize, expected: usize, height: usize, width: usize },
    #[error("non-finite value {value} at pixel ({x},{y}) channel {channel}")]
    NonFinite { value: f64, x: usize, y: usize, channel: usize },
    #[error("negative value {value} at pixel ({x},{y}) channel {channel}")]
    Negative { value: f64, x: usize, y: usize, channel: usize },
    #[error("channel sum {sum} at pixel ({x},{y}) is off the unit simplex (tolerance {tol})")]
    OffSimplex { sum: f64, x: usize, y: usize, tol: f64 },
    #[error("dimension mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    DimMismatch { left_h: usize, left_w: usize, right_h: usize, right_w: usize },
    #[error("pyramid too deep: {levels} levels requested for {height}x{width}")]
    PyramidTooDeep { levels: usize, height: usize, width: usize },
    #[error("pyramid needs at least one level")]
    PyramidEmpty,
    #[error("unsupported image format for {path}: {detail}")]
    UnsupportedFormat { path: String, detail: String },
    #[error("malformed {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ImageError>;
