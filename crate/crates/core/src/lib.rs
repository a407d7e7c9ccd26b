//! Separation of a photograph lit by two spectrally distinct illuminants into
//! the two images the scene would show under each light alone.
//!
//! The crate is organized around the inverse-imaging pipeline:
//!
//! - [`imgcore`] — linear-light image containers, chromaticities, masks,
//!   pyramids, finite-difference gradients, and PFM/PNG file I/O.
//! - [`formation`] — the forward two-light image formation model, procedural
//!   scene synthesis, flash/no-flash pair composition, and benchmark
//!   construction.
//! - [`physsep`] — the physics-based separation pipeline: albedo descaling,
//!   shading chromaticities, robust two-illuminant fitting, and recovery of
//!   the per-light images.
//! - [`losses`] — scale-invariant and permutation-invariant supervision
//!   losses with analytic gradients, plus the evaluation metric.
//! - [`nnstack`] — a miniature reverse-mode autodiff stack with the three
//!   cascaded sub-networks, a single-U-Net baseline, Adam, and the training
//!   loop.

// fixed three-channel loops index on purpose throughout the numeric code
#![allow(clippy::needless_range_loop)]

pub mod formation;
pub mod imgcore;
pub mod losses;
pub mod nnstack;
pub mod physsep;
pub mod rng;
