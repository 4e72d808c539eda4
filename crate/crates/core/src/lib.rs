//! Localized tilt-series reconstruction engine.
//!
//! Implements the full desk-scale pipeline: parallel-beam simulation of
//! tilt-series from synthetic phantoms, cosine-ramp filtering and filtered
//! backprojection, a bias-free per-slice set network trained to invert the
//! local patch-to-voxel map, a single-level biorthogonal wavelet fast path,
//! and Fourier shell correlation evaluation.

pub mod error;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod net;
pub mod sim;
pub mod wavelet;

pub use error::*;
pub use geometry::{
    extract_patch, extract_patch_stack, rotation_matrix, sample_bilinear, trajectory,
    DetectorSpec, PatchSpec, PatchStack, TiltSeries, TrajectoryPoint, Volume,
};
