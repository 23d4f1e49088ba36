//! Spatial frequency modulation for dense feature maps.
//!
//! High-frequency regions of a feature map are enlarged by attention-driven
//! non-uniform resampling before downsampling ([`warp::modulate`]), and
//! restored afterwards by barycentric upsampling from the sampling positions
//! plus local relation refinement ([`demod`]). [`spectral`] measures how much
//! content sits above the Nyquist threshold at each step.

pub mod attention;
pub mod demod;
pub mod error;
pub mod objective;
pub mod scenes;
pub mod spectral;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
