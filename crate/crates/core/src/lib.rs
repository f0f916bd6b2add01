//! Refraction-aware algebraic reconstruction for 2D terahertz tomography.
//!
//! The crate traces THz rays through objects with known interfaces (Snell
//! refraction, Fresnel reflection losses), synthesizes transmission and
//! path-difference sinograms, and reconstructs the complex refractive index
//! with a refraction-aware ART alongside conventional ART and filtered
//! backprojection baselines.
//!
//! Units: lengths are millimetres everywhere. Absorption coefficients are
//! held in mm⁻¹ internally and exchanged in cm⁻¹ at file boundaries.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fbp;
pub mod forward;
pub mod geometry;
pub mod image;
pub mod model;
pub mod optics;
pub mod phantom;
pub mod raytrace;
pub mod recon;
pub mod vec2;

pub use error::{Error, Result};
pub use geometry::{InterfaceCurve, InterfaceSet, SurfaceHit};
pub use model::{GridSpec, IndexField, MaterialField, ScanGeometry};
pub use vec2::Vec2;
