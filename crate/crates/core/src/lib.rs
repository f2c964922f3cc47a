//! Thermal-infrared face recognition from subcutaneous vessel signatures.
//!
//! The pipeline segments the face, enhances fine detail with anisotropic
//! diffusion, localizes the face with an inverse compositional active
//! appearance model, warps it to a canonical frontal frame, extracts a
//! multi-scale vesselness signature and matches signatures by normalized
//! cross-correlation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aam;
pub mod enhancement;
pub mod error;
pub mod fit;
mod hashing;
pub mod imaging;
pub mod linalg;
pub mod pipeline;
pub mod recognition;
pub mod scalar;
pub mod segmentation;
pub mod synthetic;
pub mod vesselness;

pub use error::{Error, Result, Stage};
pub use scalar::Real;

pub type Image = imaging::ThermalImage<f64>;
pub type Image32 = imaging::ThermalImage<f32>;
pub type Landmarks = aam::LandmarkSet<f64>;
pub type Model = aam::Aam<f64>;
pub type Model32 = aam::Aam<f32>;
pub type Signature = recognition::Signature<f64>;
pub type Signature32 = recognition::Signature<f32>;
pub type Gallery = recognition::Gallery<f64>;
pub type Gallery32 = recognition::Gallery<f32>;
