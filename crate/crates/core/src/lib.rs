//! Tactile features (contact, deformation volume, shear) from tracked marker
//! centroids, via a bounded Voronoi tessellation and a cubic surface fit.

pub mod calibration;
pub mod delaunay;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod pipeline;
pub mod point;
pub mod render;
pub mod shear;
pub mod simulator;
pub mod surface;
pub mod validation;

pub use error::{Error, Result};
pub use point::Vec2;
