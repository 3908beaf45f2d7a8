//! Evolving surface finite elements for mean curvature flow coupled to a
//! diffusion equation on the moving surface.
//!
//! The surface, its normal field, normal velocity (or mean curvature) and the
//! surface concentration are all finite element unknowns on a moving
//! triangulation; time stepping uses linearly implicit BDF methods that only
//! require a few symmetric positive definite solves per step.

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod stepper;
pub mod vec3;

pub use error::{Error, Result};
