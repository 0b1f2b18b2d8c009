//! Mesh-anchored Gaussian splatting with joint surface deformation.
//!
//! Splats live on the faces of a fixed-topology triangle mesh (barycentric
//! position, normal offset, face-relative rotation). Rendering gradients are
//! routed to the mesh vertices, smoothed with a bi-Laplacian preconditioner
//! and combined with periodic vertex realignment. After fitting, per-face
//! diffuse, normal and displacement atlases are baked from the splats.

pub mod bake;
pub mod error;
pub mod geometry;
pub mod gradient_analysis;
pub mod image;
pub mod io;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod optim;
mod par;
pub mod raster;
pub mod splats;
pub mod synth;

pub use error::{Error, Result};
