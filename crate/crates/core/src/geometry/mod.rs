//! Triangle meshes, the global similarity-like transform, pinhole cameras and
//! the uniform graph Laplacian.

mod camera;
mod frame;
mod laplacian;
mod mesh;
pub mod primitives;
mod transform;

pub use camera::Camera;
pub use frame::{face_frame_quaternion, face_frame_vjp, face_normal_vjp, triangle_normal};
pub use laplacian::{build_laplacian, LaplacianMatrix};
pub use mesh::Mesh;
pub use transform::{apply_global_transform, GlobalTransform, TransformGrad};

/// Faces with area at or below this are degenerate.
pub const EPS_AREA: f64 = 1e-12;
/// Threshold on `1 + n_z` below which the face frame uses the fixed half-turn.
pub const EPS_ANTIPODAL: f64 = 1e-8;
