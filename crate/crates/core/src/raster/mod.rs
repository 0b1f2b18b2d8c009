//! Forward and backward rendering of anchored splats.
//!
//! Two renderers share one compositing core: the 3D path projects Gaussians
//! to the image plane, the 2D path intersects each camera ray with the
//! splat's plane. Both keep the per-pixel contributor lists needed by the
//! backward pass.

mod backward;
mod chain;
mod forward;
mod project;

pub use backward::{backward, ImageGrads, SplatGrads};
pub use chain::{chain_to_params, ParamGrads};
pub use forward::{render, render_2d, render_3d, Contributor, RenderOutput, RenderTape, SplatPlane};
pub use project::{
    energy_gradient, gaussian_energy, normalized_blur, project_camera_space, project_splat, projection_jacobian, EnergyGrad,
    PixelBox, ProjectedSplat,
};

/// Screen-space dilation added to projected covariances, in square pixels.
pub const BLUR_PX2: f64 = 0.3;
/// Compositing stops once transmittance falls below this.
pub const T_MIN: f64 = 1e-4;
pub const ALPHA_MAX: f64 = 0.999;
pub const Z_NEAR: f64 = 0.01;
pub const TILE_SIZE: usize = 16;
/// Contributors with `E` above this (3σ) are skipped.
pub const ENERGY_CUTOFF: f64 = 4.5;
pub const EPS_PARALLEL: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub struct RenderSettings {
    pub blur_px2: f64,
    pub t_min: f64,
    pub alpha_max: f64,
    pub z_near: f64,
    /// Third scale used when 2D splats go through the 3D renderer, as a
    /// fraction of the splat's mean in-plane scale.
    pub flat_thickness: f64,
    pub parallel: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            blur_px2: BLUR_PX2,
            t_min: T_MIN,
            alpha_max: ALPHA_MAX,
            z_near: Z_NEAR,
            flat_thickness: 1e-4,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

impl RenderSettings {
    pub fn single_threaded() -> Self {
        Self {
            parallel: false,
            ..Self::default()
        }
    }
}
