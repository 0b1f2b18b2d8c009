//! Training losses and their gradients.

mod geometric;
mod photometric;

pub use geometric::{bilaplacian_reg, depth_distortion_loss, depth_normals, normal_consistency_loss, ALPHA_MASK};
pub use photometric::{photo_loss, ssim_loss, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

use crate::error::Result;
use crate::geometry::LaplacianMatrix;
use crate::image::Image;
use crate::math::Vec3;
use crate::raster::{ImageGrads, RenderOutput, RenderTape};

/// Weights of the loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub photo: f64,
    pub ssim: f64,
    pub reg: f64,
    pub normal: f64,
    /// Already divided by the scene scale.
    pub dist: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            photo: 0.8,
            ssim: 0.2,
            reg: 0.0,
            normal: 0.05,
            dist: 10.0,
        }
    }
}

/// Which terms an iteration evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ActiveTerms {
    pub normal: bool,
    pub dist: bool,
}

/// Unweighted term values, their weighted total and the gradients the
/// backward pass needs (already weighted).
#[derive(Clone, Debug, Default)]
pub struct LossReport {
    pub photo: f64,
    pub ssim: f64,
    pub reg: f64,
    pub normal: f64,
    pub dist: f64,
    pub total: f64,
    pub color_grad: Option<Image>,
    pub normal_grad: Option<Image>,
    pub weight_grad: Option<Vec<f64>>,
    pub depth_grad: Option<Vec<f64>>,
    /// Regularizer gradient on template vertices.
    pub vertex_grad: Vec<Vec3>,
}

impl LossReport {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.photo * self.photo + w.ssim * self.ssim + w.reg * self.reg + w.normal * self.normal + w.dist * self.dist
    }

    pub fn csv_header() -> &'static str {
        "iteration,photo,ssim,reg,normal,dist,total"
    }

    pub fn csv_row(&self, iteration: usize) -> String {
        format!(
            "{iteration},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.photo, self.ssim, self.reg, self.normal, self.dist, self.total
        )
    }
}

impl LossReport {
    /// Image-space gradients for the rasterizer backward pass.
    pub fn image_grads(&self) -> ImageGrads {
        ImageGrads {
            color: self.color_grad.clone(),
            normal: self.normal_grad.clone(),
            weight: self.weight_grad.clone(),
            contributor_depth: self.depth_grad.clone(),
            ..ImageGrads::default()
        }
    }
}

/// Everything one loss evaluation reads.
pub struct LossInputs<'a> {
    pub output: &'a RenderOutput,
    pub tape: &'a RenderTape,
    pub target: &'a Image,
    /// External normal map (camera space); normals from the rendered depth
    /// are used when absent.
    pub normal_reference: Option<&'a Image>,
    /// Template vertices and Laplacian for the regularizer.
    pub vertices: &'a [Vec3],
    pub laplacian: Option<&'a LaplacianMatrix>,
}

/// Evaluates the active terms and assembles weighted gradients.
pub fn evaluate(inputs: &LossInputs, weights: &LossWeights, active: ActiveTerms) -> Result<LossReport> {
    let mut report = LossReport::default();
    let color = &inputs.output.color;
    let (photo, photo_grad) = photo_loss(color, inputs.target)?;
    let (ssim, ssim_grad) = ssim_loss(color, inputs.target)?;
    report.photo = photo;
    report.ssim = ssim;
    let mut grad = photo_grad;
    for (g, s) in grad.data.iter_mut().zip(&ssim_grad.data) {
        *g = weights.photo * *g + weights.ssim * s;
    }
    report.color_grad = Some(grad);

    if let Some(lap) = inputs.laplacian {
        let (reg, reg_grad) = bilaplacian_reg(inputs.vertices, lap);
        report.reg = reg;
        report.vertex_grad = reg_grad.into_iter().map(|g| g * weights.reg).collect();
    }

    if active.normal {
        let derived;
        let reference = match inputs.normal_reference {
            Some(r) => r,
            None => {
                derived = depth_normals(&inputs.output.depth, &inputs.output.alpha, &inputs.tape.camera);
                &derived
            }
        };
        let (normal, mut g) = normal_consistency_loss(&inputs.output.normal, &inputs.output.alpha, reference)?;
        g.data.iter_mut().for_each(|v| *v *= weights.normal);
        report.normal = normal;
        report.normal_grad = Some(g);
    }

    if active.dist {
        let (dist, mut gw, mut gz) = depth_distortion_loss(inputs.tape);
        gw.iter_mut().for_each(|v| *v *= weights.dist);
        gz.iter_mut().for_each(|v| *v *= weights.dist);
        report.dist = dist;
        report.weight_grad = Some(gw);
        report.depth_grad = Some(gz);
    }
    report.total = report.weighted_total(weights);
    Ok(report)
}
