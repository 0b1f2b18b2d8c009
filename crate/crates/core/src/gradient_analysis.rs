//! Executable checks of the camera-space derivatives of the Gaussian energy
//! `E = ½ rᵀΛ⁻¹r`: closed-form `(u, v, d)` and `(X, Y, Z)` derivatives, the
//! full-rank property of position gradients for splats with thickness, and
//! the fixed-plane degeneracy of flat splats.

use std::fmt;

use nalgebra::{DMatrix, Matrix2x3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{Mat2, Mat3, Vec2, Vec3};
use crate::raster::{energy_gradient, gaussian_energy, project_camera_space, ProjectedSplat};

/// Minimum accepted singular-value ratio for the rank test.
pub const RANK_RATIO_THRESHOLD: f64 = 1e-6;
/// Maximum accepted normalized plane violation for flat splats.
pub const PLANE_VIOLATION_THRESHOLD: f64 = 1e-9;

/// One configuration: camera-space covariance and mean, and a pixel on the
/// normalized image plane. No screen-space blur is applied.
#[derive(Clone, Copy, Debug)]
pub struct GradientProbe {
    pub sigma: Mat3,
    pub mean: Vec3,
    pub pixel: Vec2,
}

impl GradientProbe {
    pub fn new(sigma: Mat3, mean: Vec3, pixel: Vec2) -> Self {
        Self { sigma, mean, pixel }
    }

    pub fn projected(&self) -> Result<ProjectedSplat> {
        project_camera_space(self.mean, self.sigma, Vec2::zeros(), 0.0)
            .ok_or_else(|| Error::InvalidArgument("probe is not projectable (Z ≤ 0 or singular Λ)".into()))
    }

    pub fn mu(&self) -> Vec2 {
        Vec2::new(self.mean.x / self.mean.z, self.mean.y / self.mean.z)
    }

    pub fn residual(&self) -> Vec2 {
        self.mu() - self.pixel
    }

    pub fn energy(&self) -> Result<f64> {
        Ok(gaussian_energy(&self.projected()?, self.pixel))
    }

    /// `g = Λ⁻¹r`.
    pub fn g(&self) -> Result<Vec2> {
        Ok(self.projected()?.lambda_inv * self.residual())
    }

    /// `h = ΣJᵀg`.
    pub fn h(&self) -> Result<Vec3> {
        let p = self.projected()?;
        Ok(self.sigma * p.jacobian.transpose() * (p.lambda_inv * self.residual()))
    }

    /// `η = h₃ / Z`.
    pub fn eta(&self) -> Result<f64> {
        Ok(self.h()?.z / self.mean.z)
    }

    /// `M(μ) = [[1, 0, −u], [0, 1, −v]]`.
    pub fn m_matrix(&self) -> Matrix2x3<f64> {
        m_at(self.mu())
    }

    /// `G(μ) = (MΣMᵀ)⁻¹`.
    pub fn g_matrix(&self) -> Result<Mat2> {
        g_at(&self.sigma, self.mu())
    }

    /// `c(μ) = (σ₃₁ − uσ₃₃, σ₃₂ − vσ₃₃)`.
    pub fn c_vector(&self) -> Vec2 {
        let mu = self.mu();
        let s = &self.sigma;
        Vec2::new(s[(2, 0)] - mu.x * s[(2, 2)], s[(2, 1)] - mu.y * s[(2, 2)])
    }
}

fn m_at(mu: Vec2) -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, -mu.x, 0.0, 1.0, -mu.y)
}

fn g_at(sigma: &Mat3, mu: Vec2) -> Result<Mat2> {
    let m = m_at(mu);
    (m * sigma * m.transpose())
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("MΣMᵀ is singular".into()))
}

/// `(∂E/∂u, ∂E/∂v, ∂E/∂d)`.
pub fn duvd_derivatives(probe: &GradientProbe) -> Result<Vec3> {
    Ok(energy_gradient(&probe.projected()?, probe.pixel).d_uvd)
}

/// `∇_p E` in camera space, through the same code the rasterizer uses.
pub fn dxyz_derivatives(probe: &GradientProbe) -> Result<Vec3> {
    Ok(energy_gradient(&probe.projected()?, probe.pixel).d_mean)
}

/// `Σ = AAᵀ + 0.01·I` with entries of `A` uniform in `[−1, 1]`.
pub fn random_spd<R: Rng>(rng: &mut R) -> Mat3 {
    let a = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    a * a.transpose() + Mat3::identity() * 0.01
}

/// Covariance with zero third row and column (a splat lying in a
/// fronto-parallel plane).
pub fn random_flat<R: Rng>(rng: &mut R) -> Mat3 {
    let a = Mat2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let b = a * a.transpose() + Mat2::identity() * 0.01;
    Mat3::new(b[(0, 0)], b[(0, 1)], 0.0, b[(1, 0)], b[(1, 1)], 0.0, 0.0, 0.0, 0.0)
}

/// Residual uniform in the ellipse `rᵀΛ⁻¹r ≤ 9`.
pub fn sample_residual<R: Rng>(lambda: &Mat2, rng: &mut R) -> Vec2 {
    let l = lambda.cholesky().map(|c| c.l()).unwrap_or_else(Mat2::identity);
    let radius = 3.0 * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    l * Vec2::new(radius * theta.cos(), radius * theta.sin())
}

/// Random probe: `Z` uniform in `[0.5, 5]`, mean projection in
/// `[−0.5, 0.5]²`, pixel at a residual drawn from the 3σ disc.
pub fn random_probe<R: Rng>(sigma: Mat3, rng: &mut R) -> GradientProbe {
    let z = rng.random_range(0.5..5.0);
    let mu = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let mean = Vec3::new(mu.x * z, mu.y * z, z);
    let lambda = project_camera_space(mean, sigma, Vec2::zeros(), 0.0).map(|p| p.lambda).unwrap_or_else(Mat2::identity);
    let r = sample_residual(&lambda, rng);
    GradientProbe::new(sigma, mean, mu - r)
}

/// Position gradients for `count` means around `mean`, all evaluated at
/// the pixel where `mean` projects. The means keep their depth and move
/// so that the residual covers the 3σ disc.
fn gradients_at_fixed_pixel<R: Rng>(sigma: &Mat3, mean: &Vec3, count: usize, rng: &mut R) -> Result<(Vec2, Vec<Vec3>)> {
    let base = GradientProbe::new(*sigma, *mean, Vec2::zeros());
    let pixel = base.mu();
    let lambda = base.projected()?.lambda;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count {
            return Err(Error::InvalidArgument("could not sample non-zero gradients".into()));
        }
        let r = sample_residual(&lambda, rng);
        let mu = pixel + r;
        let probe = GradientProbe::new(*sigma, Vec3::new(mu.x * mean.z, mu.y * mean.z, mean.z), pixel);
        let grad = dxyz_derivatives(&probe)?;
        if grad.norm() > 0.0 {
            out.push(grad);
        }
    }
    Ok((pixel, out))
}

/// `σ_min / σ_max` of the 3×K matrix of position gradients for `k` random
/// residuals at a fixed pixel. Rejects `k < 4`.
pub fn nondegeneracy_test<R: Rng>(sigma: &Mat3, mean: &Vec3, k: usize, rng: &mut R) -> Result<f64> {
    if k < 4 {
        return Err(Error::InvalidArgument(format!("rank test needs at least 4 samples, got {k}")));
    }
    let (_, grads) = gradients_at_fixed_pixel(sigma, mean, k, rng)?;
    let m = DMatrix::from_fn(3, k, |i, j| grads[j][i] / grads[j].norm());
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    Ok(if max > 0.0 { min / max } else { 0.0 })
}

/// Worst `|n·∇_p E| / ‖∇_p E‖` with `n = (x, y, 1)` over `samples` means
/// around the ray through `pixel`, for a covariance whose third row and
/// column vanish.
pub fn degeneracy_plane_test<R: Rng>(sigma: &Mat3, pixel: Vec2, depth: f64, samples: usize, rng: &mut R) -> Result<f64> {
    let scale = sigma.abs().max();
    if [sigma[(0, 2)], sigma[(1, 2)], sigma[(2, 2)], sigma[(2, 0)], sigma[(2, 1)]]
        .iter()
        .any(|v| v.abs() > 1e-15 * scale.max(1.0))
    {
        return Err(Error::InvalidArgument("covariance is not flat in the camera frame".into()));
    }
    let mean = Vec3::new(pixel.x * depth, pixel.y * depth, depth);
    let (_, grads) = gradients_at_fixed_pixel(sigma, &mean, samples, rng)?;
    let n = Vec3::new(pixel.x, pixel.y, 1.0).normalize();
    Ok(grads.iter().map(|g| n.dot(g).abs() / g.norm()).fold(0.0, f64::max))
}

/// Outcome of one checked property.
#[derive(Clone, Debug)]
pub struct PropertyResult {
    pub name: &'static str,
    pub trials: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub threshold: f64,
    /// Whether the property requires `worst` below (`true`) or above the
    /// threshold.
    pub below: bool,
}

impl PropertyResult {
    pub fn pass(&self) -> bool {
        if self.below {
            self.worst <= self.threshold
        } else {
            self.worst > self.threshold
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradientReport {
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl GradientReport {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(PropertyResult::pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for GradientReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gradient check (seed {})", self.seed)?;
        for p in &self.properties {
            let op = if p.below { "<=" } else { ">" };
            writeln!(
                f,
                "{:<28} trials {:>5}  worst {:>12.4e}  required {op} {:.1e}  {}",
                p.name,
                p.trials,
                p.worst,
                p.threshold,
                if p.pass() { "PASS" } else { "FAIL" }
            )?;
        }
        write!(f, "overall: {}", if self.all_pass() { "PASS" } else { "FAIL" })
    }
}

fn central_diff(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

fn rel_err(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

fn energy_at(sigma: &Mat3, mean: Vec3, pixel: Vec2) -> f64 {
    GradientProbe::new(*sigma, mean, pixel).energy().unwrap_or(f64::NAN)
}

/// Runs every property over `trials` random probes.
pub fn check_gradients<R: Rng>(trials: usize, seed: u64, rng: &mut R) -> GradientReport {
    let trials = trials.max(1);
    let mut depth_identity = 0.0f64;
    let mut uvd_fd = 0.0f64;
    let mut xyz_fd = 0.0f64;
    let mut shared = 0.0f64;
    let mut eta = 0.0f64;
    let mut slope_dev = 0.0f64;
    let mut g_bound = 0.0f64;
    let mut rank = f64::INFINITY;
    let mut plane = 0.0f64;
    let mut flat_rank = 0.0f64;

    for _ in 0..trials {
        let sigma = random_spd(rng);
        let probe = random_probe(sigma, rng);
        let Ok(proj) = probe.projected() else { continue };
        let eg = energy_gradient(&proj, probe.pixel);
        let e = eg.energy;
        let d = probe.mean.z;

        depth_identity = depth_identity.max((eg.d_uvd.z - 2.0 * e / d).abs() / (2.0 * e / d).abs().max(1.0));

        // (u, v, d) by finite differences of E(μ, d).
        let mu = probe.mu();
        let e_uvd = |u: f64, v: f64, dd: f64| energy_at(&sigma, Vec3::new(u * dd, v * dd, dd), probe.pixel);
        let fd_uvd = Vec3::new(
            central_diff(|h| e_uvd(mu.x + h, mu.y, d), 1e-6),
            central_diff(|h| e_uvd(mu.x, mu.y + h, d), 1e-6),
            central_diff(|h| e_uvd(mu.x, mu.y, d + h), 1e-6),
        );
        uvd_fd = uvd_fd.max(rel_err(fd_uvd, eg.d_uvd));

        let fd_xyz = Vec3::from_fn(|i, _| {
            central_diff(
                |h| {
                    let mut m = probe.mean;
                    m[i] += h;
                    energy_at(&sigma, m, probe.pixel)
                },
                1e-6,
            )
        });
        xyz_fd = xyz_fd.max(rel_err(fd_xyz, eg.d_mean));

        let direct = dxyz_derivatives(&probe).unwrap();
        shared = shared.max((direct - eg.d_mean).norm());

        let g_mat = probe.g_matrix().unwrap();
        let eta_closed = probe.c_vector().dot(&(g_mat * probe.residual()));
        eta = eta.max((probe.eta().unwrap() - eta_closed).abs() / eta_closed.abs().max(1.0));

        // Second-order remainder: halving δp should quarter the error. The
        // most curved of three directions is used so the quadratic term
        // dominates.
        let step = 1e-4 * d;
        let remainder = |dir: &Vec3, s: f64| (energy_at(&sigma, probe.mean + dir * s, probe.pixel) - e - eg.d_mean.dot(&(dir * s))).abs();
        let best = (0..3)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize())
            .map(|dir| (remainder(&dir, step), remainder(&dir, 0.5 * step)))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        if best.1 > 1e-9 * e.abs().max(1e-3) {
            slope_dev = slope_dev.max(((best.0 / best.1).log2() - 2.0).abs());
        }

        // ‖G(μ) − G(x)‖ / ‖r‖ for shrinking residuals.
        if let Ok(gx) = g_at(&sigma, probe.pixel) {
            let r = probe.residual();
            if r.norm() > 1e-12 {
                for s in [1.0, 0.1, 0.01] {
                    if let Ok(gm) = g_at(&sigma, probe.pixel + r * s) {
                        g_bound = g_bound.max((gm - gx).norm() / (r.norm() * s));
                    }
                }
            }
        }

        if let Ok(ratio) = nondegeneracy_test(&sigma, &probe.mean, 20, rng) {
            rank = rank.min(ratio);
        }

        let flat = random_flat(rng);
        let pixel = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let depth = rng.random_range(0.5..5.0);
        if let Ok(v) = degeneracy_plane_test(&flat, pixel, depth, 20, rng) {
            plane = plane.max(v);
        }
        let mean = Vec3::new(pixel.x * depth, pixel.y * depth, depth);
        if let Ok(ratio) = nondegeneracy_test(&flat, &mean, 20, rng) {
            flat_rank = flat_rank.max(ratio);
        }
    }
    let prop = |name, worst, threshold, below| PropertyResult {
        name,
        trials,
        worst,
        threshold,
        below,
    };
    GradientReport {
        seed,
        properties: vec![
            prop("depth identity dE/dd=2E/d", depth_identity, 1e-12, true),
            prop("(u,v,d) vs finite diff", uvd_fd, 1e-5, true),
            prop("(X,Y,Z) vs finite diff", xyz_fd, 1e-5, true),
            prop("shared code path", shared, 0.0, true),
            prop("eta closed form", eta, 1e-12, true),
            prop("taylor remainder order", slope_dev, 0.1, true),
            prop("G(mu)-G(x) = O(|r|)", g_bound, 1e12, true),
            prop("rank ratio (thick)", rank, RANK_RATIO_THRESHOLD, false),
            prop("plane violation (flat)", plane, PLANE_VIOLATION_THRESHOLD, true),
            prop("rank ratio (flat)", flat_rank, 1e-9, true),
        ],
    }
}
