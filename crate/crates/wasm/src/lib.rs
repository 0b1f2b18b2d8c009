//! Browser demo bindings. Errors are plain strings (thrown in JS), so the
//! same methods are tested natively.

use meshsplat::geometry::{build_laplacian, primitives, Camera, GlobalTransform, LaplacianMatrix, Mesh};
use meshsplat::gradient_analysis::nondegeneracy_test;
use meshsplat::image::Image;
use meshsplat::math::{Mat3, Quat, Vec3};
use meshsplat::optim::DiffusionOperator;
use meshsplat::raster::{render, RenderSettings};
use meshsplat::splats::{seed_splats, SceneGeometry, SeedConfig, SplatMode, SplatSet};
use meshsplat::synth::{raycast, Bvh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const CAMERA_DISTANCE: f64 = 3.2;
const FOV_X: f64 = 0.8;

fn orbit_camera(yaw: f64, pitch: f64, size: usize) -> Result<Camera, String> {
    let pitch = pitch.clamp(-1.45, 1.45);
    let eye = Vec3::new(yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos()) * CAMERA_DISTANCE;
    Camera::look_at(eye, Vec3::zeros(), Vec3::y(), FOV_X, size, size).map_err(|e| e.to_string())
}

/// RGBA bytes of an RGB image premultiplied over black, with opaque alpha.
fn to_rgba(color: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(color.num_pixels() * 4);
    for p in 0..color.num_pixels() {
        let px = color.pixel(p);
        out.extend(px[..3].iter().map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
        out.push(255);
    }
    out
}

/// Blue-white-red ramp for values in `[0, 1]`.
fn heat(v: f64) -> Vec3 {
    let v = v.clamp(0.0, 1.0);
    if v < 0.5 {
        Vec3::new(2.0 * v, 2.0 * v, 1.0)
    } else {
        Vec3::new(1.0, 2.0 - 2.0 * v, 2.0 - 2.0 * v)
    }
}

#[wasm_bindgen]
pub struct Demo {
    mesh: Mesh,
    splats: SplatSet,
    laplacian: LaplacianMatrix,
    bvh: Bvh,
}

#[wasm_bindgen]
impl Demo {
    /// Checkered splats seeded on a level-2 icosphere with small random tilts.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, String> {
        let mesh = primitives::icosphere(2, 1.0);
        let mut splats = seed_splats(
            &mesh,
            3,
            SplatMode::TwoD,
            &SeedConfig {
                scale_fraction: 0.3,
                opacity: 0.9,
                ..SeedConfig::default()
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut splats.splats {
            let [a, b, c] = mesh.face_positions(s.face);
            let p = a * s.beta.x + b * s.beta.y + c * s.beta.z;
            let parity = p.iter().map(|x| (x / 0.5).floor() as i64).sum::<i64>().rem_euclid(2);
            s.color = if parity == 0 { Vec3::new(0.9, 0.35, 0.2) } else { Vec3::new(0.2, 0.55, 0.9) };
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            s.local_rotation = Quat::from_axis_angle(axis, rng.random_range(0.0..0.2));
            s.log_scale.z = s.log_scale.x + 0.6f64.ln();
        }
        let laplacian = build_laplacian(&mesh).map_err(|e| e.to_string())?;
        let bvh = Bvh::new(&mesh);
        Ok(Demo {
            mesh,
            splats,
            laplacian,
            bvh,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn splat_count(&self) -> usize {
        self.splats.len()
    }

    #[wasm_bindgen(getter)]
    pub fn vertex_count(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// RGBA image of the splats from an orbit camera, with exact ray-splat
    /// intersections (`two_d`) or projected 3D Gaussians.
    pub fn render_splats(&self, yaw: f64, pitch: f64, two_d: bool, size: usize) -> Result<Vec<u8>, String> {
        let camera = orbit_camera(yaw, pitch, size)?;
        let geom = SceneGeometry::new(&self.mesh, &GlobalTransform::identity()).map_err(|e| e.to_string())?;
        let mode = if two_d { SplatMode::TwoD } else { SplatMode::ThreeD };
        let mut set = self.splats.clone();
        set.mode = mode;
        let (out, _) = render(&set, &self.mesh, &geom, &camera, mode, &RenderSettings::single_threaded())
            .map_err(|e| e.to_string())?;
        Ok(to_rgba(&out.color))
    }

    /// Per-vertex magnitude of the smoothed response to a unit impulse at
    /// `vertex`, normalized to a peak of 1.
    pub fn diffusion_response(&self, vertex: usize, lambda: f64) -> Result<Vec<f64>, String> {
        if vertex >= self.mesh.num_vertices() {
            return Err(format!("vertex {vertex} out of range"));
        }
        let op = DiffusionOperator::new(&self.laplacian, lambda).map_err(|e| e.to_string())?;
        let mut g = vec![Vec3::zeros(); self.mesh.num_vertices()];
        g[vertex] = Vec3::x();
        let x: Vec<f64> = op.apply(&g).iter().map(|v| v.norm()).collect();
        let peak = x.iter().copied().fold(0.0, f64::max);
        Ok(x.iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect())
    }

    /// RGBA heat map of `diffusion_response` on the mesh, on a log scale
    /// spanning `decades` orders of magnitude.
    pub fn diffusion_heatmap(&self, vertex: usize, lambda: f64, decades: f64, yaw: f64, pitch: f64, size: usize) -> Result<Vec<u8>, String> {
        let response = self.diffusion_response(vertex, lambda)?;
        let camera = orbit_camera(yaw, pitch, size)?;
        let faces = self.mesh.faces();
        let decades = decades.max(1e-3);
        let image = raycast(&self.bvh, &camera, false, |hit, _| {
            let f = faces[hit.face];
            let v = response[f[0]] * hit.beta.x + response[f[1]] * hit.beta.y + response[f[2]] * hit.beta.z;
            heat(1.0 + v.max(1e-300).log10() / decades)
        })
        .map_err(|e| e.to_string())?;
        Ok(to_rgba(&image.color))
    }

    /// Vertex nearest the point the orbit camera looks through at pixel
    /// `(x, y)`, if the ray hits the mesh.
    pub fn pick_vertex(&self, yaw: f64, pitch: f64, size: usize, x: f64, y: f64) -> Result<Option<usize>, String> {
        let camera = orbit_camera(yaw, pitch, size)?;
        let dir_cam = Vec3::new((x - camera.cx) / camera.fx, (y - camera.cy) / camera.fy, 1.0);
        let dir = camera.rotation_matrix().transpose() * dir_cam;
        Ok(self.bvh.intersect(camera.center(), dir, 0.0).map(|hit| {
            let f = self.mesh.faces()[hit.face];
            let m = (0..3).max_by(|&a, &b| hit.beta[a].total_cmp(&hit.beta[b])).unwrap();
            f[m]
        }))
    }
}

/// Smallest-to-largest singular value ratio of position gradients sampled
/// at one pixel, for a camera-facing Gaussian with scales
/// `(1, 0.6, thickness)` relative to its largest axis, spun by a random
/// angle about the view axis. Collapses toward zero as the Gaussian flattens.
#[wasm_bindgen]
pub fn nondegeneracy_ratio(thickness: f64, seed: u64) -> Result<f64, String> {
    if !(thickness >= 0.0) {
        return Err("thickness must be non-negative".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Quat::from_axis_angle(Vec3::z(), rng.random_range(0.0..std::f64::consts::PI));
    let r = q.to_matrix();
    let s = Mat3::from_diagonal(&Vec3::new(0.2, 0.12, 0.2 * thickness).map(|x| x * x));
    let sigma = r * s * r.transpose();
    nondegeneracy_test(&sigma, &Vec3::new(0.1, -0.05, 2.0), 20, &mut rng).map_err(|e| e.to_string())
}
