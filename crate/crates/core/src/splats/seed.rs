use super::{AnchoredSplat, SplatMode, SplatSet};
use crate::geometry::Mesh;
use crate::math::{Quat, Vec3};

#[derive(Clone, Debug)]
pub struct SeedConfig {
    /// Initial scale as a fraction of the template's mean edge length.
    pub scale_fraction: f64,
    pub opacity: f64,
    pub color: Vec3,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            scale_fraction: 0.25,
            opacity: 0.5,
            color: Vec3::repeat(0.5),
        }
    }
}

/// `n` barycentric samples spread over the triangle.
///
/// The triangle is split into `k²` congruent sub-triangles (`k = ⌈√n⌉`) and
/// `n` of their centroids are picked at evenly spaced indices. Upright
/// sub-triangles are listed first, so `n = 3` gives the three corner cells.
pub fn stratified_barycentrics(n: usize) -> Vec<Vec3> {
    if n == 0 {
        return Vec::new();
    }
    let k = (n as f64).sqrt().ceil() as usize;
    let kf = k as f64;
    let mut cells = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k - i {
            cells.push(((i as f64 + 1.0 / 3.0) / kf, (j as f64 + 1.0 / 3.0) / kf));
        }
    }
    for i in 0..k {
        for j in 0..(k - i).saturating_sub(1) {
            cells.push(((i as f64 + 2.0 / 3.0) / kf, (j as f64 + 2.0 / 3.0) / kf));
        }
    }
    (0..n)
        .map(|i| {
            let (u, v) = cells[i * k * k / n];
            Vec3::new(1.0 - u - v, u, v)
        })
        .collect()
}

/// Places `per_face_count` splats on every face of the template.
pub fn seed_splats(mesh: &Mesh, per_face_count: usize, mode: SplatMode, config: &SeedConfig) -> SplatSet {
    let per_face_count = per_face_count.max(1);
    let samples = stratified_barycentrics(per_face_count);
    let scale = Vec3::repeat(config.scale_fraction * mesh.mean_edge_length());
    let mut splats = Vec::with_capacity(mesh.num_faces() * per_face_count);
    for face in 0..mesh.num_faces() {
        for beta in &samples {
            splats.push(AnchoredSplat::new(face, *beta, 0.0, Quat::IDENTITY, scale, config.opacity, config.color));
        }
    }
    SplatSet::new(splats, mode, mesh.num_faces())
}
