//! Geometry fidelity metrics.

use rand::Rng;

use crate::geometry::Mesh;
use crate::math::Vec3;
use crate::par;

/// `count` points sampled uniformly by area over the surface given by
/// `positions` (same topology as `mesh`).
pub fn sample_surface<R: Rng>(mesh: &Mesh, positions: &[Vec3], count: usize, rng: &mut R) -> Vec<Vec3> {
    let mut cumulative = Vec::with_capacity(mesh.num_faces());
    let mut total = 0.0;
    for f in mesh.faces() {
        total += 0.5 * (positions[f[1]] - positions[f[0]]).cross(&(positions[f[2]] - positions[f[0]])).norm();
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let x = rng.random_range(0.0..total);
            let face = cumulative.partition_point(|c| *c <= x).min(cumulative.len() - 1);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let f = mesh.faces()[face];
            positions[f[0]] * (1.0 - u - v) + positions[f[1]] * u + positions[f[2]] * v
        })
        .collect()
}

fn mean_nearest_squared(from: &[Vec3], to: &[Vec3], parallel: bool) -> f64 {
    let d = par::map_indexed(from.len(), parallel, |i| {
        to.iter().map(|q| (from[i] - q).norm_squared()).fold(f64::INFINITY, f64::min)
    });
    d.iter().sum::<f64>() / from.len().max(1) as f64
}

/// Symmetric Chamfer distance: the sum of both mean nearest-neighbor squared
/// distances.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3], parallel: bool) -> f64 {
    mean_nearest_squared(a, b, parallel) + mean_nearest_squared(b, a, parallel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_sets_have_zero_distance() {
        let pts = vec![Vec3::x(), Vec3::y(), Vec3::new(0.3, 0.2, -1.0)];
        assert_eq!(chamfer_distance(&pts, &pts, false), 0.0);
    }

    #[test]
    fn translated_point_sets() {
        let a = vec![Vec3::zeros()];
        let b = vec![Vec3::new(0.0, 0.0, 2.0)];
        assert_eq!(chamfer_distance(&a, &b, false), 8.0);
    }

    #[test]
    fn samples_lie_on_the_surface() {
        let mesh = primitives::plane_grid(3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_surface(&mesh, &mesh.vertices, 2000, &mut rng);
        assert_eq!(pts.len(), 2000);
        assert!(pts.iter().all(|p| p.z == 0.0 && (0.0..=1.5).contains(&p.x) && (0.0..=1.5).contains(&p.y)));
        let mean = pts.iter().sum::<Vec3>() / 2000.0;
        assert!((mean.x - 0.75).abs() < 0.03 && (mean.y - 0.75).abs() < 0.03);
    }

    #[test]
    fn concentric_spheres() {
        let mesh = primitives::icosphere(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = sample_surface(&mesh, &mesh.vertices, 3000, &mut rng);
        let scaled: Vec<Vec3> = mesh.vertices.iter().map(|v| v * 1.2).collect();
        let b = sample_surface(&mesh, &scaled, 3000, &mut rng);
        let d = chamfer_distance(&a, &b, true);
        // Radial gap 0.2 on each side plus sampling spread.
        assert!(d > 2.0 * 0.04 && d < 2.0 * 0.04 + 0.02, "{d}");
    }
}
