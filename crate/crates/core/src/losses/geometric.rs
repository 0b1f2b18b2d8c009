use crate::error::Result;
use crate::geometry::{Camera, LaplacianMatrix};
use crate::image::Image;
use crate::math::{normalize3_vjp, Vec3};
use crate::raster::RenderTape;

/// Pixels with accumulated alpha at or below this are ignored by the normal
/// loss.
pub const ALPHA_MASK: f64 = 0.5;

/// `Σ_i ‖(Lv)_i‖²` and its gradient `2Lᵀ(Lv)`.
pub fn bilaplacian_reg(vertices: &[Vec3], laplacian: &LaplacianMatrix) -> (f64, Vec<Vec3>) {
    let lv = laplacian.apply(vertices);
    let value = lv.iter().map(|v| v.norm_squared()).sum();
    let grad = laplacian.apply(&lv).into_iter().map(|v| v * 2.0).collect();
    (value, grad)
}

/// Camera-space normals from a depth image: central differences of the
/// back-projected points, oriented toward the camera. Pixels without a full
/// valid neighbourhood (alpha above the mask) get a zero vector.
pub fn depth_normals(depth: &Image, alpha: &Image, camera: &Camera) -> Image {
    let (w, h) = (depth.width, depth.height);
    let mut out = Image::new(w, h, 3);
    let point = |x: usize, y: usize| {
        let n = camera.pixel_to_normalized(x, y);
        let z = depth.data[y * w + x];
        Vec3::new(n.x * z, n.y * z, z)
    };
    let valid = |x: usize, y: usize| alpha.data[y * w + x] > ALPHA_MASK;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if !(valid(x, y) && valid(x - 1, y) && valid(x + 1, y) && valid(x, y - 1) && valid(x, y + 1)) {
                continue;
            }
            let dx = point(x + 1, y) - point(x - 1, y);
            let dy = point(x, y + 1) - point(x, y - 1);
            let mut n = dx.cross(&dy);
            let len = n.norm();
            if !(len > 0.0) {
                continue;
            }
            n /= len;
            if n.dot(&point(x, y)) > 0.0 {
                n = -n;
            }
            out.pixel_mut(y * w + x).copy_from_slice(n.as_slice());
        }
    }
    out
}

/// `mean(1 − n̂·n_ref)` over pixels with alpha above the mask and a non-zero
/// reference, where `n̂` is the normalized rendered normal. The reference is
/// treated as constant. Returns the gradient with respect to the
/// (unnormalized) rendered normal image.
pub fn normal_consistency_loss(normal: &Image, alpha: &Image, reference: &Image) -> Result<(f64, Image)> {
    normal.check_same_shape(reference)?;
    let mut grad = Image::new(normal.width, normal.height, 3);
    let mut valid = Vec::new();
    for p in 0..normal.num_pixels() {
        let n = Vec3::from_column_slice(normal.pixel(p));
        let r = Vec3::from_column_slice(reference.pixel(p));
        if alpha.data[p] > ALPHA_MASK && n.norm() > 0.0 && r.norm() > 0.0 {
            valid.push((p, n, r));
        }
    }
    if valid.is_empty() {
        log::warn!("normal loss: no valid pixels");
        return Ok((0.0, grad));
    }
    let count = valid.len() as f64;
    let mut sum = 0.0;
    for (p, n, r) in valid {
        let unit = n / n.norm();
        sum += 1.0 - unit.dot(&r);
        let g = normalize3_vjp(n, -r / count);
        grad.pixel_mut(p).copy_from_slice(g.as_slice());
    }
    Ok((sum / count, grad))
}

/// Per-pixel `Σ_i Σ_j w_i w_j |z_i − z_j|` over the contributors of each
/// pixel, averaged over all pixels. Returns the value and its gradients with
/// respect to every contributor's weight and depth.
pub fn depth_distortion_loss(tape: &RenderTape) -> (f64, Vec<f64>, Vec<f64>) {
    let n_pixels = tape.ranges.len().max(1) as f64;
    let mut d_weight = vec![0.0; tape.contributors.len()];
    let mut d_depth = vec![0.0; tape.contributors.len()];
    let mut total = 0.0;
    let mut order: Vec<usize> = Vec::new();
    for &(start, len) in &tape.ranges {
        if len < 2 {
            continue;
        }
        let cs = &tape.contributors[start..start + len];
        order.clear();
        order.extend(0..len);
        order.sort_by(|a, b| cs[*a].depth.total_cmp(&cs[*b].depth));
        let total_w: f64 = cs.iter().map(|c| c.weight()).sum();
        let total_wz: f64 = cs.iter().map(|c| c.weight() * c.depth).sum();
        // Prefix sums over contributors in front (by depth).
        let (mut w_front, mut wz_front) = (0.0, 0.0);
        let mut value = 0.0;
        for &i in &order {
            let (w, z) = (cs[i].weight(), cs[i].depth);
            let w_back = total_w - w_front - w;
            let wz_back = total_wz - wz_front - w * z;
            let spread = (z * w_front - wz_front) + (wz_back - z * w_back);
            value += w * spread;
            d_weight[start + i] = 2.0 * spread / n_pixels;
            d_depth[start + i] = 2.0 * w * (w_front - w_back) / n_pixels;
            w_front += w;
            wz_front += w * z;
        }
        total += value;
    }
    (total / n_pixels, d_weight, d_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_laplacian, primitives};
    use crate::math::Mat3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bilaplacian_values_and_gradient() {
        let mesh = primitives::icosphere(1, 1.0);
        let lap = build_laplacian(&mesh).unwrap();
        let same = vec![Vec3::new(0.3, -1.0, 2.0); mesh.num_vertices()];
        assert!(bilaplacian_reg(&same, &lap).0.abs() < 1e-24);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<Vec3> = mesh.vertices.iter().map(|p| p + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.1).collect();
        let (_, g) = bilaplacian_reg(&v, &lap);
        let h = 1e-6;
        for i in [0, 5, 17, 33] {
            for c in 0..3 {
                let mut p = v.clone();
                p[i][c] += h;
                let mut m = v.clone();
                m[i][c] -= h;
                let fd = (bilaplacian_reg(&p, &lap).0 - bilaplacian_reg(&m, &lap).0) / (2.0 * h);
                assert!((fd - g[i][c]).abs() <= 1e-6 * g[i][c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn affine_field_on_grid_is_not_exact() {
        // Interior vertices of a regular grid with an affine field: the uniform
        // Laplacian vanishes only where the one-ring is symmetric.
        let mesh = primitives::cube_grid(4, 1.0);
        let lap = build_laplacian(&mesh).unwrap();
        let a = Mat3::new(1.0, 0.2, 0.0, 0.0, 1.0, 0.3, 0.1, 0.0, 1.0);
        let v: Vec<Vec3> = mesh.vertices.iter().map(|p| a * p).collect();
        let (e, _) = bilaplacian_reg(&v, &lap);
        assert!(e > 0.0);
    }

    #[test]
    fn normal_loss_cases() {
        let mut n = Image::new(4, 4, 3);
        let mut alpha = Image::filled(4, 4, 1, 1.0);
        for p in 0..16 {
            n.pixel_mut(p).copy_from_slice(&[0.0, 0.6, -0.8]);
        }
        assert!(normal_consistency_loss(&n, &alpha, &n).unwrap().0.abs() < 1e-15);
        let mut opposite = n.clone();
        opposite.data.iter_mut().for_each(|v| *v = -*v);
        assert!((normal_consistency_loss(&n, &alpha, &opposite).unwrap().0 - 2.0).abs() < 1e-15);
        alpha.data.iter_mut().for_each(|a| *a = 0.0);
        assert_eq!(normal_consistency_loss(&n, &alpha, &opposite).unwrap().0, 0.0);
    }

    #[test]
    fn normal_loss_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut n = Image::new(5, 5, 3);
        let mut r = Image::new(5, 5, 3);
        n.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        for p in 0..25 {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            r.pixel_mut(p).copy_from_slice(v.as_slice());
        }
        let alpha = Image::filled(5, 5, 1, 0.9);
        let (_, g) = normal_consistency_loss(&n, &alpha, &r).unwrap();
        let h = 1e-6;
        for i in 0..n.data.len() {
            let mut p = n.clone();
            p.data[i] += h;
            let mut m = n.clone();
            m.data[i] -= h;
            let fd = (normal_consistency_loss(&p, &alpha, &r).unwrap().0 - normal_consistency_loss(&m, &alpha, &r).unwrap().0) / (2.0 * h);
            assert!((fd - g.data[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn fronto_parallel_plane_normals() {
        let cam = Camera::new(30.0, 30.0, 10.0, 8.0, Mat3::identity(), Vec3::zeros(), 20, 16).unwrap();
        let depth = Image::filled(20, 16, 1, 2.5);
        let alpha = Image::filled(20, 16, 1, 1.0);
        let n = depth_normals(&depth, &alpha, &cam);
        for y in 1..15 {
            for x in 1..19 {
                let v = n.pixel(y * 20 + x);
                assert!(v[0].abs() < 1e-6 && v[1].abs() < 1e-6 && (v[2] + 1.0).abs() < 1e-6);
            }
        }
        assert_eq!(n.pixel(0), &[0.0, 0.0, 0.0]);
    }
}
