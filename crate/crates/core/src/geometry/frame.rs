use super::{EPS_ANTIPODAL, EPS_AREA};
use crate::error::{Error, Result};
use crate::math::{normalize3_vjp, normalize_vjp, Quat, Vec3};

/// Unit normal of the triangle `(a, b, c)` following the vertex winding.
///
/// `face` is only used to label the error.
pub fn triangle_normal(a: Vec3, b: Vec3, c: Vec3, face: usize) -> Result<Vec3> {
    let cross = (b - a).cross(&(c - a));
    let area = 0.5 * cross.norm();
    if !(area > EPS_AREA) {
        return Err(Error::DegenerateFace { face, area });
    }
    Ok(cross / (2.0 * area))
}

/// Gradients of the triangle normal with respect to its three corners.
pub fn face_normal_vjp(a: Vec3, b: Vec3, c: Vec3, grad_n: Vec3) -> [Vec3; 3] {
    let e1 = b - a;
    let e2 = c - a;
    let gc = normalize3_vjp(e1.cross(&e2), grad_n);
    let ge1 = e2.cross(&gc);
    let ge2 = gc.cross(&e1);
    [-(ge1 + ge2), ge1, ge2]
}

/// `1 + n_z` evaluated without cancellation when `n` points nearly down.
fn one_plus_nz(n: Vec3) -> f64 {
    if n.z >= 0.0 {
        1.0 + n.z
    } else {
        (n.x * n.x + n.y * n.y) / (1.0 - n.z)
    }
}

/// Quaternion that rotates the canonical normal `(0, 0, 1)` onto `n`:
/// `normalize(1 + n_z, -n_y, n_x, 0)`.
///
/// The exact antipode `(0, 0, -1)` has no such normalization and maps to the
/// half-turn about x.
pub fn face_frame_quaternion(n: Vec3) -> Quat {
    let w = one_plus_nz(n);
    let raw = Quat::new(w, -n.y, n.x, 0.0);
    let norm = raw.norm();
    if w < EPS_ANTIPODAL && norm < f64::MIN_POSITIVE.sqrt() {
        return Quat::new(0.0, 1.0, 0.0, 0.0);
    }
    raw.scale(1.0 / norm)
}

/// Gradient of [`face_frame_quaternion`] with respect to the normal.
pub fn face_frame_vjp(n: Vec3, grad_q: Quat) -> Vec3 {
    let w = one_plus_nz(n);
    let raw = Quat::new(w, -n.y, n.x, 0.0);
    let norm = raw.norm();
    if w < EPS_ANTIPODAL && norm < f64::MIN_POSITIVE.sqrt() {
        return Vec3::zeros();
    }
    let g = normalize_vjp(raw.scale(1.0 / norm), norm, grad_q);
    Vec3::new(g.y, -g.x, g.w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn axis_aligned_normals() {
        let a = Vec3::zeros();
        let b = Vec3::x();
        let c = Vec3::y();
        assert_eq!(triangle_normal(a, b, c, 0).unwrap(), Vec3::z());
        assert_eq!(triangle_normal(a, c, b, 0).unwrap(), -Vec3::z());
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let r = triangle_normal(Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0, 7);
        assert!(matches!(r, Err(Error::DegenerateFace { face: 7, .. })));
    }

    #[test]
    fn random_normals_are_orthogonal_to_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p: Vec<Vec3> = (0..3).map(|_| random_unit(&mut rng) * 3.0).collect();
            let n = triangle_normal(p[0], p[1], p[2], 0).unwrap();
            assert!(n.dot(&(p[1] - p[0])).abs() < 1e-12);
            assert!(n.dot(&(p[2] - p[0])).abs() < 1e-12);
            assert!((n.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn frame_special_cases() {
        assert_eq!(face_frame_quaternion(Vec3::z()), Quat::IDENTITY);
        assert_eq!(face_frame_quaternion(-Vec3::z()), Quat::new(0.0, 1.0, 0.0, 0.0));
        let q = face_frame_quaternion(Vec3::x());
        assert!((q.rotate(Vec3::z()) - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn frame_aligns_random_and_near_antipodal_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut normals: Vec<Vec3> = (0..500).map(|_| random_unit(&mut rng)).collect();
        for k in 1..14 {
            let t = 10f64.powi(-k);
            normals.push(Vec3::new(t, -0.3 * t, -1.0).normalize());
            normals.push(Vec3::new(0.0, t, -1.0).normalize());
        }
        for n in normals {
            let q = face_frame_quaternion(n);
            assert!((q.norm() - 1.0).abs() < 1e-12);
            assert!((q.rotate(Vec3::z()) - n).norm() < 1e-9, "n = {n:?}");
        }
    }

    #[test]
    fn normal_vjp_matches_finite_differences() {
        let p = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.2, -0.1, 0.4), Vec3::new(0.3, 0.9, -0.2)];
        let w = Vec3::new(0.3, -0.8, 0.5);
        let f = |p: &[Vec3; 3]| triangle_normal(p[0], p[1], p[2], 0).unwrap().dot(&w);
        let g = face_normal_vjp(p[0], p[1], p[2], w);
        let h = 1e-6;
        for v in 0..3 {
            for k in 0..3 {
                let mut pp = p;
                pp[v][k] += h;
                let mut pm = p;
                pm[v][k] -= h;
                let fd = (f(&pp) - f(&pm)) / (2.0 * h);
                assert!((fd - g[v][k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn frame_vjp_matches_finite_differences_on_sphere() {
        let n = Vec3::new(0.3, -0.5, 0.6).normalize();
        let wq = Quat::new(0.4, -0.2, 0.7, 0.1);
        let f = |n: Vec3| face_frame_quaternion(n.normalize()).dot(wq);
        let g = normalize3_vjp(n, face_frame_vjp(n, wq));
        let h = 1e-6;
        for k in 0..3 {
            let mut np = n;
            np[k] += h;
            let mut nm = n;
            nm[k] -= h;
            let fd = (f(np) - f(nm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }
}
