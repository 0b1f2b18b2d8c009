use super::DiffusionOperator;
use crate::error::Result;
use crate::geometry::{GlobalTransform, Mesh};
use crate::math::Vec3;
use crate::splats::{SceneGeometry, SplatSet};

/// `[∂L/∂V]_i = M⁻¹ Σ_k β_{k,i} ∂L/∂p_k` over splats on faces incident to `v_i`.
pub fn splat_grads_to_vertex_grads(
    position_grads: &[Vec3],
    set: &SplatSet,
    mesh: &Mesh,
    transform: &GlobalTransform,
) -> Result<Vec<Vec3>> {
    let m_inv = transform.inverse_matrix()?;
    let mut out = vec![Vec3::zeros(); mesh.num_vertices()];
    for (s, g) in set.splats.iter().zip(position_grads) {
        let face = mesh.faces()[s.face];
        for m in 0..3 {
            out[face[m]] += g * s.beta[m];
        }
    }
    for v in &mut out {
        *v = m_inv * *v;
    }
    Ok(out)
}

/// `v̂_i = Σ β_{k,i} p_k / Σ β_{k,i}`; vertices without weight keep `v'_i`.
pub fn realignment_targets(set: &SplatSet, mesh: &Mesh, geom: &SceneGeometry) -> Vec<Vec3> {
    let mut sum = vec![Vec3::zeros(); mesh.num_vertices()];
    let mut weight = vec![0.0; mesh.num_vertices()];
    for s in &set.splats {
        let p = s.world(mesh, geom).position;
        let face = mesh.faces()[s.face];
        for m in 0..3 {
            sum[face[m]] += p * s.beta[m];
            weight[face[m]] += s.beta[m];
        }
    }
    sum.iter()
        .zip(&weight)
        .zip(&geom.world_vertices)
        .map(|((s, w), v)| if *w > 0.0 { s / *w } else { *v })
        .collect()
}

/// `Δv⁺ = M⁻¹ (I+λL)⁻² (V̂ − V')`, in template space.
pub fn realign_vertices(
    targets: &[Vec3],
    geom: &SceneGeometry,
    diffusion: &DiffusionOperator,
    transform: &GlobalTransform,
) -> Result<Vec<Vec3>> {
    let m_inv = transform.inverse_matrix()?;
    let offsets: Vec<Vec3> = targets.iter().zip(&geom.world_vertices).map(|(t, v)| t - v).collect();
    Ok(diffusion.apply(&offsets).into_iter().map(|d| m_inv * d).collect())
}

/// Re-expresses each splat's displacement against the moved surface: the new
/// `d` is the old world position projected onto the new face normal, so the
/// part of the offset the vertices absorbed is removed from `d`.
pub fn reproject_displacements(set: &mut SplatSet, mesh: &Mesh, before: &SceneGeometry, after: &SceneGeometry) {
    for s in &mut set.splats {
        let old = before.surface_point(mesh, s.face, &s.beta) + before.face_normals[s.face] * s.displacement;
        let base = after.surface_point(mesh, s.face, &s.beta);
        s.displacement = (old - base).dot(&after.face_normals[s.face]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_laplacian, primitives};
    use crate::math::Quat;
    use crate::splats::{AnchoredSplat, SplatMode};

    fn corner_splats(mesh: &Mesh, d: f64) -> SplatSet {
        let mut splats = Vec::new();
        for f in 0..mesh.num_faces() {
            for m in 0..3 {
                let mut beta = Vec3::zeros();
                beta[m] = 1.0;
                splats.push(AnchoredSplat::new(f, beta, d, Quat::IDENTITY, Vec3::repeat(0.05), 0.9, Vec3::repeat(0.5)));
            }
        }
        SplatSet::new(splats, SplatMode::TwoD, mesh.num_faces())
    }

    #[test]
    fn vertex_concentrated_splat_feeds_one_vertex() {
        let mesh = primitives::tetrahedron();
        let tr = GlobalTransform::new(Vec3::new(2.0, 1.0, 0.5), Quat::IDENTITY, Vec3::zeros());
        let set = SplatSet::new(
            vec![AnchoredSplat::new(1, Vec3::new(1.0, 0.0, 0.0), 0.0, Quat::IDENTITY, Vec3::repeat(0.1), 0.5, Vec3::zeros())],
            SplatMode::TwoD,
            mesh.num_faces(),
        );
        let g = Vec3::new(1.0, 1.0, 1.0);
        let out = splat_grads_to_vertex_grads(&[g], &set, &mesh, &tr).unwrap();
        let v = mesh.faces()[1][0];
        for (i, o) in out.iter().enumerate() {
            if i == v {
                assert!((o - Vec3::new(0.5, 1.0, 2.0)).norm() < 1e-15);
            } else {
                assert_eq!(*o, Vec3::zeros());
            }
        }
    }

    #[test]
    fn centroid_splat_splits_evenly() {
        let mesh = primitives::tetrahedron();
        let tr = GlobalTransform::identity();
        let set = SplatSet::new(
            vec![AnchoredSplat::new(0, Vec3::repeat(1.0 / 3.0), 0.0, Quat::IDENTITY, Vec3::repeat(0.1), 0.5, Vec3::zeros())],
            SplatMode::TwoD,
            mesh.num_faces(),
        );
        let g = Vec3::new(0.3, -0.6, 0.9);
        let out = splat_grads_to_vertex_grads(&[g], &set, &mesh, &tr).unwrap();
        for &v in &mesh.faces()[0] {
            assert!((out[v] - g / 3.0).norm() < 1e-15);
        }
    }

    #[test]
    fn undisplaced_corner_splats_are_a_fixed_point() {
        let mesh = primitives::cube_grid(3, 1.0);
        let geom = SceneGeometry::new(&mesh, &GlobalTransform::identity()).unwrap();
        let set = corner_splats(&mesh, 0.0);
        let targets = realignment_targets(&set, &mesh, &geom);
        for (t, v) in targets.iter().zip(&geom.world_vertices) {
            assert!((t - v).norm() < 1e-14);
        }
        let op = DiffusionOperator::new(&build_laplacian(&mesh).unwrap(), 20.0).unwrap();
        let dv = realign_vertices(&targets, &geom, &op, &GlobalTransform::identity()).unwrap();
        assert!(dv.iter().all(|d| d.norm() < 1e-12));
    }

    #[test]
    fn uniform_offset_translates_vertices() {
        let mesh = primitives::plane_grid(5, 0.2);
        let geom = SceneGeometry::new(&mesh, &GlobalTransform::identity()).unwrap();
        let delta = 0.07;
        let set = corner_splats(&mesh, delta);
        let targets = realignment_targets(&set, &mesh, &geom);
        let n = geom.face_normals[0];
        for (t, v) in targets.iter().zip(&geom.world_vertices) {
            assert!((t - (v + n * delta)).norm() < 1e-14);
        }
        let tr = GlobalTransform::new(Vec3::new(2.0, 2.0, 0.5), Quat::IDENTITY, Vec3::zeros());
        let geom_t = SceneGeometry::new(&mesh, &tr).unwrap();
        let op = DiffusionOperator::new(&build_laplacian(&mesh).unwrap(), 20.0).unwrap();
        let offset = Vec3::new(0.2, -0.4, 1.0);
        let targets: Vec<Vec3> = geom_t.world_vertices.iter().map(|v| v + offset).collect();
        let dv = realign_vertices(&targets, &geom_t, &op, &tr).unwrap();
        let expect = tr.inverse_matrix().unwrap() * offset;
        assert!(dv.iter().all(|d| (d - expect).norm() < 1e-10));
    }
}
