use super::backward::SplatGrads;
use crate::geometry::{face_frame_vjp, face_normal_vjp, GlobalTransform, Mesh, TransformGrad};
use crate::math::{quat_mul_vjp, Quat, Vec3};
use crate::splats::{SceneGeometry, SplatSet};

/// Gradients with respect to the optimizable parameters.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub beta: Vec<Vec3>,
    pub displacement: Vec<f64>,
    pub local_rotation: Vec<Quat>,
    pub log_scale: Vec<Vec3>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<Vec3>,
    /// `∂L/∂p_k` in world space.
    pub position: Vec<Vec3>,
    /// Exact gradient with respect to the transformed vertices, through
    /// splat positions and face frames.
    pub world_vertices: Vec<Vec3>,
    pub template_vertices: Vec<Vec3>,
    pub transform: TransformGrad,
}

/// Chains world-space splat gradients through `p = Σβv' + d·n`,
/// `q = q̄ ⊗ q^f(n)` and the global transform.
pub fn chain_to_params(set: &SplatSet, mesh: &Mesh, transform: &GlobalTransform, geom: &SceneGeometry, grads: &SplatGrads) -> ParamGrads {
    let n = set.len();
    let mut out = ParamGrads {
        beta: vec![Vec3::zeros(); n],
        displacement: vec![0.0; n],
        local_rotation: vec![Quat::new(0.0, 0.0, 0.0, 0.0); n],
        log_scale: grads.log_scale.clone(),
        opacity_logit: grads.opacity_logit.clone(),
        color: grads.color.clone(),
        position: grads.position.clone(),
        world_vertices: vec![Vec3::zeros(); mesh.num_vertices()],
        template_vertices: Vec::new(),
        transform: TransformGrad::default(),
    };
    let mut face_normal_grad = vec![Vec3::zeros(); mesh.num_faces()];
    for (k, s) in set.splats.iter().enumerate() {
        let f = s.face;
        let dp = grads.position[k];
        let normal = geom.face_normals[f];
        let verts = geom.face_world_positions(mesh, f);
        for m in 0..3 {
            out.beta[k][m] = dp.dot(&verts[m]);
            out.world_vertices[mesh.faces()[f][m]] += dp * s.beta[m];
        }
        out.displacement[k] = dp.dot(&normal);
        let (d_local, d_frame) = quat_mul_vjp(s.local_rotation, geom.face_frames[f], grads.rotation[k]);
        out.local_rotation[k] = d_local;
        face_normal_grad[f] += dp * s.displacement + face_frame_vjp(normal, d_frame);
    }
    for (f, g) in face_normal_grad.iter().enumerate() {
        if *g == Vec3::zeros() {
            continue;
        }
        let [a, b, c] = geom.face_world_positions(mesh, f);
        let dv = face_normal_vjp(a, b, c, *g);
        for m in 0..3 {
            out.world_vertices[mesh.faces()[f][m]] += dv[m];
        }
    }
    let (template, tg) = transform.backward(&mesh.vertices, &out.world_vertices);
    out.template_vertices = template;
    out.transform = tg;
    out
}
