//! Splats anchored to mesh faces: world-space reconstruction, reanchoring
//! after barycentric drift, seeding and densification.

mod densify;
mod seed;
mod walk;

pub use densify::{densify_and_prune, reset_opacity, DensifyConfig, DensifyReport, GradientStats};
pub use seed::{seed_splats, stratified_barycentrics, SeedConfig};
pub use walk::{reanchor_walk, walk_barycentric, WalkOutcome, MAX_WALK_STEPS};

use crate::error::Result;
use crate::geometry::{apply_global_transform, face_frame_quaternion, GlobalTransform, Mesh};
use crate::math::{logit, sigmoid, Mat3, Quat, Vec3};

/// Lower bound on splat scales (world units).
pub const EPS_SCALE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplatMode {
    TwoD,
    ThreeD,
}

impl SplatMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplatMode::TwoD => "2d",
            SplatMode::ThreeD => "3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Some(SplatMode::TwoD),
            "3d" => Some(SplatMode::ThreeD),
            _ => None,
        }
    }
}

/// A Gaussian splat attached to one mesh face.
///
/// Scale and opacity are stored through squashing maps (`exp`, logistic) so
/// the optimizer works on unconstrained values.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredSplat {
    pub face: usize,
    pub beta: Vec3,
    /// Offset along the face normal.
    pub displacement: f64,
    /// Rotation relative to the face frame.
    pub local_rotation: Quat,
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    pub color: Vec3,
}

impl AnchoredSplat {
    pub fn new(face: usize, beta: Vec3, displacement: f64, local_rotation: Quat, scale: Vec3, opacity: f64, color: Vec3) -> Self {
        Self {
            face,
            beta,
            displacement,
            local_rotation,
            log_scale: scale.map(|s| s.max(EPS_SCALE).ln()),
            opacity_logit: logit(opacity),
            color,
        }
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(|l| l.exp().max(EPS_SCALE))
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn set_opacity(&mut self, o: f64) {
        self.opacity_logit = logit(o);
    }

    pub fn beta_is_valid(&self, tol: f64) -> bool {
        self.beta.iter().all(|b| *b >= 0.0) && (self.beta.sum() - 1.0).abs() <= tol
    }
}

/// Per-iteration derived geometry: transformed vertices, face normals and
/// face frames.
#[derive(Clone, Debug)]
pub struct SceneGeometry {
    pub world_vertices: Vec<Vec3>,
    pub face_normals: Vec<Vec3>,
    pub face_frames: Vec<Quat>,
}

impl SceneGeometry {
    pub fn new(mesh: &Mesh, transform: &GlobalTransform) -> Result<Self> {
        let world_vertices = apply_global_transform(mesh, transform)?;
        let face_normals = (0..mesh.num_faces())
            .map(|f| mesh.face_normal_with(&world_vertices, f))
            .collect::<Result<Vec<_>>>()?;
        let face_frames = face_normals.iter().map(|n| face_frame_quaternion(*n)).collect();
        Ok(Self {
            world_vertices,
            face_normals,
            face_frames,
        })
    }

    pub fn face_world_positions(&self, mesh: &Mesh, face: usize) -> [Vec3; 3] {
        let f = mesh.faces()[face];
        [self.world_vertices[f[0]], self.world_vertices[f[1]], self.world_vertices[f[2]]]
    }

    /// Barycentric combination of the transformed face vertices.
    pub fn surface_point(&self, mesh: &Mesh, face: usize, beta: &Vec3) -> Vec3 {
        let [a, b, c] = self.face_world_positions(mesh, face);
        a * beta[0] + b * beta[1] + c * beta[2]
    }

    pub fn mean_edge_length(&self, mesh: &Mesh) -> f64 {
        let mut total = 0.0;
        for f in mesh.faces() {
            for e in 0..3 {
                total += (self.world_vertices[f[(e + 1) % 3]] - self.world_vertices[f[e]]).norm();
            }
        }
        total / (3 * mesh.num_faces()).max(1) as f64
    }
}

/// World-space quantities of one splat.
#[derive(Clone, Copy, Debug)]
pub struct WorldSplat {
    pub position: Vec3,
    pub rotation: Quat,
    pub rotation_matrix: Mat3,
    pub scale: Vec3,
    pub opacity: f64,
    pub color: Vec3,
}

impl WorldSplat {
    /// Splat normal: third column of the world rotation.
    pub fn normal(&self) -> Vec3 {
        self.rotation_matrix.column(2).into_owned()
    }

    /// `R diag(s²) Rᵀ`, with the third scale replaced by `thickness` when given.
    pub fn covariance(&self, thickness: Option<f64>) -> Mat3 {
        let mut s = self.scale;
        if let Some(t) = thickness {
            s[2] = t;
        }
        let r = self.rotation_matrix;
        r * Mat3::from_diagonal(&s.component_mul(&s)) * r.transpose()
    }
}

impl AnchoredSplat {
    pub fn world(&self, mesh: &Mesh, geom: &SceneGeometry) -> WorldSplat {
        let n = geom.face_normals[self.face];
        let position = geom.surface_point(mesh, self.face, &self.beta) + n * self.displacement;
        let rotation = self.local_rotation.mul(geom.face_frames[self.face]);
        WorldSplat {
            position,
            rotation,
            rotation_matrix: rotation.to_matrix(),
            scale: self.scale(),
            opacity: self.opacity(),
            color: self.color,
        }
    }
}

/// `p = Σ β_m v'_m + d n_f`.
pub fn world_position(splat: &AnchoredSplat, mesh: &Mesh, transform: &GlobalTransform) -> Result<Vec3> {
    transform.validate()?;
    let f = mesh.faces()[splat.face];
    let v: Vec<Vec3> = f.iter().map(|&i| transform.apply_point(mesh.vertices[i])).collect();
    let n = crate::geometry::triangle_normal(v[0], v[1], v[2], splat.face)?;
    Ok(v[0] * splat.beta[0] + v[1] * splat.beta[1] + v[2] * splat.beta[2] + n * splat.displacement)
}

/// `q_k = q̄ ⊗ q^f` for the splat's face (template geometry).
pub fn world_rotation(splat: &AnchoredSplat, mesh: &Mesh) -> Result<Quat> {
    let n = mesh.face_normal(splat.face)?;
    Ok(splat.local_rotation.mul(face_frame_quaternion(n)))
}

/// World covariance from the template face frame. In 2D mode the third scale
/// is replaced by `thickness`.
pub fn world_covariance(splat: &AnchoredSplat, mesh: &Mesh, mode: SplatMode, thickness: f64) -> Result<Mat3> {
    let r = world_rotation(splat, mesh)?.to_matrix();
    let mut s = splat.scale();
    if mode == SplatMode::TwoD {
        s[2] = thickness;
    }
    Ok(r * Mat3::from_diagonal(&s.component_mul(&s)) * r.transpose())
}

/// Growable splat list with a face → splat index.
#[derive(Clone, Debug)]
pub struct SplatSet {
    pub splats: Vec<AnchoredSplat>,
    pub mode: SplatMode,
    face_index: Vec<Vec<usize>>,
}

impl SplatSet {
    pub fn new(splats: Vec<AnchoredSplat>, mode: SplatMode, num_faces: usize) -> Self {
        let mut set = Self {
            splats,
            mode,
            face_index: Vec::new(),
        };
        set.rebuild_index(num_faces);
        set
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn rebuild_index(&mut self, num_faces: usize) {
        self.face_index = vec![Vec::new(); num_faces];
        for (k, s) in self.splats.iter().enumerate() {
            self.face_index[s.face].push(k);
        }
    }

    pub fn splats_on_face(&self, face: usize) -> &[usize] {
        &self.face_index[face]
    }

    pub fn index_is_consistent(&self) -> bool {
        let total: usize = self.face_index.iter().map(Vec::len).sum();
        total == self.splats.len()
            && self
                .face_index
                .iter()
                .enumerate()
                .all(|(f, ids)| ids.iter().all(|&k| self.splats[k].face == f))
    }

    pub fn world_splats(&self, mesh: &Mesh, geom: &SceneGeometry) -> Vec<WorldSplat> {
        self.splats.iter().map(|s| s.world(mesh, geom)).collect()
    }
}
