use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::math::Vec3;
use crate::optim::Scene;
use crate::synth::{raycast, Bvh, RayImage};

use super::atlas::AttributeAtlas;

/// Uniformly subdivided, displaced copy of the fitted mesh.
#[derive(Clone, Debug)]
pub struct BakedMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Source face of each triangle.
    pub parent: Vec<usize>,
    /// Barycentric coordinates of each triangle corner in its source face.
    pub corner_betas: Vec<[Vec3; 3]>,
}

/// Splits each face into `level²` triangles and offsets every lattice point
/// along the face normal by the baked displacement. Points on shared edges
/// and vertices are keyed by their global barycentric weights and take the
/// mean offset of all faces touching them, so the surface stays watertight.
pub fn tessellate_baked(atlas: &AttributeAtlas, scene: &Scene, level: usize) -> Result<BakedMesh> {
    if level == 0 {
        return Err(Error::InvalidArgument("tessellation level must be positive".into()));
    }
    if atlas.charts.len() != scene.mesh.num_faces() {
        return Err(Error::DimensionMismatch("atlas charts do not match mesh faces".into()));
    }
    let geom = scene.geometry()?;
    let t = level;
    let mut index: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut base: Vec<Vec3> = Vec::new();
    let mut offset: Vec<(Vec3, usize)> = Vec::new();
    let mut out = BakedMesh {
        positions: Vec::new(),
        triangles: Vec::new(),
        parent: Vec::new(),
        corner_betas: Vec::new(),
    };
    for (f, verts) in scene.mesh.faces().iter().enumerate() {
        let n = geom.face_normals[f];
        let mut local = HashMap::new();
        for a in 0..=t {
            for b in 0..=t - a {
                let nums = [t - a - b, a, b];
                let mut key: Vec<(usize, usize)> = (0..3).filter(|&m| nums[m] > 0).map(|m| (verts[m], nums[m])).collect();
                key.sort_unstable();
                let beta = Vec3::new(nums[0] as f64, nums[1] as f64, nums[2] as f64) / t as f64;
                let id = *index.entry(key).or_insert_with(|| {
                    base.push(geom.surface_point(&scene.mesh, f, &beta));
                    offset.push((Vec3::zeros(), 0));
                    base.len() - 1
                });
                let d = atlas.sample(&atlas.displacement, f, &beta)[0];
                offset[id].0 += n * d;
                offset[id].1 += 1;
                local.insert((a, b), (id, beta));
            }
        }
        for a in 0..t {
            for b in 0..t - a {
                let mut push = |c: [(usize, usize); 3]| {
                    let p = c.map(|k| local[&k]);
                    out.triangles.push(p.map(|x| x.0));
                    out.corner_betas.push(p.map(|x| x.1));
                    out.parent.push(f);
                };
                push([(a, b), (a + 1, b), (a, b + 1)]);
                if a + b + 1 < t {
                    push([(a + 1, b), (a + 1, b + 1), (a, b + 1)]);
                }
            }
        }
    }
    out.positions = base.iter().zip(&offset).map(|(p, (o, c))| p + o / *c as f64).collect();
    Ok(out)
}

/// Ray-cast render of a baked mesh with unlit diffuse premultiplied by the
/// baked coverage, over black.
pub fn render_baked(baked: &BakedMesh, atlas: &AttributeAtlas, camera: &Camera, parallel: bool) -> Result<RayImage> {
    let tris = baked.triangles.iter().map(|t| t.map(|i| baked.positions[i])).collect();
    let bvh = Bvh::from_triangles(tris);
    raycast(&bvh, camera, parallel, |hit, _| {
        let c = &baked.corner_betas[hit.face];
        let beta = c[0] * hit.beta[0] + c[1] * hit.beta[1] + c[2] * hit.beta[2];
        let v = atlas.sample(&atlas.diffuse, baked.parent[hit.face], &beta);
        Vec3::new(v[0], v[1], v[2]) * v[3]
    })
}
