use std::collections::{HashMap, VecDeque};

use super::{triangle_normal, EPS_AREA};
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Fixed-topology triangle mesh with vertex-face and edge adjacency.
///
/// Local edge `e` of a face is the edge opposite its local vertex `e`, so a
/// negative barycentric coordinate `m` points across `edge_opposite[f][m]`.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    edge_opposite: Vec<[Option<usize>; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidMesh(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex")));
            }
        }
        let mut vertex_faces = vec![Vec::new(); nv];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for e in 0..3 {
                let a = f[(e + 1) % 3];
                let b = f[(e + 2) % 3];
                edges.entry((a.min(b), a.max(b))).or_default().push((fi, e));
            }
        }
        let mut edge_opposite = vec![[None; 3]; faces.len()];
        for (key, users) in &edges {
            match users.as_slice() {
                [_] => {}
                [(f0, e0), (f1, e1)] => {
                    edge_opposite[*f0][*e0] = Some(*f1);
                    edge_opposite[*f1][*e1] = Some(*f0);
                }
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} is shared by {} faces",
                        users.len()
                    )))
                }
            }
        }
        let mesh = Self {
            vertices,
            faces,
            vertex_faces,
            edge_opposite,
        };
        for f in 0..mesh.faces.len() {
            let area = mesh.face_area(f);
            if !(area > EPS_AREA) {
                return Err(Error::DegenerateFace { face: f, area });
            }
        }
        Ok(mesh)
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Face across local edge `e` of `face` (the edge opposite local vertex `e`).
    pub fn edge_opposite(&self, face: usize, e: usize) -> Option<usize> {
        self.edge_opposite[face][e]
    }

    pub fn is_closed(&self) -> bool {
        self.edge_opposite.iter().all(|e| e.iter().all(Option::is_some))
    }

    pub fn face_positions(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_positions(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn min_face_area_of(&self, positions: &[Vec3]) -> f64 {
        self.faces
            .iter()
            .map(|f| 0.5 * (positions[f[1]] - positions[f[0]]).cross(&(positions[f[2]] - positions[f[0]])).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Unit normal of a face from the template vertices.
    pub fn face_normal(&self, face: usize) -> Result<Vec3> {
        let [a, b, c] = self.face_positions(face);
        triangle_normal(a, b, c, face)
    }

    /// Unit normal of a face for an arbitrary set of vertex positions
    /// (e.g. globally transformed ones) sharing this topology.
    pub fn face_normal_with(&self, positions: &[Vec3], face: usize) -> Result<Vec3> {
        let f = self.faces[face];
        triangle_normal(positions[f[0]], positions[f[1]], positions[f[2]], face)
    }

    /// Local index (0..3) of vertex `v` within `face`.
    pub fn local_index(&self, face: usize, v: usize) -> Option<usize> {
        self.faces[face].iter().position(|&x| x == v)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut total = 0.0;
        for f in &self.faces {
            for e in 0..3 {
                total += (self.vertices[f[(e + 1) % 3]] - self.vertices[f[e]]).norm();
            }
        }
        total / (3 * self.faces.len()).max(1) as f64
    }

    /// Sorted unique neighbours of every vertex along mesh edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for e in 0..3 {
                let a = f[e];
                let b = f[(e + 1) % 3];
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    /// Signed enclosed volume; positive for a closed, outward-oriented mesh.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]];
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Checks that every edge is traversed in opposite directions by its two
    /// faces and that the enclosed volume is positive.
    pub fn check_closed_outward(&self) -> Result<()> {
        if !self.is_closed() {
            return Err(Error::InvalidMesh("mesh has boundary edges".into()));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for e in 0..3 {
                let a = f[(e + 1) % 3];
                let b = f[(e + 2) % 3];
                let g = self.faces[self.edge_opposite[fi][e].unwrap()];
                let same_direction = (0..3).any(|k| g[k] == a && g[(k + 1) % 3] == b);
                if same_direction {
                    return Err(Error::InvalidMesh(format!("faces {fi} are inconsistently oriented")));
                }
            }
        }
        if self.signed_volume() <= 0.0 {
            return Err(Error::InvalidMesh("mesh is inward-oriented".into()));
        }
        Ok(())
    }

    /// Faces reachable from `face` in at most `hops` steps across edges,
    /// starting with `face` itself, in breadth-first order.
    pub fn face_neighborhood(&self, face: usize, hops: usize) -> Vec<usize> {
        let mut seen = vec![false; self.faces.len()];
        let mut out = vec![face];
        seen[face] = true;
        let mut queue = VecDeque::from([(face, 0usize)]);
        while let Some((f, depth)) = queue.pop_front() {
            if depth == hops {
                continue;
            }
            for g in self.edge_opposite[f].iter().flatten() {
                if !seen[*g] {
                    seen[*g] = true;
                    out.push(*g);
                    queue.push_back((*g, depth + 1));
                }
            }
        }
        out
    }

    /// Bounding-sphere style diameter of the vertex set.
    pub fn diameter(&self) -> f64 {
        let c = self.vertices.iter().sum::<Vec3>() / self.vertices.len().max(1) as f64;
        2.0 * self.vertices.iter().map(|v| (v - c).norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn rejects_bad_indices_and_repeats() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(Mesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(Mesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn edge_opposite_is_an_involution() {
        let mesh = primitives::icosphere(2, 1.0);
        for f in 0..mesh.num_faces() {
            for e in 0..3 {
                let g = mesh.edge_opposite(f, e).unwrap();
                let back = (0..3).filter(|&k| mesh.edge_opposite(g, k) == Some(f)).count();
                assert_eq!(back, 1);
            }
        }
    }

    #[test]
    fn adjacency_is_consistent() {
        let mesh = primitives::cube_grid(3, 1.0);
        for v in 0..mesh.num_vertices() {
            for &f in mesh.vertex_faces(v) {
                assert!(mesh.faces()[f].contains(&v));
            }
        }
        mesh.check_closed_outward().unwrap();
    }

    #[test]
    fn inverted_mesh_fails_orientation_check() {
        let mesh = primitives::icosphere(1, 1.0);
        let flipped: Vec<[usize; 3]> = mesh.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        let bad = Mesh::new(mesh.vertices.clone(), flipped).unwrap();
        assert!(bad.check_closed_outward().is_err());
    }

    #[test]
    fn neighborhood_grows_with_hops() {
        let mesh = primitives::icosphere(2, 1.0);
        assert_eq!(mesh.face_neighborhood(0, 0), vec![0]);
        assert_eq!(mesh.face_neighborhood(0, 1).len(), 4);
        assert!(mesh.face_neighborhood(0, 3).len() > mesh.face_neighborhood(0, 2).len());
    }
}
