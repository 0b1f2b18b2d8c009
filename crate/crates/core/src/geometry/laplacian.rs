use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::Mesh;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Uniform graph Laplacian: `L_ii = deg(i)`, `L_ij = -1` for every edge.
///
/// It depends on topology only, so one instance (and one factorization of
/// `I + λL`) stays valid however the vertices move.
#[derive(Clone, Debug)]
pub struct LaplacianMatrix {
    pub matrix: CscMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

pub fn build_laplacian(mesh: &Mesh) -> Result<LaplacianMatrix> {
    let neighbors = mesh.vertex_neighbors();
    if let Some(v) = neighbors.iter().position(Vec::is_empty) {
        return Err(Error::InvalidMesh(format!("vertex {v} is isolated")));
    }
    let n = neighbors.len();
    let mut coo = CooMatrix::new(n, n);
    for (i, nb) in neighbors.iter().enumerate() {
        coo.push(i, i, nb.len() as f64);
        for &j in nb {
            coo.push(i, j, -1.0);
        }
    }
    Ok(LaplacianMatrix {
        matrix: CscMatrix::from(&coo),
        neighbors,
    })
}

impl LaplacianMatrix {
    pub fn size(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `L x` for a per-vertex vector field.
    pub fn apply(&self, x: &[Vec3]) -> Vec<Vec3> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut acc = x[i] * nb.len() as f64;
                for &j in nb {
                    acc -= x[j];
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut d = DMatrix::zeros(n, n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            d[(i, i)] = nb.len() as f64;
            for &j in nb {
                d[(i, j)] = -1.0;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn tetrahedron_is_complete_graph() {
        let mesh = primitives::tetrahedron();
        let l = build_laplacian(&mesh).unwrap().to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(l[(i, j)], if i == j { 3.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn constants_are_in_the_null_space() {
        let mesh = primitives::cube_grid(4, 1.0);
        let l = build_laplacian(&mesh).unwrap();
        let ones = vec![Vec3::new(1.0, -2.0, 0.5); mesh.num_vertices()];
        assert!(l.apply(&ones).iter().all(|v| v.norm() < 1e-12));
        let d = l.to_dense();
        assert!((d.clone() - d.transpose()).amax() == 0.0);
    }

    #[test]
    fn icosahedron_spectrum_is_nonnegative() {
        let mesh = primitives::icosphere(0, 1.0);
        let l = build_laplacian(&mesh).unwrap().to_dense();
        let eig = l.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > -1e-12, "smallest eigenvalue {min}");
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let mut verts = primitives::tetrahedron().vertices;
        verts.push(Vec3::new(5.0, 5.0, 5.0));
        let mesh = Mesh::new(verts, primitives::tetrahedron().faces().to_vec()).unwrap();
        assert!(build_laplacian(&mesh).is_err());
    }
}
