use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::geometry::LaplacianMatrix;
use crate::math::Vec3;

/// `(I + λL)⁻²` applied by two solves against one Cholesky factorization.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    lambda: f64,
    system: CscMatrix<f64>,
    factor: Option<CscCholesky<f64>>,
}

impl DiffusionOperator {
    pub fn new(laplacian: &LaplacianMatrix, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("diffusion lambda {lambda} must be non-negative")));
        }
        let n = laplacian.size();
        let mut coo = CooMatrix::new(n, n);
        for i in 0..n {
            coo.push(i, i, 1.0);
        }
        for (i, j, v) in laplacian.matrix.triplet_iter() {
            coo.push(i, j, lambda * v);
        }
        let system = CscMatrix::from(&coo);
        let factor = if lambda == 0.0 {
            None
        } else {
            Some(CscCholesky::factor(&system).map_err(|e| Error::Factorization(format!("{e:?}")))?)
        };
        Ok(Self { lambda, system, factor })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn size(&self) -> usize {
        self.system.nrows()
    }

    /// `x = (I + λL)⁻² g`. With `λ = 0` the input is returned unchanged.
    pub fn apply(&self, g: &[Vec3]) -> Vec<Vec3> {
        let Some(factor) = &self.factor else {
            return g.to_vec();
        };
        let b = to_matrix(g);
        let once = factor.solve(&b);
        from_matrix(&factor.solve(&once))
    }

    /// `(I + λL)² x`, used to check solves.
    pub fn apply_forward(&self, x: &[Vec3]) -> Vec<Vec3> {
        let m = to_matrix(x);
        let once = &self.system * &m;
        from_matrix(&(&self.system * &once))
    }

    /// `‖(I + λL)² x − g‖ / ‖g‖` in the Frobenius norm.
    pub fn relative_residual(&self, x: &[Vec3], g: &[Vec3]) -> f64 {
        let ax = self.apply_forward(x);
        let num: f64 = ax.iter().zip(g).map(|(a, b)| (a - b).norm_squared()).sum();
        let den: f64 = g.iter().map(|v| v.norm_squared()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

fn to_matrix(v: &[Vec3]) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), 3, |i, c| v[i][c])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec3> {
    (0..m.nrows()).map(|i| Vec3::new(m[(i, 0)], m[(i, 1)], m[(i, 2)])).collect()
}
