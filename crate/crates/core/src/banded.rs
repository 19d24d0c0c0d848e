//! Block Cholesky factorization of symmetric positive-definite block
//! tridiagonal matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SysidError};

/// Symmetric block tridiagonal matrix given by its diagonal blocks and the
/// blocks just above the diagonal (`upper[j]` sits at block `(j, j + 1)`).
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct BlockCholesky {
    /// Lower Cholesky factor of each pivot block.
    factors: Vec<DMatrix<f64>>,
    /// `coupling[j] = L_{j}^{-1} upper[j]`, the transposed sub-diagonal factor.
    coupling: Vec<DMatrix<f64>>,
    /// Schur-complement pivot blocks before factorization.
    pivots: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn factor(&self) -> Result<BlockCholesky> {
        assert_eq!(self.upper.len() + 1, self.diag.len());
        let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(self.len());
        let mut coupling = Vec::with_capacity(self.upper.len());
        let mut pivots = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let mut pivot = self.diag[j].clone();
            if j > 0 {
                let x: &DMatrix<f64> = &coupling[j - 1];
                pivot -= x.transpose() * x;
            }
            pivot = (&pivot + pivot.transpose()) * 0.5;
            let l = pivot
                .clone()
                .cholesky()
                .ok_or_else(|| {
                    SysidError::singular(&format!("block pivot {j} is not positive definite"))
                })?
                .l();
            if j < self.upper.len() {
                let x = l
                    .solve_lower_triangular(&self.upper[j])
                    .ok_or_else(|| SysidError::singular(&format!("block pivot {j}")))?;
                coupling.push(x);
            }
            factors.push(l);
            pivots.push(pivot);
        }
        Ok(BlockCholesky {
            factors,
            coupling,
            pivots,
        })
    }

    pub fn mul(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        (0..self.len())
            .map(|j| {
                let mut out = &self.diag[j] * &x[j];
                if j + 1 < self.len() {
                    out += &self.upper[j] * &x[j + 1];
                }
                if j > 0 {
                    out += self.upper[j - 1].tr_mul(&x[j - 1]);
                }
                out
            })
            .collect()
    }
}

impl BlockCholesky {
    pub fn solve(&self, rhs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.factors.len();
        assert_eq!(rhs.len(), n);
        let mut z: Vec<DVector<f64>> = Vec::with_capacity(n);
        for j in 0..n {
            let mut b = rhs[j].clone();
            if j > 0 {
                b -= self.coupling[j - 1].tr_mul(&z[j - 1]);
            }
            z.push(
                self.factors[j]
                    .solve_lower_triangular(&b)
                    .expect("factor has a positive diagonal"),
            );
        }
        let mut x = vec![DVector::zeros(0); n];
        for j in (0..n).rev() {
            let mut b = z[j].clone();
            if j + 1 < n {
                b -= &self.coupling[j] * &x[j + 1];
            }
            x[j] = self.factors[j]
                .tr_solve_lower_triangular(&b)
                .expect("factor has a positive diagonal");
        }
        x
    }

    pub fn pivots(&self) -> &[DMatrix<f64>] {
        &self.pivots
    }
}
