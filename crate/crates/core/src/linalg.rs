//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SysidError};

/// Relative tolerance on the smallest eigenvalue of a covariance.
pub const SPD_REL_TOL: f64 = 1e-12;
/// Relative asymmetry below which a matrix is symmetrized instead of rejected.
pub const SYM_REL_TOL: f64 = 1e-10;

pub fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(SysidError::shape(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn check_len(name: &str, v: &DVector<f64>, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(SysidError::shape(name, len, v.len()));
    }
    Ok(())
}

pub fn check_seq(name: &str, seq: &[DVector<f64>], count: usize, len: usize) -> Result<()> {
    if seq.len() != count {
        return Err(SysidError::shape(
            name,
            format!("{count} entries"),
            format!("{} entries", seq.len()),
        ));
    }
    for (k, v) in seq.iter().enumerate() {
        if v.len() != len {
            return Err(SysidError::shape(&format!("{name}[{k}]"), len, v.len()));
        }
    }
    Ok(())
}

pub fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SysidError::NonFinite {
            name: name.to_string(),
        })
    }
}

/// Symmetrize a nearly symmetric matrix and confirm it is positive definite.
pub fn symmetric_positive_definite(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (m - m.transpose()).amax() / scale;
    if asymmetry > SYM_REL_TOL {
        return Err(SysidError::NotSymmetric {
            name: name.to_string(),
            asymmetry,
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen().eigenvalues;
    let min = eig.min();
    let max_abs = eig.amax();
    if min.is_nan() || min <= SPD_REL_TOL * max_abs {
        return Err(SysidError::NotSpd {
            name: name.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(sym)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// Inverse of an SPD matrix via Cholesky, symmetrized on output.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| SysidError::singular(context))?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `v · (m v)`
pub fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

pub fn max_norm(seq: &[DVector<f64>]) -> f64 {
    seq.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

pub fn zeros(count: usize, len: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(len); count]
}

/// Row-major nested rows into a matrix.
pub fn from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(SysidError::shape(
                &format!("{name} row {i}"),
                ncols,
                r.len(),
            ));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrizes_small_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0 + 1e-13, 2.0]);
        let s = symmetric_positive_definite("M", &m).unwrap();
        assert_eq!(s[(0, 1)], s[(1, 0)]);
    }

    #[test]
    fn rejects_large_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(
            symmetric_positive_definite("M", &m),
            Err(SysidError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match symmetric_positive_definite("Pi0", &m) {
            Err(SysidError::NotSpd {
                name,
                min_eigenvalue,
            }) => {
                assert_eq!(name, "Pi0");
                assert!((min_eigenvalue + 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(from_rows("C", &rows).is_err());
    }
}
