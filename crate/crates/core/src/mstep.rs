//! Identification for a fixed trajectory: ridge regression of the state
//! difference quotient onto the stacked regressor `z[k] = (x[k], v[k])`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SysidError};
use crate::linalg::check_seq;
use crate::model::{Dataset, DynamicsEstimate, ModelSpec, TimeGrid};

/// Time-integrated second moments of the regressor and the regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSystem {
    /// `h * sum_k z[k] z[k]^T`, of size `(N + d) x (N + d)`.
    pub s: DMatrix<f64>,
    /// `h * sum_k ((x[k+1] - x[k]) / h - G w[k]) z[k]^T`, of size `N x (N + d)`.
    pub rhs: DMatrix<f64>,
}

pub fn assemble_gram(
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    v: &[DVector<f64>],
    spec: &ModelSpec,
    grid: &TimeGrid,
) -> Result<GramSystem> {
    let dims = spec.dims;
    let m = grid.intervals();
    check_seq("x", x, m + 1, dims.n)?;
    check_seq("w", w, m, dims.m)?;
    check_seq("v", v, m, dims.d)?;
    let h = grid.step();
    let width = dims.n + dims.d;
    let mut s = DMatrix::zeros(width, width);
    let mut rhs = DMatrix::zeros(dims.n, width);
    let mut z = DVector::zeros(width);
    for k in 0..m {
        z.rows_mut(0, dims.n).copy_from(&x[k]);
        z.rows_mut(dims.n, dims.d).copy_from(&v[k]);
        let target = (&x[k + 1] - &x[k]) / h - &spec.g * &w[k];
        s.ger(h, &z, &z, 1.0);
        rhs.ger(h, &target, &z, 1.0);
    }
    Ok(GramSystem { s, rhs })
}

/// Exact M-step: `[A B] (alpha I + beta S) = alpha [A0 B0] + beta RHS`.
pub fn solve_mstep(
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<DynamicsEstimate> {
    let gram = assemble_gram(x, w, &dataset.v, spec, &dataset.grid)?;
    solve_gram(&gram, spec)
}

pub fn solve_gram(gram: &GramSystem, spec: &ModelSpec) -> Result<DynamicsEstimate> {
    let (n, d) = (spec.dims.n, spec.dims.d);
    let width = n + d;
    let normal = DMatrix::identity(width, width) * spec.alpha + &gram.s * spec.beta;
    let mut prior = DMatrix::zeros(n, width);
    prior.columns_mut(0, n).copy_from(&spec.a0);
    prior.columns_mut(n, d).copy_from(&spec.b0);
    let target = prior * spec.alpha + &gram.rhs * spec.beta;
    let chol = normal
        .cholesky()
        .ok_or_else(|| SysidError::singular("M-step normal equations"))?;
    let theta = chol.solve(&target.transpose()).transpose();
    let estimate = DynamicsEstimate {
        a: theta.columns(0, n).into_owned(),
        b: theta.columns(n, d).into_owned(),
    };
    estimate.check(spec.dims)?;
    Ok(estimate)
}

/// `||alpha (A - A0) + h sum q x^T||_F + ||alpha (B - B0) + h sum q v^T||_F`.
pub fn mstep_stationarity(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    q: &[DVector<f64>],
    v: &[DVector<f64>],
    spec: &ModelSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    let dims = spec.dims;
    let m = grid.intervals();
    dynamics.check(dims)?;
    check_seq("x", x, m + 1, dims.n)?;
    check_seq("q", q, m, dims.n)?;
    check_seq("v", v, m, dims.d)?;
    let h = grid.step();
    let mut ra = (&dynamics.a - &spec.a0) * spec.alpha;
    let mut rb = (&dynamics.b - &spec.b0) * spec.alpha;
    for k in 0..m {
        ra.ger(h, &q[k], &x[k], 1.0);
        rb.ger(h, &q[k], &v[k], 1.0);
    }
    Ok(ra.norm() + rb.norm())
}
