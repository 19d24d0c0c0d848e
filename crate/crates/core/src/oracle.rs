//! Reference solvers that reach the same answers as the production path by a
//! different route. They are deliberately naive: dense matrices over every
//! unknown, a textbook Kalman filter, and finite differences. Used by the
//! `verify` suites and the tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SysidError};
use crate::model::{Dataset, DynamicsEstimate, ModelSpec};

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| SysidError::singular(what))
}

/// Node states and interval noises.
pub type StateNoise = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Minimize `K` over all node states and interval noises at once by forming
/// the full normal equations of the weighted least-squares problem.
pub fn dense_estep(
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<StateNoise> {
    let (n, dm) = (spec.dims.n, spec.dims.m);
    let steps = dataset.grid.intervals();
    let h = dataset.grid.step();
    let nx = (steps + 1) * n;
    let total = nx + steps * dm;
    let xi = |k: usize| k * n;
    let wi = |k: usize| nx + k * dm;

    let q_inv = inverse(&spec.q, "Q")?;
    let r_inv = inverse(&spec.r, "R")?;
    let pi0_inv = inverse(&spec.pi0, "Pi0")?;

    let mut hess = DMatrix::<f64>::zeros(total, total);
    let mut grad = DVector::<f64>::zeros(total);
    // Adds (1/2)(J z + c)^T W (J z + c).
    let mut add = |jac: &DMatrix<f64>, c: &DVector<f64>, weight: &DMatrix<f64>| {
        let jt_w = jac.transpose() * weight;
        hess += &jt_w * jac;
        grad -= jt_w * c;
    };

    let mut jac = DMatrix::zeros(n, total);
    jac.view_mut((0, xi(0)), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    add(&jac, &(-&spec.x0), &pi0_inv);

    let model_weight = DMatrix::identity(n, n) * (spec.beta * h);
    for k in 0..steps {
        let mut jac = DMatrix::zeros(n, total);
        jac.view_mut((0, xi(k + 1)), (n, n))
            .copy_from(&(DMatrix::identity(n, n) / h));
        jac.view_mut((0, xi(k)), (n, n))
            .copy_from(&(-DMatrix::identity(n, n) / h - &dynamics.a));
        jac.view_mut((0, wi(k)), (n, dm)).copy_from(&(-&spec.g));
        add(&jac, &(-(&dynamics.b * &dataset.v[k])), &model_weight);

        let mut jac = DMatrix::zeros(dm, total);
        jac.view_mut((0, wi(k)), (dm, dm))
            .copy_from(&DMatrix::identity(dm, dm));
        add(&jac, &DVector::zeros(dm), &(&q_inv * h));

        let mut jac = DMatrix::zeros(spec.dims.p, total);
        jac.view_mut((0, xi(k)), (spec.dims.p, n))
            .copy_from(&(-&spec.c));
        add(&jac, &dataset.y[k], &(&r_inv * h));
    }

    let z = hess
        .lu()
        .solve(&grad)
        .ok_or_else(|| SysidError::singular("dense KKT system"))?;
    let x = (0..=steps).map(|k| z.rows(xi(k), n).into_owned()).collect();
    let w = (0..steps).map(|k| z.rows(wi(k), dm).into_owned()).collect();
    Ok((x, w))
}

/// Minimize `L` over `vec([A B])` using Kronecker-structured regressors.
pub fn dense_mstep(
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<DynamicsEstimate> {
    let (n, d) = (spec.dims.n, spec.dims.d);
    let h = dataset.grid.step();
    let width = n + d;
    let unknowns = n * width;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut prior = DMatrix::zeros(n, width);
    prior.columns_mut(0, n).copy_from(&spec.a0);
    prior.columns_mut(n, d).copy_from(&spec.b0);
    let prior_vec = DVector::from_column_slice(prior.as_slice());

    let mut hess = DMatrix::<f64>::identity(unknowns, unknowns) * spec.alpha;
    let mut rhs = prior_vec * spec.alpha;
    for k in 0..dataset.grid.intervals() {
        let mut z = DMatrix::zeros(1, width);
        for i in 0..n {
            z[(0, i)] = x[k][i];
        }
        for i in 0..d {
            z[(0, n + i)] = dataset.v[k][i];
        }
        let phi = z.kronecker(&eye);
        let target = (&x[k + 1] - &x[k]) / h - &spec.g * &w[k];
        hess += phi.transpose() * &phi * (spec.beta * h);
        rhs += phi.transpose() * target * (spec.beta * h);
    }
    let theta = hess
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SysidError::singular("dense M-step normal equations"))?;
    let theta = DMatrix::from_column_slice(n, width, theta.as_slice());
    Ok(DynamicsEstimate {
        a: theta.columns(0, n).into_owned(),
        b: theta.columns(n, d).into_owned(),
    })
}

/// Fixed-interval Rauch–Tung–Striebel smoother for the Euler-discretized model
/// `x[k+1] = (I + h A) x[k] + h B v[k] + noise(h G Q G^T)`,
/// `y[k] = C x[k] + noise(R / h)` for `k < M`, `x[0] ~ N(x0, Pi0)`.
/// Returns the smoothed means at all `M + 1` nodes.
pub fn rts_smoother(
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<Vec<DVector<f64>>> {
    let n = spec.dims.n;
    let steps = dataset.grid.intervals();
    let h = dataset.grid.step();
    let f = DMatrix::identity(n, n) + &dynamics.a * h;
    let process = &spec.g * &spec.q * spec.g.transpose() * h;
    let obs_cov = &spec.r / h;

    let mut x_pred = vec![spec.x0.clone()];
    let mut p_pred = vec![spec.pi0.clone()];
    let mut x_filt = Vec::with_capacity(steps + 1);
    let mut p_filt = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let (xp, pp) = (&x_pred[k], &p_pred[k]);
        let (xf, pf) = if k < steps {
            let s = &spec.c * pp * spec.c.transpose() + &obs_cov;
            let gain = pp * spec.c.transpose() * inverse(&s, "innovation covariance")?;
            let xf = xp + &gain * (&dataset.y[k] - &spec.c * xp);
            let pf = (DMatrix::identity(n, n) - &gain * &spec.c) * pp;
            (xf, pf)
        } else {
            (xp.clone(), pp.clone())
        };
        if k < steps {
            x_pred.push(&f * &xf + &dynamics.b * &dataset.v[k] * h);
            p_pred.push(&f * &pf * f.transpose() + &process);
        }
        x_filt.push(xf);
        p_filt.push(pf);
    }

    let mut smoothed = x_filt.clone();
    for k in (0..steps).rev() {
        let gain = &p_filt[k] * f.transpose() * inverse(&p_pred[k + 1], "predicted covariance")?;
        smoothed[k] = &x_filt[k] + gain * (&smoothed[k + 1] - &x_pred[k + 1]);
    }
    Ok(smoothed)
}

/// Central difference `(f(eps) - f(-eps)) / (2 eps)`.
pub fn central_difference(f: impl Fn(f64) -> f64, eps: f64) -> f64 {
    (f(eps) - f(-eps)) / (2.0 * eps)
}
