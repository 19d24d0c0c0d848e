//! Reference computations written independently of the library solvers.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sysid_core::cli::{load_config, resolve_spec, simulate_config, RunConfig};
use sysid_core::{gradient_j, Dataset, DynamicsEstimate, ModelSpec, SimResult, TimeGrid};

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub const SHIPPED: [&str; 3] = ["scalar", "oscillator", "exact_fit"];

pub struct Shipped {
    pub config: RunConfig,
    pub spec: ModelSpec,
    pub grid: TimeGrid,
}

pub fn shipped(name: &str) -> Shipped {
    let path = configs_dir().join(format!("{name}.json"));
    let (config, _) = load_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    let (spec, grid) = resolve_spec(&config, &path).unwrap_or_else(|e| panic!("{name}: {e}"));
    Shipped { config, spec, grid }
}

impl Shipped {
    pub fn simulate(&self, noise_scale: Option<f64>) -> SimResult {
        simulate_config(&self.config, &self.spec, &self.grid, None, noise_scale)
            .unwrap_or_else(|e| panic!("{e}"))
    }
}

fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

/// The objective by direct summation over the grid.
pub fn j_reference(
    spec: &ModelSpec,
    data: &Dataset,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
) -> f64 {
    let h = data.grid.step();
    let (q_inv, r_inv, p_inv) = (inv(&spec.q), inv(&spec.r), inv(&spec.pi0));
    let mut total =
        0.5 * spec.alpha * ((a - &spec.a0).norm_squared() + (b - &spec.b0).norm_squared());
    let e0 = &x[0] - &spec.x0;
    total += 0.5 * e0.dot(&(&p_inv * &e0));
    for k in 0..data.grid.intervals() {
        let slope = (&x[k + 1] - &x[k]) / h;
        let defect = slope - a * &x[k] - b * &data.v[k] - &spec.g * &w[k];
        let innov = &data.y[k] - &spec.c * &x[k];
        total += 0.5 * spec.beta * h * defect.norm_squared();
        total += 0.5 * h * w[k].dot(&(&q_inv * &w[k]));
        total += 0.5 * h * innov.dot(&(&r_inv * &innov));
    }
    total
}

fn flatten(parts: &[&[DVector<f64>]]) -> DVector<f64> {
    let values: Vec<f64> = parts
        .iter()
        .flat_map(|seq| seq.iter().flat_map(|v| v.iter().copied()))
        .collect();
    DVector::from_vec(values)
}

fn split(z: &DVector<f64>, count: usize, width: usize, offset: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            DVector::from_column_slice(&z.as_slice()[offset + k * width..offset + (k + 1) * width])
        })
        .collect()
}

/// Minimizer over `(x, w)` for fixed dynamics, from the Hessian of the
/// quadratic objective assembled column by column out of gradient probes.
pub fn estep_by_probing(
    dyn_: &DynamicsEstimate,
    data: &Dataset,
    spec: &ModelSpec,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let (n, m) = (spec.dims.n, spec.dims.m);
    let steps = data.grid.intervals();
    let nx = (steps + 1) * n;
    let total = nx + steps * m;
    let grad = |z: &DVector<f64>| {
        let x = split(z, steps + 1, n, 0);
        let w = split(z, steps, m, nx);
        let g = gradient_j(dyn_, &x, &w, data, spec).unwrap();
        flatten(&[&g.dx, &g.dw])
    };
    let zero = DVector::zeros(total);
    let g0 = grad(&zero);
    let mut hess = DMatrix::zeros(total, total);
    for i in 0..total {
        let mut e = zero.clone();
        e[i] = 1.0;
        hess.set_column(i, &(grad(&e) - &g0));
    }
    let z = hess.lu().solve(&(-g0)).expect("nonsingular Hessian");
    (split(&z, steps + 1, n, 0), split(&z, steps, m, nx))
}

/// Minimizer over `(A, B)` for a fixed trajectory, by the same probing.
pub fn mstep_by_probing(
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    data: &Dataset,
    spec: &ModelSpec,
) -> DynamicsEstimate {
    let (n, d) = (spec.dims.n, spec.dims.d);
    let na = n * n;
    let total = na + n * d;
    let unpack = |theta: &DVector<f64>| DynamicsEstimate {
        a: DMatrix::from_column_slice(n, n, &theta.as_slice()[..na]),
        b: DMatrix::from_column_slice(n, d, &theta.as_slice()[na..]),
    };
    let grad = |theta: &DVector<f64>| {
        let g = gradient_j(&unpack(theta), x, w, data, spec).unwrap();
        let mut out = DVector::zeros(total);
        out.rows_mut(0, na).copy_from_slice(g.da.as_slice());
        out.rows_mut(na, n * d).copy_from_slice(g.db.as_slice());
        out
    };
    let zero = DVector::zeros(total);
    let g0 = grad(&zero);
    let mut hess = DMatrix::zeros(total, total);
    for i in 0..total {
        let mut e = zero.clone();
        e[i] = 1.0;
        hess.set_column(i, &(grad(&e) - &g0));
    }
    unpack(&hess.lu().solve(&(-g0)).expect("nonsingular Hessian"))
}

/// Scalar Kalman filter plus Rauch–Tung–Striebel pass for
/// `x[k+1] = f x[k] + h b v[k] + N(0, h g² q)`, `y[k] = c x[k] + N(0, r / h)`.
pub fn rts_scalar(dyn_: &DynamicsEstimate, data: &Dataset, spec: &ModelSpec) -> Vec<f64> {
    let h = data.grid.step();
    let steps = data.grid.intervals();
    let (a, b) = (dyn_.a[(0, 0)], dyn_.b[(0, 0)]);
    let (c, g) = (spec.c[(0, 0)], spec.g[(0, 0)]);
    let f = 1.0 + h * a;
    let process = h * g * g * spec.q[(0, 0)];
    let obs = spec.r[(0, 0)] / h;

    let mut pred_mean = vec![0.0; steps + 1];
    let mut pred_var = vec![0.0; steps + 1];
    let mut filt_mean = vec![0.0; steps + 1];
    let mut filt_var = vec![0.0; steps + 1];
    pred_mean[0] = spec.x0[0];
    pred_var[0] = spec.pi0[(0, 0)];
    for k in 0..=steps {
        if k < steps {
            let gain = pred_var[k] * c / (c * c * pred_var[k] + obs);
            filt_mean[k] = pred_mean[k] + gain * (data.y[k][0] - c * pred_mean[k]);
            filt_var[k] = (1.0 - gain * c) * pred_var[k];
            pred_mean[k + 1] = f * filt_mean[k] + h * b * data.v[k][0];
            pred_var[k + 1] = f * f * filt_var[k] + process;
        } else {
            filt_mean[k] = pred_mean[k];
            filt_var[k] = pred_var[k];
        }
    }
    let mut smooth = filt_mean.clone();
    for k in (0..steps).rev() {
        let gain = filt_var[k] * f / pred_var[k + 1];
        smooth[k] = filt_mean[k] + gain * (smooth[k + 1] - pred_mean[k + 1]);
    }
    smooth
}

pub fn rel_error(got: &[DVector<f64>], want: &[DVector<f64>]) -> f64 {
    let scale = want
        .iter()
        .map(|v| v.amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).amax())
        .fold(0.0, f64::max)
        / scale
}
