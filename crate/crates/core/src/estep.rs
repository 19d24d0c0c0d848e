//! State estimation for fixed dynamics: the exact minimizer of the convex
//! quadratic `K(A, B; x, w)` over the node states and interval noises.
//!
//! Each `w[k]` is eliminated in closed form, which leaves a symmetric
//! positive-definite block tridiagonal system in `x[0..=M]` with per-interval
//! weight `W = (G Q G^T + I / beta)^{-1}`. That system is solved by block
//! Cholesky, and `q` is recovered from the model defect.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::banded::{BlockCholesky, BlockTridiagonal};
use crate::error::{Result, SysidError};
use crate::linalg::{self, spd_inverse};
use crate::model::{Dataset, DynamicsEstimate, ModelSpec, Precisions, TrajectoryEstimate};
use crate::objective::objective_terms;

#[derive(Debug, Clone, PartialEq)]
pub struct EStepSolution {
    pub traj: TrajectoryEstimate,
    /// Value of `K` at the minimizer.
    pub objective_k: f64,
    pub residuals: EStepResiduals,
}

/// Max-norm defects of the discrete optimality system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EStepResiduals {
    pub forward: f64,
    pub backward: f64,
    pub bc_initial: f64,
    pub bc_terminal: f64,
}

impl EStepResiduals {
    pub fn max(&self) -> f64 {
        self.forward
            .max(self.backward)
            .max(self.bc_initial)
            .max(self.bc_terminal)
    }
}

/// Per-interval minimizer of `(beta/2)|d - G w|^2 + (1/2) Q^{-1} w . w`.
#[derive(Debug, Clone)]
pub struct NoiseEliminator {
    /// `beta (Q^{-1} + beta G^T G)^{-1} G^T`
    gain: DMatrix<f64>,
}

impl NoiseEliminator {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let q_inv = spd_inverse(&spec.q, "inverse of Q")?;
        let gtg = spec.g.tr_mul(&spec.g);
        let normal = q_inv + gtg * spec.beta;
        let chol = normal
            .cholesky()
            .ok_or_else(|| SysidError::singular("noise elimination"))?;
        let gain = chol.solve(&spec.g.transpose()) * spec.beta;
        Ok(NoiseEliminator { gain })
    }

    pub fn apply(&self, defect: &DVector<f64>) -> DVector<f64> {
        &self.gain * defect
    }
}

/// Optimal noise for a defect `d` computed without the `-G w` term.
pub fn eliminate_noise(defect: &DVector<f64>, spec: &ModelSpec) -> Result<DVector<f64>> {
    linalg::check_len("defect", defect, spec.dims.n)?;
    Ok(NoiseEliminator::new(spec)?.apply(defect))
}

/// `(G Q G^T + I / beta)^{-1}`, the weight left on the defect once the noise
/// has been minimized out.
pub fn effective_weight(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let n = spec.dims.n;
    let cov = &spec.g * &spec.q * spec.g.transpose() + DMatrix::identity(n, n) / spec.beta;
    spd_inverse(&cov, "effective model weight")
}

/// The reduced system in the node states, assembled but not yet factored.
pub(crate) fn assemble_state_system(
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<(BlockTridiagonal, Vec<DVector<f64>>)> {
    let n = spec.dims.n;
    let m = dataset.grid.intervals();
    let h = dataset.grid.step();
    let prec = Precisions::new(spec)?;
    let weight = effective_weight(spec)?;

    let f = DMatrix::identity(n, n) + &dynamics.a * h;
    let ft_w = f.tr_mul(&weight);
    let ft_w_f = &ft_w * &f;
    let ct_rinv = spec.c.tr_mul(&prec.r_inv);
    let obs_hess = &ct_rinv * &spec.c * h;

    let mut diag = Vec::with_capacity(m + 1);
    let mut upper = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let mut block = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        if j == 0 {
            block += &prec.pi0_inv;
            b += &prec.pi0_inv * &spec.x0;
        }
        if j >= 1 {
            let u_prev = &dynamics.b * &dataset.v[j - 1] * h;
            block += &weight / h;
            b += &weight * u_prev / h;
        }
        if j < m {
            let u = &dynamics.b * &dataset.v[j] * h;
            block += &ft_w_f / h + &obs_hess;
            b += &ct_rinv * &dataset.y[j] * h - &ft_w * u / h;
            upper.push(-&ft_w / h);
        }
        diag.push(block);
        rhs.push(b);
    }
    Ok((BlockTridiagonal { diag, upper }, rhs))
}

fn factor_and_solve(
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<(BlockCholesky, Vec<DVector<f64>>)> {
    dynamics.check(spec.dims)?;
    dataset.check(spec.dims)?;
    let (system, rhs) = assemble_state_system(dynamics, dataset, spec)?;
    let factor = system.factor()?;
    let x = factor.solve(&rhs);
    Ok((factor, x))
}

/// Smallest eigenvalue of every pivot block met during elimination.
pub fn pivot_min_eigenvalues(
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let (factor, _) = factor_and_solve(dynamics, dataset, spec)?;
    Ok(factor.pivots().iter().map(linalg::min_eigenvalue).collect())
}

/// Exact E-step for fixed `(A, B)`.
pub fn solve_estep(
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<EStepSolution> {
    let (_, x) = factor_and_solve(dynamics, dataset, spec)?;
    let h = dataset.grid.step();
    let eliminator = NoiseEliminator::new(spec)?;
    let w: Vec<DVector<f64>> = (0..dataset.grid.intervals())
        .map(|k| {
            let partial =
                (&x[k + 1] - &x[k]) / h - &dynamics.a * &x[k] - &dynamics.b * &dataset.v[k];
            eliminator.apply(&partial)
        })
        .collect();
    let traj = TrajectoryEstimate::with_adjoint(x, w, dynamics, dataset, spec)?;
    let objective_k = objective_terms(dynamics, &traj.x, &traj.w, dataset, spec)?.estep_objective();
    let mut sol = EStepSolution {
        traj,
        objective_k,
        residuals: EStepResiduals::default(),
    };
    sol.residuals = estep_residuals(&sol, dynamics, dataset, spec)?;
    Ok(sol)
}

/// Defects of the discrete forward–backward system at `sol`, using its stored
/// adjoint.
///
/// The backward recursion runs over interior nodes. The initial condition
/// extends it one step to a virtual `q[-1]`, and the terminal condition is
/// `q[M-1] = 0`.
pub fn estep_residuals(
    sol: &EStepSolution,
    dynamics: &DynamicsEstimate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<EStepResiduals> {
    let traj = &sol.traj;
    traj.check(spec.dims, &dataset.grid)?;
    let m = dataset.grid.intervals();
    let h = dataset.grid.step();
    let prec = Precisions::new(spec)?;
    let n = spec.dims.n;
    let coupling = &spec.g * &spec.q * spec.g.transpose() + DMatrix::identity(n, n) / spec.beta;
    let ct_rinv = spec.c.tr_mul(&prec.r_inv);
    let (x, q) = (&traj.x, &traj.q);
    let innovation = |k: usize| &ct_rinv * (&dataset.y[k] - &spec.c * &x[k]);

    let forward = (0..m)
        .map(|k| {
            ((&x[k + 1] - &x[k]) / h - &dynamics.a * &x[k] - &dynamics.b * &dataset.v[k]
                + &coupling * &q[k])
                .amax()
        })
        .fold(0.0, f64::max);
    let backward = (1..m)
        .map(|k| (-(&q[k] - &q[k - 1]) / h - dynamics.a.tr_mul(&q[k]) + innovation(k)).amax())
        .fold(0.0, f64::max);
    let q_start = &q[0] + (dynamics.a.tr_mul(&q[0]) - innovation(0)) * h;
    let bc_initial = (&x[0] - &spec.x0 + &spec.pi0 * q_start).amax();
    let bc_terminal = q[m - 1].amax();

    Ok(EStepResiduals {
        forward,
        backward,
        bc_initial,
        bc_terminal,
    })
}
