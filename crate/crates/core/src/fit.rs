//! The alternating scheme: exact E-step at the current dynamics, exact M-step
//! at the resulting trajectory, repeated from the prior `(A0, B0)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SysidError};
use crate::estep::{solve_estep, EStepResiduals};
use crate::linalg::check_seq;
use crate::model::{Dataset, DynamicsEstimate, ModelSpec, TimeGrid, TrajectoryEstimate};
use crate::mstep::{mstep_stationarity, solve_mstep};
use crate::objective::{descent_gap, evaluate_j, DescentGap, Iterate};

/// Relative slack allowed on the per-sweep decrease of `J`.
pub const DESCENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop once `||Z_{n+1} - Z_n||` is at most this.
    pub tol_step: f64,
    /// Stop once the E-step and M-step stationarity residuals are at most this.
    pub tol_stat: f64,
    pub check_descent: bool,
    /// Start from this `(A, B)` instead of the prior.
    #[serde(skip)]
    pub warm_start: Option<DynamicsEstimate>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 200,
            tol_step: 1e-8,
            tol_stat: 1e-6,
            check_descent: true,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepTol,
    StatTol,
    MaxIters,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::StepTol => "step_tol",
            StopReason::StatTol => "stat_tol",
            StopReason::MaxIters => "max_iters",
        })
    }
}

/// Diagnostics recorded for one sweep `Z_n -> Z_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    /// Sweep number, starting at 1.
    pub iter: usize,
    /// `J(Z_{n+1})`.
    pub j: f64,
    pub step_norm: f64,
    pub gap: DescentGap,
    pub estep_residual: f64,
    pub mstep_residual: f64,
}

impl SweepRecord {
    pub fn gap_error(&self) -> f64 {
        self.gap.error()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    /// `J(Z_0), J(Z_1), ...`, one more entry than sweeps.
    pub j_history: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub descent_gap_errors: Vec<f64>,
    pub sweeps: Vec<SweepRecord>,
    pub final_estimate: DynamicsEstimate,
    pub final_traj: TrajectoryEstimate,
    pub final_residuals: (EStepResiduals, f64),
    pub converged: bool,
    pub stop_reason: StopReason,
}

/// Raised when a sweep increases `J` beyond [`DESCENT_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct DescentViolation {
    pub iteration: usize,
    pub j_before: f64,
    pub j_after: f64,
    pub gap: DescentGap,
}

impl fmt::Display for DescentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.gap;
        write!(
            f,
            "objective increased at sweep {}: J {:.12e} -> {:.12e}; \
             gap lhs {:.6e} rhs {:.6e} (M-step {:.6e} vs {:.6e}, E-step {:.6e} vs {:.6e}; \
             terms initial {:.3e} model_state {:.3e} noise {:.3e} observation {:.3e} \
             dynamics_prior {:.3e} model_dynamics {:.3e})",
            self.iteration,
            self.j_before,
            self.j_after,
            g.lhs,
            g.rhs,
            g.mstep_lhs,
            g.mstep_rhs,
            g.estep_lhs,
            g.estep_rhs,
            g.terms.initial,
            g.terms.model_state,
            g.terms.noise,
            g.terms.observation,
            g.terms.dynamics_prior,
            g.terms.model_dynamics,
        )
    }
}

/// Discrete counterpart of the `Z` norm:
/// `|dA|_F^2 + |dB|_F^2 + |dx[0]|^2 + h sum |d(dx/dt)|^2 + h sum |dw|^2`.
pub fn z_norm(z1: &Iterate, z2: &Iterate, grid: &TimeGrid) -> Result<f64> {
    let m = grid.intervals();
    let n = z1.dynamics.a.nrows();
    let dim_w = z1.traj.w.first().map_or(0, |w| w.len());
    if z1.dynamics.a.shape() != z2.dynamics.a.shape() {
        return Err(SysidError::shape(
            "A",
            format!("{:?}", z1.dynamics.a.shape()),
            format!("{:?}", z2.dynamics.a.shape()),
        ));
    }
    if z1.dynamics.b.shape() != z2.dynamics.b.shape() {
        return Err(SysidError::shape(
            "B",
            format!("{:?}", z1.dynamics.b.shape()),
            format!("{:?}", z2.dynamics.b.shape()),
        ));
    }
    for z in [z1, z2] {
        check_seq("x", &z.traj.x, m + 1, n)?;
        check_seq("w", &z.traj.w, m, dim_w)?;
    }
    let h = grid.step();
    let mut sq = (&z1.dynamics.a - &z2.dynamics.a).norm_squared()
        + (&z1.dynamics.b - &z2.dynamics.b).norm_squared();
    let dx: Vec<_> = z1
        .traj
        .x
        .iter()
        .zip(&z2.traj.x)
        .map(|(a, b)| a - b)
        .collect();
    sq += dx[0].norm_squared();
    for k in 0..m {
        sq += h * ((&dx[k + 1] - &dx[k]) / h).norm_squared();
        sq += h * (&z1.traj.w[k] - &z2.traj.w[k]).norm_squared();
    }
    Ok(sq.sqrt())
}

/// Run the alternating minimization until a stopping rule fires.
pub fn fit(dataset: &Dataset, spec: &ModelSpec, options: &FitOptions) -> Result<FitReport> {
    fit_with_observer(dataset, spec, options, |_| {})
}

/// As [`fit`], calling `observer` after every sweep.
pub fn fit_with_observer(
    dataset: &Dataset,
    spec: &ModelSpec,
    options: &FitOptions,
    mut observer: impl FnMut(&SweepRecord),
) -> Result<FitReport> {
    dataset.check(spec.dims)?;
    let grid = dataset.grid;
    let start = options
        .warm_start
        .clone()
        .unwrap_or_else(|| DynamicsEstimate::prior(spec));
    start.check(spec.dims)?;

    let sol = solve_estep(&start, dataset, spec)?;
    let mut current = Iterate {
        dynamics: start,
        traj: sol.traj,
    };
    let mut j_current = evaluate_j(
        &current.dynamics,
        &current.traj.x,
        &current.traj.w,
        dataset,
        spec,
    )?;
    let mut residuals = (
        sol.residuals,
        mstep_stationarity(
            &current.dynamics,
            &current.traj.x,
            &current.traj.q,
            &dataset.v,
            spec,
            &grid,
        )?,
    );

    let mut j_history = vec![j_current];
    let mut sweeps: Vec<SweepRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxIters;

    for iter in 1..=options.max_iters {
        let dynamics = solve_mstep(&current.traj.x, &current.traj.w, dataset, spec)?;
        let sol = solve_estep(&dynamics, dataset, spec)?;
        let next = Iterate {
            dynamics,
            traj: sol.traj,
        };
        let gap = descent_gap(&current, &next, dataset, spec)?;
        let j_next = evaluate_j(&next.dynamics, &next.traj.x, &next.traj.w, dataset, spec)?;
        if options.check_descent && j_next > j_current + DESCENT_TOL * (1.0 + j_current.abs()) {
            return Err(SysidError::DescentViolation(Box::new(DescentViolation {
                iteration: iter,
                j_before: j_current,
                j_after: j_next,
                gap,
            })));
        }
        let step_norm = z_norm(&current, &next, &grid)?;
        let mstep_residual = mstep_stationarity(
            &next.dynamics,
            &next.traj.x,
            &next.traj.q,
            &dataset.v,
            spec,
            &grid,
        )?;
        let record = SweepRecord {
            iter,
            j: j_next,
            step_norm,
            gap,
            estep_residual: sol.residuals.max(),
            mstep_residual,
        };
        observer(&record);
        sweeps.push(record);
        j_history.push(j_next);
        residuals = (sol.residuals, mstep_residual);
        current = next;
        j_current = j_next;

        if step_norm <= options.tol_step {
            stop_reason = StopReason::StepTol;
            break;
        }
        if record.estep_residual.max(mstep_residual) <= options.tol_stat {
            stop_reason = StopReason::StatTol;
            break;
        }
    }

    Ok(FitReport {
        iterations: sweeps.len(),
        j_history,
        step_norms: sweeps.iter().map(|s| s.step_norm).collect(),
        descent_gap_errors: sweeps.iter().map(SweepRecord::gap_error).collect(),
        sweeps,
        final_estimate: current.dynamics,
        final_traj: current.traj,
        final_residuals: residuals,
        converged: stop_reason != StopReason::MaxIters,
        stop_reason,
    })
}
