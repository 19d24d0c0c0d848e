//! Joint estimation of the latent state and identification of the dynamics
//! `(A, B)` of a noisy linear continuous-time system from one input–output
//! record.
//!
//! The objective couples a ridge prior on `(A, B)`, a penalty on the model
//! defect `dx/dt - A x - B v - G w`, and the classical smoothing terms for the
//! initial state, process noise and observations. It is minimized by
//! alternating two exact convex solves:
//!
//! * [`estep::solve_estep`] finds the trajectory `(x, w)` for fixed `(A, B)`,
//! * [`mstep::solve_mstep`] finds `(A, B)` for a fixed trajectory,
//!
//! driven by [`fit::fit`], which checks the per-sweep decrease of `J` against
//! its exact completion-of-squares value.

pub mod banded;
pub mod cli;
pub mod error;
pub mod estep;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod model;
pub mod mstep;
pub mod objective;
pub mod oracle;
pub mod simulate;
pub mod verify;

pub use error::{Result, SysidError};
pub use estep::{solve_estep, EStepResiduals, EStepSolution};
pub use fit::{fit, FitOptions, FitReport, StopReason};
pub use model::{
    make_grid, validate_spec, Dataset, Dims, DynamicsEstimate, ModelSpec, SpecDocument, TimeGrid,
    TrajectoryEstimate,
};
pub use mstep::solve_mstep;
pub use objective::{evaluate_j, gradient_j, Iterate};
pub use simulate::{make_control, simulate_sde, ControlKind, SimResult};
