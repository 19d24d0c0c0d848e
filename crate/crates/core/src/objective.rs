//! The discretized objective `J`, its exact gradient, the adjoint `q`, and
//! the completion-of-squares identity for one alternating sweep.
//!
//! All integrals are left-endpoint rectangle sums and `dx/dt` is a forward
//! difference, so `J` is a sum of squares of affine maps and every identity
//! below holds exactly at the discrete level.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{check_seq, quad};
use crate::model::{
    Dataset, DynamicsEstimate, ModelSpec, Precisions, TimeGrid, TrajectoryEstimate,
};

/// One point `Z = (A, B, x, w)` of the alternating scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub dynamics: DynamicsEstimate,
    pub traj: TrajectoryEstimate,
}

fn check_inputs(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    v: &[DVector<f64>],
    spec: &ModelSpec,
    grid: &TimeGrid,
) -> Result<()> {
    let dims = spec.dims;
    let m = grid.intervals();
    dynamics.check(dims)?;
    check_seq("x", x, m + 1, dims.n)?;
    check_seq("w", w, m, dims.m)?;
    check_seq("v", v, m, dims.d)
}

/// Model defect `(x[k+1] - x[k]) / h - A x[k] - B v[k] - G w[k]` per interval.
pub(crate) fn defects(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    v: &[DVector<f64>],
    g: &DMatrix<f64>,
    h: f64,
) -> Vec<DVector<f64>> {
    (0..w.len())
        .map(|k| (&x[k + 1] - &x[k]) / h - &dynamics.a * &x[k] - &dynamics.b * &v[k] - g * &w[k])
        .collect()
}

/// Adjoint `q[k] = -beta * defect[k]` on each interval.
pub fn residual_q(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    v: &[DVector<f64>],
    spec: &ModelSpec,
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    check_inputs(dynamics, x, w, v, spec, grid)?;
    Ok(defects(dynamics, x, w, v, &spec.g, grid.step())
        .into_iter()
        .map(|d| d * -spec.beta)
        .collect())
}

impl TrajectoryEstimate {
    /// Pair `(x, w)` with the adjoint it induces under `dynamics`.
    pub fn with_adjoint(
        x: Vec<DVector<f64>>,
        w: Vec<DVector<f64>>,
        dynamics: &DynamicsEstimate,
        dataset: &Dataset,
        spec: &ModelSpec,
    ) -> Result<Self> {
        let q = residual_q(dynamics, &x, &w, &dataset.v, spec, &dataset.grid)?;
        Ok(TrajectoryEstimate { x, w, q })
    }
}

/// `J` split by term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    pub dynamics_prior: f64,
    pub model: f64,
    pub initial: f64,
    pub noise: f64,
    pub observation: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.dynamics_prior + self.model + self.initial + self.noise + self.observation
    }

    /// The part of `J` that depends on `(x, w)` alone plus the model term,
    /// i.e. the E-step objective `K`.
    pub fn estep_objective(&self) -> f64 {
        self.model + self.initial + self.noise + self.observation
    }
}

pub fn objective_terms(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<ObjectiveTerms> {
    let grid = &dataset.grid;
    check_inputs(dynamics, x, w, &dataset.v, spec, grid)?;
    check_seq("y", &dataset.y, grid.intervals(), spec.dims.p)?;
    let prec = Precisions::new(spec)?;
    let h = grid.step();

    let dynamics_prior = 0.5
        * spec.alpha
        * ((&dynamics.a - &spec.a0).norm_squared() + (&dynamics.b - &spec.b0).norm_squared());
    let model = 0.5
        * spec.beta
        * h
        * defects(dynamics, x, w, &dataset.v, &spec.g, h)
            .iter()
            .map(|d| d.norm_squared())
            .sum::<f64>();
    let initial = 0.5 * quad(&prec.pi0_inv, &(&x[0] - &spec.x0));
    let noise = 0.5 * h * w.iter().map(|wk| quad(&prec.q_inv, wk)).sum::<f64>();
    let observation = 0.5
        * h
        * dataset
            .y
            .iter()
            .zip(x)
            .map(|(yk, xk)| quad(&prec.r_inv, &(yk - &spec.c * xk)))
            .sum::<f64>();
    Ok(ObjectiveTerms {
        dynamics_prior,
        model,
        initial,
        noise,
        observation,
    })
}

/// Discrete `J(A, B, x, w)`.
pub fn evaluate_j(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<f64> {
    Ok(objective_terms(dynamics, x, w, dataset, spec)?.total())
}

/// Gradient of the discrete `J` with respect to `(A, B, x nodes, w intervals)`.
///
/// The same layout doubles as a perturbation direction; [`GradientJ::pairing`]
/// is the Euclidean inner product over all blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientJ {
    pub da: DMatrix<f64>,
    pub db: DMatrix<f64>,
    pub dx: Vec<DVector<f64>>,
    pub dw: Vec<DVector<f64>>,
}

impl GradientJ {
    pub fn pairing(&self, direction: &GradientJ) -> f64 {
        self.da.dot(&direction.da)
            + self.db.dot(&direction.db)
            + self
                .dx
                .iter()
                .zip(&direction.dx)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
            + self
                .dw
                .iter()
                .zip(&direction.dw)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        let seq = |s: &[DVector<f64>]| s.iter().map(|v| v.amax()).fold(0.0, f64::max);
        self.da
            .amax()
            .max(self.db.amax())
            .max(seq(&self.dx))
            .max(seq(&self.dw))
    }
}

pub fn gradient_j(
    dynamics: &DynamicsEstimate,
    x: &[DVector<f64>],
    w: &[DVector<f64>],
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<GradientJ> {
    let q = residual_q(dynamics, x, w, &dataset.v, spec, &dataset.grid)?;
    check_seq("y", &dataset.y, dataset.grid.intervals(), spec.dims.p)?;
    let prec = Precisions::new(spec)?;
    let h = dataset.grid.step();
    let m = dataset.grid.intervals();

    let mut da = (&dynamics.a - &spec.a0) * spec.alpha;
    let mut db = (&dynamics.b - &spec.b0) * spec.alpha;
    for k in 0..m {
        da += &q[k] * x[k].transpose() * h;
        db += &q[k] * dataset.v[k].transpose() * h;
    }

    let dw = (0..m)
        .map(|k| (spec.g.transpose() * &q[k] + &prec.q_inv * &w[k]) * h)
        .collect();

    let mut dx = vec![DVector::zeros(spec.dims.n); m + 1];
    dx[0] += &prec.pi0_inv * (&x[0] - &spec.x0);
    let ct_rinv = spec.c.transpose() * &prec.r_inv;
    for k in 0..m {
        // x[k+1] enters defect k with weight 1/h, x[k] with -(I/h + A).
        dx[k + 1] -= &q[k];
        dx[k] += &q[k] + dynamics.a.transpose() * &q[k] * h;
        dx[k] -= &ct_rinv * (&dataset.y[k] - &spec.c * &x[k]) * h;
    }

    Ok(GradientJ { da, db, dx, dw })
}

/// Both sides of the per-sweep decrease identity, with the E-step and M-step
/// halves kept separate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentGap {
    /// `J(Z_n) - J(Z_{n+1})`.
    pub lhs: f64,
    /// Sum of the quadratic difference terms.
    pub rhs: f64,
    /// `J(A_n, B_n, x_n, w_n) - J(A_{n+1}, B_{n+1}, x_n, w_n)`.
    pub mstep_lhs: f64,
    pub mstep_rhs: f64,
    /// `J(A_{n+1}, B_{n+1}, x_n, w_n) - J(Z_{n+1})`.
    pub estep_lhs: f64,
    pub estep_rhs: f64,
    pub terms: GapTerms,
}

impl DescentGap {
    pub fn error(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapTerms {
    pub initial: f64,
    pub model_state: f64,
    pub noise: f64,
    pub observation: f64,
    pub dynamics_prior: f64,
    pub model_dynamics: f64,
}

/// Evaluate both sides of the descent identity between consecutive iterates,
/// where `next.dynamics` minimizes the M-step at `current.traj` and
/// `next.traj` minimizes the E-step at `next.dynamics`.
pub fn descent_gap(
    current: &Iterate,
    next: &Iterate,
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<DescentGap> {
    let grid = &dataset.grid;
    let (xn, wn) = (&current.traj.x, &current.traj.w);
    let (x1, w1) = (&next.traj.x, &next.traj.w);
    check_inputs(&current.dynamics, xn, wn, &dataset.v, spec, grid)?;
    check_inputs(&next.dynamics, x1, w1, &dataset.v, spec, grid)?;

    let j_current = evaluate_j(&current.dynamics, xn, wn, dataset, spec)?;
    let j_mixed = evaluate_j(&next.dynamics, xn, wn, dataset, spec)?;
    let j_next = evaluate_j(&next.dynamics, x1, w1, dataset, spec)?;

    let prec = Precisions::new(spec)?;
    let h = grid.step();
    let (a1, b1) = (&next.dynamics.a, &next.dynamics.b);
    let da = &current.dynamics.a - a1;
    let db = &current.dynamics.b - b1;

    let dx: Vec<DVector<f64>> = xn.iter().zip(x1).map(|(a, b)| a - b).collect();
    let dw: Vec<DVector<f64>> = wn.iter().zip(w1).map(|(a, b)| a - b).collect();

    let initial = 0.5 * quad(&prec.pi0_inv, &dx[0]);
    let mut model_state = 0.0;
    let mut noise = 0.0;
    let mut observation = 0.0;
    let mut model_dynamics = 0.0;
    for k in 0..grid.intervals() {
        let r = (&dx[k + 1] - &dx[k]) / h - a1 * &dx[k] - &spec.g * &dw[k];
        model_state += r.norm_squared();
        noise += quad(&prec.q_inv, &dw[k]);
        observation += quad(&prec.r_inv, &(&spec.c * &dx[k]));
        model_dynamics += (&da * &xn[k] + &db * &dataset.v[k]).norm_squared();
    }
    let terms = GapTerms {
        initial,
        model_state: 0.5 * spec.beta * h * model_state,
        noise: 0.5 * h * noise,
        observation: 0.5 * h * observation,
        dynamics_prior: 0.5 * spec.alpha * (da.norm_squared() + db.norm_squared()),
        model_dynamics: 0.5 * spec.beta * h * model_dynamics,
    };
    let estep_rhs = terms.initial + terms.model_state + terms.noise + terms.observation;
    let mstep_rhs = terms.dynamics_prior + terms.model_dynamics;

    Ok(DescentGap {
        lhs: j_current - j_next,
        rhs: estep_rhs + mstep_rhs,
        mstep_lhs: j_current - j_mixed,
        mstep_rhs,
        estep_lhs: j_mixed - j_next,
        estep_rhs,
        terms,
    })
}
