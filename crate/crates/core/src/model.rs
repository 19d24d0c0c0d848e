//! Domain types: model dimensions, known quantities, the time grid, and the
//! estimate containers shared by every solver.
//!
//! Signals follow one discretization throughout the crate. States `x` live on
//! the `M + 1` grid nodes; noise `w`, control `v`, observation rate `y` and
//! the adjoint `q` are piecewise constant on the `M` intervals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SysidError};
use crate::linalg::{self, check_finite, check_len, check_seq, check_shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Control dimension.
    pub d: usize,
    /// Process-noise dimension.
    pub m: usize,
    /// Observation dimension.
    pub p: usize,
}

impl Dims {
    pub fn new(n: usize, d: usize, m: usize, p: usize) -> Result<Self> {
        for (name, value) in [("N", n), ("d", d), ("m", m), ("p", p)] {
            if value == 0 {
                return Err(SysidError::shape(name, "a positive integer", 0));
            }
        }
        Ok(Dims { n, d, m, p })
    }
}

/// Every known quantity of the model: observation and noise maps, noise
/// covariances, the initial-state prior, the dynamics prior and the two
/// objective weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub dims: Dims,
    pub c: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub pi0: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub a0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Check shapes, covariance definiteness and weight signs.
///
/// Covariances with relative asymmetry below `1e-10` are returned
/// symmetrized, so validating twice yields the same value.
pub fn validate_spec(spec: ModelSpec) -> Result<ModelSpec> {
    let Dims { n, d, m, p } = spec.dims;
    Dims::new(n, d, m, p)?;
    check_shape("C", &spec.c, p, n)?;
    check_shape("G", &spec.g, n, m)?;
    check_shape("Q", &spec.q, m, m)?;
    check_shape("R", &spec.r, p, p)?;
    check_shape("Pi0", &spec.pi0, n, n)?;
    check_len("x0", &spec.x0, n)?;
    check_shape("A0", &spec.a0, n, n)?;
    check_shape("B0", &spec.b0, n, d)?;
    for (name, values) in [
        ("C", spec.c.as_slice()),
        ("G", spec.g.as_slice()),
        ("Q", spec.q.as_slice()),
        ("R", spec.r.as_slice()),
        ("Pi0", spec.pi0.as_slice()),
        ("x0", spec.x0.as_slice()),
        ("A0", spec.a0.as_slice()),
        ("B0", spec.b0.as_slice()),
    ] {
        check_finite(name, values)?;
    }
    for (name, value) in [("alpha", spec.alpha), ("beta", spec.beta)] {
        if !value.is_finite() || value <= 0.0 {
            return Err(SysidError::NonPositiveWeight {
                name: name.to_string(),
                value,
            });
        }
    }
    let q = linalg::symmetric_positive_definite("Q", &spec.q)?;
    let r = linalg::symmetric_positive_definite("R", &spec.r)?;
    let pi0 = linalg::symmetric_positive_definite("Pi0", &spec.pi0)?;
    Ok(ModelSpec { q, r, pi0, ..spec })
}

/// Inverse covariances used by the quadratic terms.
#[derive(Debug, Clone)]
pub struct Precisions {
    pub q_inv: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub pi0_inv: DMatrix<f64>,
}

impl Precisions {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(Precisions {
            q_inv: linalg::spd_inverse(&spec.q, "inverse of Q")?,
            r_inv: linalg::spd_inverse(&spec.r, "inverse of R")?,
            pi0_inv: linalg::spd_inverse(&spec.pi0, "inverse of Pi0")?,
        })
    }
}

/// Uniform grid on `[0, T]` with `M` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

pub fn make_grid(horizon: f64, intervals: usize) -> Result<TimeGrid> {
    if !horizon.is_finite() || horizon <= 0.0 || intervals == 0 {
        return Err(SysidError::InvalidGrid { horizon, intervals });
    }
    Ok(TimeGrid { horizon, intervals })
}

impl TimeGrid {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.intervals {
            return self.horizon;
        }
        self.horizon * k as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|k| self.node(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsEstimate {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl DynamicsEstimate {
    pub fn prior(spec: &ModelSpec) -> Self {
        DynamicsEstimate {
            a: spec.a0.clone(),
            b: spec.b0.clone(),
        }
    }

    pub fn check(&self, dims: Dims) -> Result<()> {
        check_shape("A", &self.a, dims.n, dims.n)?;
        check_shape("B", &self.b, dims.n, dims.d)?;
        check_finite("A", self.a.as_slice())?;
        check_finite("B", self.b.as_slice())
    }
}

/// Discretized `(x, w)` together with the adjoint `q` it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    pub x: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub q: Vec<DVector<f64>>,
}

impl TrajectoryEstimate {
    pub fn check(&self, dims: Dims, grid: &TimeGrid) -> Result<()> {
        let m = grid.intervals();
        check_seq("x", &self.x, m + 1, dims.n)?;
        check_seq("w", &self.w, m, dims.m)?;
        check_seq("q", &self.q, m, dims.n)
    }
}

/// Control and observation-rate samples, one per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: TimeGrid,
    pub v: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(grid: TimeGrid, v: Vec<DVector<f64>>, y: Vec<DVector<f64>>) -> Result<Self> {
        if v.len() != grid.intervals() {
            return Err(SysidError::shape("v", grid.intervals(), v.len()));
        }
        if y.len() != grid.intervals() {
            return Err(SysidError::shape("y", grid.intervals(), y.len()));
        }
        Ok(Dataset { grid, v, y })
    }

    pub fn check(&self, dims: Dims) -> Result<()> {
        let m = self.grid.intervals();
        check_seq("v", &self.v, m, dims.d)?;
        check_seq("y", &self.y, m, dims.p)
    }
}

/// JSON form of a model spec plus its grid. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SpecDocument {
    pub N: usize,
    pub d: usize,
    pub m: usize,
    pub p: usize,
    pub C: Vec<Vec<f64>>,
    pub G: Vec<Vec<f64>>,
    pub Q: Vec<Vec<f64>>,
    pub R: Vec<Vec<f64>>,
    pub Pi0: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub A0: Vec<Vec<f64>>,
    pub B0: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
    pub T: f64,
    pub M: usize,
}

impl SpecDocument {
    /// Build and validate the spec and grid.
    pub fn resolve(&self) -> Result<(ModelSpec, TimeGrid)> {
        let dims = Dims::new(self.N, self.d, self.m, self.p)?;
        let spec = ModelSpec {
            dims,
            c: linalg::from_rows("C", &self.C)?,
            g: linalg::from_rows("G", &self.G)?,
            q: linalg::from_rows("Q", &self.Q)?,
            r: linalg::from_rows("R", &self.R)?,
            pi0: linalg::from_rows("Pi0", &self.Pi0)?,
            x0: DVector::from_vec(self.x0.clone()),
            a0: linalg::from_rows("A0", &self.A0)?,
            b0: linalg::from_rows("B0", &self.B0)?,
            alpha: self.alpha,
            beta: self.beta,
        };
        let spec = validate_spec(spec)?;
        let grid = make_grid(self.T, self.M)?;
        Ok((spec, grid))
    }

    pub fn from_spec(spec: &ModelSpec, grid: &TimeGrid) -> Self {
        let Dims { n, d, m, p } = spec.dims;
        SpecDocument {
            N: n,
            d,
            m,
            p,
            C: linalg::to_rows(&spec.c),
            G: linalg::to_rows(&spec.g),
            Q: linalg::to_rows(&spec.q),
            R: linalg::to_rows(&spec.r),
            Pi0: linalg::to_rows(&spec.pi0),
            x0: spec.x0.iter().copied().collect(),
            A0: linalg::to_rows(&spec.a0),
            B0: linalg::to_rows(&spec.b0),
            alpha: spec.alpha,
            beta: spec.beta,
            T: grid.horizon(),
            M: grid.intervals(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec() -> ModelSpec {
        let one = DMatrix::from_element(1, 1, 1.0);
        ModelSpec {
            dims: Dims::new(1, 1, 1, 1).unwrap(),
            c: one.clone(),
            g: one.clone(),
            q: one.clone(),
            r: one.clone(),
            pi0: one.clone(),
            x0: DVector::from_element(1, 1.0),
            a0: one.clone(),
            b0: one,
            alpha: 1.0,
            beta: 1.0,
        }
    }

    #[test]
    fn identity_case_is_valid() {
        let spec = scalar_spec();
        assert_eq!(validate_spec(spec.clone()).unwrap(), spec);
    }

    #[test]
    fn negative_q_is_not_spd() {
        let spec = ModelSpec {
            q: DMatrix::from_element(1, 1, -1.0),
            ..scalar_spec()
        };
        match validate_spec(spec) {
            Err(SysidError::NotSpd { name, .. }) => assert_eq!(name, "Q"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_c_shape() {
        let mut spec = scalar_spec();
        spec.dims = Dims::new(2, 1, 1, 1).unwrap();
        spec.c = DMatrix::zeros(2, 3);
        match validate_spec(spec) {
            Err(SysidError::DimensionMismatch { field, .. }) => assert_eq!(field, "C"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_weights() {
        for (alpha, beta, name) in [(0.0, 1.0, "alpha"), (1.0, -2.0, "beta")] {
            let spec = ModelSpec {
                alpha,
                beta,
                ..scalar_spec()
            };
            match validate_spec(spec) {
                Err(SysidError::NonPositiveWeight { name: n, .. }) => assert_eq!(n, name),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn validation_is_idempotent() {
        let mut spec = scalar_spec();
        spec.dims = Dims::new(2, 1, 2, 1).unwrap();
        spec.q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5 + 1e-14, 1.0]);
        spec.g = DMatrix::identity(2, 2);
        spec.pi0 = DMatrix::identity(2, 2);
        spec.c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        spec.x0 = DVector::zeros(2);
        spec.a0 = DMatrix::zeros(2, 2);
        spec.b0 = DMatrix::zeros(2, 1);
        let once = validate_spec(spec).unwrap();
        let twice = validate_spec(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn grid_nodes() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(2.0, 1).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 2.0]);
        assert!(matches!(
            make_grid(0.0, 4),
            Err(SysidError::InvalidGrid { .. })
        ));
        assert!(matches!(
            make_grid(1.0, 0),
            Err(SysidError::InvalidGrid { .. })
        ));
    }

    #[test]
    fn grid_spacing_within_roundoff() {
        for (t, m) in [(1.0, 7), (10.0, 1000), (3.3, 64), (0.1, 3)] {
            let g = make_grid(t, m).unwrap();
            let h = t / m as f64;
            let nodes = g.nodes();
            assert_eq!(nodes.len(), m + 1);
            assert_eq!(*nodes.last().unwrap(), t);
            for k in 0..m {
                assert!(nodes[k + 1] > nodes[k]);
                let gap = nodes[k + 1] - nodes[k];
                assert!((gap - h).abs() <= 2.0 * f64::EPSILON * t.max(1.0));
            }
        }
    }

    #[test]
    fn spec_document_round_trip() {
        let spec = scalar_spec();
        let grid = make_grid(1.0, 5).unwrap();
        let doc = SpecDocument::from_spec(&spec, &grid);
        let json = serde_json::to_string(&doc).unwrap();
        for key in ["\"N\"", "\"Pi0\"", "\"A0\"", "\"B0\"", "\"T\"", "\"M\""] {
            assert!(json.contains(key), "{key}");
        }
        let back: SpecDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolve().unwrap(), (spec, grid));
    }
}
