//! Synthetic data from the linear SDE model, integrated by Euler–Maruyama on
//! the estimation grid.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SysidError};
use crate::linalg::{check_finite, check_seq, check_shape};
use crate::model::{Dataset, ModelSpec, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub dataset: Dataset,
    pub x_true: Vec<DVector<f64>>,
    /// Noise rate on each interval; `h * w_true[k]` is the Wiener increment.
    pub w_true: Vec<DVector<f64>>,
    pub seed: u64,
}

fn cholesky_factor(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| SysidError::NotSpd {
            name: name.to_string(),
            min_eigenvalue: crate::linalg::min_eigenvalue(m),
        })
}

fn standard_normal(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Simulate states, noise and observation rates.
///
/// `x[k+1] = x[k] + h (A x[k] + B v[k]) + G dw[k]` with `dw[k] ~ N(0, s² h Q)`,
/// `x[0] ~ N(x0, s² Pi0)` and `y[k] = C x[k] + s eta[k]`, `eta[k] ~ N(0, R / h)`,
/// where `s` is `noise_scale`. The same seed always reproduces the same result.
pub fn simulate_sde(
    a_true: &DMatrix<f64>,
    b_true: &DMatrix<f64>,
    spec: &ModelSpec,
    grid: &TimeGrid,
    v: &[DVector<f64>],
    seed: u64,
    noise_scale: f64,
) -> Result<SimResult> {
    let dims = spec.dims;
    check_shape("A_true", a_true, dims.n, dims.n)?;
    check_shape("B_true", b_true, dims.n, dims.d)?;
    check_finite("A_true", a_true.as_slice())?;
    check_finite("B_true", b_true.as_slice())?;
    check_seq("v", v, grid.intervals(), dims.d)?;
    if !noise_scale.is_finite() || noise_scale < 0.0 {
        return Err(SysidError::NonPositiveWeight {
            name: "noise_scale".to_string(),
            value: noise_scale,
        });
    }

    let h = grid.step();
    let pi0_l = cholesky_factor(&spec.pi0, "Pi0")?;
    let q_l = cholesky_factor(&spec.q, "Q")?;
    let r_l = cholesky_factor(&spec.r, "R")?;
    let rate_scale = noise_scale / h.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(grid.intervals() + 1);
    let mut w = Vec::with_capacity(grid.intervals());
    let mut y = Vec::with_capacity(grid.intervals());

    x.push(&spec.x0 + &pi0_l * standard_normal(&mut rng, dims.n) * noise_scale);
    for vk in v {
        let xk = x.last().expect("x starts non-empty");
        let wk = &q_l * standard_normal(&mut rng, dims.m) * rate_scale;
        let yk = &spec.c * xk + &r_l * standard_normal(&mut rng, dims.p) * rate_scale;
        let drift = a_true * xk + b_true * vk + &spec.g * &wk;
        let next = xk + drift * h;
        w.push(wk);
        y.push(yk);
        x.push(next);
    }

    Ok(SimResult {
        dataset: Dataset::new(*grid, v.to_vec(), y)?,
        x_true: x,
        w_true: w,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Zero,
    Step,
    Sine,
    Multisine,
}

impl FromStr for ControlKind {
    type Err = SysidError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(ControlKind::Zero),
            "step" => Ok(ControlKind::Step),
            "sine" => Ok(ControlKind::Sine),
            "multisine" => Ok(ControlKind::Multisine),
            _ => Err(SysidError::UnknownKind(s.to_string())),
        }
    }
}

/// Control sequence sampled at interval left endpoints, identical on all `d`
/// channels.
///
/// Parameters by kind:
/// - `zero`: none
/// - `step`: `[amp]` or `[amp, onset]` (value is `amp` once `t >= onset`)
/// - `sine`: `[amp, freq]`, value `amp * sin(2 pi freq t)`
/// - `multisine`: `[amp_1, freq_1, amp_2, freq_2, ...]`, sum of sines
pub fn make_control(
    kind: ControlKind,
    params: &[f64],
    grid: &TimeGrid,
    d: usize,
) -> Result<Vec<DVector<f64>>> {
    let bad = |reason: &str| SysidError::InvalidControlParams {
        kind: format!("{kind:?}").to_lowercase(),
        reason: reason.to_string(),
    };
    check_finite("control params", params)?;
    let value: Box<dyn Fn(f64) -> f64> = match kind {
        ControlKind::Zero => {
            if !params.is_empty() {
                return Err(bad("expects no parameters"));
            }
            Box::new(|_| 0.0)
        }
        ControlKind::Step => match *params {
            [amp] => Box::new(move |_| amp),
            [amp, onset] => Box::new(move |t| if t >= onset { amp } else { 0.0 }),
            _ => return Err(bad("expects [amp] or [amp, onset]")),
        },
        ControlKind::Sine => match *params {
            [amp, freq] => Box::new(move |t| amp * (2.0 * PI * freq * t).sin()),
            _ => return Err(bad("expects [amp, freq]")),
        },
        ControlKind::Multisine => {
            if params.is_empty() || !params.len().is_multiple_of(2) {
                return Err(bad("expects (amp, freq) pairs"));
            }
            let pairs: Vec<(f64, f64)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
            Box::new(move |t| {
                pairs
                    .iter()
                    .map(|&(amp, freq)| amp * (2.0 * PI * freq * t).sin())
                    .sum()
            })
        }
    };
    Ok((0..grid.intervals())
        .map(|k| DVector::from_element(d, value(grid.node(k))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_grid, validate_spec, Dims};

    fn scalar_spec(x0: f64, pi0: f64) -> ModelSpec {
        let one = DMatrix::from_element(1, 1, 1.0);
        validate_spec(ModelSpec {
            dims: Dims::new(1, 1, 1, 1).unwrap(),
            c: DMatrix::from_element(1, 1, 2.0),
            g: one.clone(),
            q: one.clone(),
            r: one.clone(),
            pi0: DMatrix::from_element(1, 1, pi0),
            x0: DVector::from_element(1, x0),
            a0: DMatrix::zeros(1, 1),
            b0: DMatrix::zeros(1, 1),
            alpha: 1.0,
            beta: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn zero_dynamics_noise_free() {
        let spec = scalar_spec(0.7, 1.0);
        let grid = make_grid(1.0, 10).unwrap();
        let v = make_control(ControlKind::Sine, &[1.0, 1.0], &grid, 1).unwrap();
        let zero = DMatrix::zeros(1, 1);
        let sim = simulate_sde(&zero, &zero, &spec, &grid, &v, 3, 0.0).unwrap();
        assert!(sim.x_true.iter().all(|x| x[0] == 0.7));
        assert!(sim.dataset.y.iter().all(|y| y[0] == 2.0 * 0.7));
        assert!(sim.w_true.iter().all(|w| w[0] == 0.0));
    }

    #[test]
    fn forward_euler_tracks_exponential() {
        let spec = scalar_spec(1.0, 1.0);
        let grid = make_grid(1.0, 1000).unwrap();
        let v = make_control(ControlKind::Zero, &[], &grid, 1).unwrap();
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::zeros(1, 1);
        let sim = simulate_sde(&a, &b, &spec, &grid, &v, 0, 0.0).unwrap();
        let gap = (sim.x_true[1000][0] - 1f64.exp()).abs();
        assert!(gap < 2e-3, "gap {gap}");
        assert!(gap > 1e-4);
    }

    #[test]
    fn noise_free_is_exact_recursion() {
        let spec = scalar_spec(0.3, 1.0);
        let grid = make_grid(2.0, 50).unwrap();
        let v = make_control(ControlKind::Multisine, &[1.0, 0.5, 0.3, 2.0], &grid, 1).unwrap();
        let a = DMatrix::from_element(1, 1, -0.8);
        let b = DMatrix::from_element(1, 1, 1.5);
        let sim = simulate_sde(&a, &b, &spec, &grid, &v, 9, 0.0).unwrap();
        let h = grid.step();
        for (k, vk) in v.iter().enumerate() {
            let rhs = sim.x_true[k][0] + h * (-0.8 * sim.x_true[k][0] + 1.5 * vk[0]);
            assert!((sim.x_true[k + 1][0] - rhs).abs() <= 1e-15);
        }
    }

    #[test]
    fn seeded_determinism() {
        let spec = scalar_spec(0.0, 1.0);
        let grid = make_grid(1.0, 20).unwrap();
        let v = make_control(ControlKind::Step, &[1.0], &grid, 1).unwrap();
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let first = simulate_sde(&a, &b, &spec, &grid, &v, 42, 0.5).unwrap();
        let second = simulate_sde(&a, &b, &spec, &grid, &v, 42, 0.5).unwrap();
        assert_eq!(first, second);
        let other = simulate_sde(&a, &b, &spec, &grid, &v, 43, 0.5).unwrap();
        assert_ne!(first.x_true, other.x_true);
    }

    #[test]
    fn terminal_variance_of_brownian_state() {
        // Pi0 is tiny so the terminal variance is dominated by T * s^2.
        let spec = scalar_spec(0.0, 1e-8);
        let grid = make_grid(1.0, 10).unwrap();
        let v = make_control(ControlKind::Zero, &[], &grid, 1).unwrap();
        let zero = DMatrix::zeros(1, 1);
        let s = 0.5;
        let runs = 10_000;
        let finals: Vec<f64> = (0..runs)
            .map(|seed| {
                simulate_sde(&zero, &zero, &spec, &grid, &v, seed, s)
                    .unwrap()
                    .x_true[10][0]
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / runs as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let expected = grid.horizon() * s * s;
        assert!(((var - expected) / expected).abs() < 0.05, "var {var}");
    }

    #[test]
    fn control_examples() {
        let grid = make_grid(1.0, 3).unwrap();
        let zero = make_control(ControlKind::Zero, &[], &grid, 2).unwrap();
        assert_eq!(zero, vec![DVector::zeros(2); 3]);

        let grid = make_grid(1.0, 2).unwrap();
        let step = make_control(ControlKind::Step, &[2.0], &grid, 1).unwrap();
        assert_eq!(step, vec![DVector::from_element(1, 2.0); 2]);

        let grid = make_grid(1.0, 4).unwrap();
        let sine = make_control(ControlKind::Sine, &[1.0, 1.0], &grid, 1).unwrap();
        for (got, want) in sine.iter().zip([0.0, 1.0, 0.0, -1.0]) {
            assert!((got[0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn control_errors() {
        assert!(matches!(
            "chirp".parse::<ControlKind>(),
            Err(SysidError::UnknownKind(k)) if k == "chirp"
        ));
        let grid = make_grid(1.0, 4).unwrap();
        assert!(make_control(ControlKind::Sine, &[1.0], &grid, 1).is_err());
        assert!(make_control(ControlKind::Multisine, &[1.0, 2.0, 3.0], &grid, 1).is_err());
    }
}
