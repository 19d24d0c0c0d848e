//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

mod common;

use std::process::Command;
use std::time::Instant;

use common::{rel_error, shipped, SHIPPED};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sysid_core::estep::estep_residuals;
use sysid_core::verify::{self, random_point, random_problem, VerifyConfig};
use sysid_core::{
    fit, gradient_j, solve_estep, solve_mstep, Dims, DynamicsEstimate, FitOptions, FitReport,
    StopReason,
};

const GRADIENT_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-10;
const DESCENT_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-8;
const STEP_BUDGET: usize = 200;
const STAT_TOL: f64 = 1e-6;
const FIXED_POINT_TOL: f64 = 1e-9;
const SMOOTHER_TOL: f64 = 1e-4;
const VERIFY_SECONDS: f64 = 30.0;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn suite_line(s: &verify::SuiteResult) -> String {
    format!("{} worst {:.2e} over {} cases", s.name, s.worst, s.cases)
}

fn dims_list() -> [Dims; 2] {
    [
        Dims::new(2, 1, 2, 1).unwrap(),
        Dims::new(3, 2, 2, 2).unwrap(),
    ]
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for dims in dims_list() {
        for i in 0..20u64 {
            let seed = 1000 + i;
            let problem = random_problem(dims, 30, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = random_point(&problem, &mut rng);
            let dir = random_point(&problem, &mut rng);
            let dyn_ = DynamicsEstimate {
                a: z.da.clone(),
                b: z.db.clone(),
            };
            let analytic = gradient_j(&dyn_, &z.dx, &z.dw, &problem.dataset, &problem.spec)
                .unwrap()
                .pairing(&dir);
            let j = |t: f64| {
                let shift = |a: &[DVector<f64>], b: &[DVector<f64>]| -> Vec<DVector<f64>> {
                    a.iter().zip(b).map(|(u, v)| u + v * t).collect()
                };
                common::j_reference(
                    &problem.spec,
                    &problem.dataset,
                    &(&z.da + &dir.da * t),
                    &(&z.db + &dir.db * t),
                    &shift(&z.dx, &dir.dx),
                    &shift(&z.dw, &dir.dw),
                )
            };
            let fd = (j(FD_STEP) - j(-FD_STEP)) / (2.0 * FD_STEP);
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs());
            worst = worst.max(err);
            cases += 1;
        }
    }
    let suite = verify::gradient_suite(&VerifyConfig::default()).unwrap();
    outcome(
        worst <= GRADIENT_TOL && suite.passed,
        format!(
            "reference FD worst {worst:.2e} over {cases} instances; {}",
            suite_line(&suite)
        ),
    )
}

fn estep_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let problem = random_problem(
            Dims::new(2, 1, 2, 1).unwrap(),
            20 + 3 * i as usize,
            2000 + i,
        )
        .unwrap();
        let dyn_ = DynamicsEstimate {
            a: problem.a_true.clone(),
            b: problem.b_true.clone(),
        };
        let sol = solve_estep(&dyn_, &problem.dataset, &problem.spec).unwrap();
        let (x, w) = common::estep_by_probing(&dyn_, &problem.dataset, &problem.spec);
        worst = worst
            .max(rel_error(&sol.traj.x, &x))
            .max(rel_error(&sol.traj.w, &w));
    }
    let suite = verify::estep_suite(&VerifyConfig::default()).unwrap();
    outcome(
        worst <= ORACLE_TOL && suite.passed,
        format!(
            "probed-Hessian KKT worst {worst:.2e} over 10 instances; {}",
            suite_line(&suite)
        ),
    )
}

fn mstep_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for dims in dims_list() {
        for i in 0..10u64 {
            let problem = random_problem(dims, 40, 3000 + i).unwrap();
            let prior = DynamicsEstimate::prior(&problem.spec);
            let traj = solve_estep(&prior, &problem.dataset, &problem.spec)
                .unwrap()
                .traj;
            let got = solve_mstep(&traj.x, &traj.w, &problem.dataset, &problem.spec).unwrap();
            let want = common::mstep_by_probing(&traj.x, &traj.w, &problem.dataset, &problem.spec);
            let scale = want.a.amax().max(want.b.amax());
            worst = worst.max((&got.a - &want.a).amax().max((&got.b - &want.b).amax()) / scale);
        }
    }
    let suite = verify::mstep_suite(&VerifyConfig::default()).unwrap();
    outcome(
        worst <= ORACLE_TOL && suite.passed,
        format!(
            "probed-Hessian normal equations worst {worst:.2e} over 20 instances; {}",
            suite_line(&suite)
        ),
    )
}

fn descent_identity() -> Outcome {
    let suite = verify::descent_suite(&VerifyConfig::default()).unwrap();
    outcome(suite.passed, suite_line(&suite))
}

fn fit_shipped(name: &str, options: &FitOptions) -> FitReport {
    let run = shipped(name);
    let sim = run.simulate(None);
    fit(&sim.dataset, &run.spec, options).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn non_increasing(report: &FitReport) -> bool {
    report
        .j_history
        .windows(2)
        .all(|w| w[1] <= w[0] + DESCENT_TOL * (1.0 + w[0].abs()))
}

fn monotone_and_vanishing() -> Outcome {
    let step_only = FitOptions {
        tol_stat: 0.0,
        max_iters: STEP_BUDGET,
        ..FitOptions::default()
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for name in SHIPPED {
        let report = fit_shipped(name, &step_only);
        let first_small = report.step_norms.iter().position(|&s| s < STEP_TOL);
        ok &= non_increasing(&report) && first_small.is_some();
        notes.push(format!(
            "{name}: step<1e-8 at sweep {}",
            first_small.map_or("never".into(), |i| (i + 1).to_string())
        ));
    }
    for i in 0..5u64 {
        let problem = random_problem(Dims::new(2, 1, 2, 1).unwrap(), 40, 4000 + i).unwrap();
        let report = fit(&problem.dataset, &problem.spec, &FitOptions::default()).unwrap();
        ok &= non_increasing(&report);
    }
    outcome(
        ok,
        format!("J non-increasing on 8 fits; {}", notes.join(", ")),
    )
}

fn stationarity() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in SHIPPED {
        let report = fit_shipped(name, &FitOptions::default());
        let (est, mst) = (report.final_residuals.0.max(), report.final_residuals.1);
        ok &= report.converged && est <= STAT_TOL && mst <= STAT_TOL;
        notes.push(format!("{name}: estep {est:.1e} mstep {mst:.1e}"));
    }
    outcome(ok, notes.join(", "))
}

fn fixed_point() -> Outcome {
    let run = shipped("exact_fit");
    let sim = run.simulate(Some(0.0));
    let prior = DynamicsEstimate::prior(&run.spec);
    let report = fit(&sim.dataset, &run.spec, &FitOptions::default()).unwrap();
    let a_err = (&report.final_estimate.a - &run.spec.a0).amax();
    let sol = solve_estep(&report.final_estimate, &sim.dataset, &run.spec).unwrap();
    let est = estep_residuals(&sol, &report.final_estimate, &sim.dataset, &run.spec)
        .unwrap()
        .max();
    let stat = est.max(report.final_residuals.1);
    let ok = report.iterations == 1
        && report.stop_reason == StopReason::StepTol
        && stat <= FIXED_POINT_TOL
        && a_err <= FIXED_POINT_TOL
        && (&report.final_estimate.b - &prior.b).amax() <= FIXED_POINT_TOL;
    outcome(
        ok,
        format!(
            "{} sweep(s), stationarity {stat:.1e}, |A-A0| {a_err:.1e}",
            report.iterations
        ),
    )
}

fn smoother_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, intervals) in [16usize, 40, 64].into_iter().enumerate() {
        let (spec, data) = verify::smoother_problem(intervals, 5000 + i as u64).unwrap();
        let dyn_ = DynamicsEstimate::prior(&spec);
        let sol = solve_estep(&dyn_, &data, &spec).unwrap();
        let rts: Vec<DVector<f64>> = common::rts_scalar(&dyn_, &data, &spec)
            .into_iter()
            .map(|v| DVector::from_element(1, v))
            .collect();
        worst = worst.max(rel_error(&sol.traj.x, &rts));
    }
    let suite = verify::smoother_suite(&VerifyConfig::default()).unwrap();
    outcome(
        worst <= SMOOTHER_TOL && suite.passed,
        format!(
            "reference RTS worst {worst:.2e} at beta 1e8; {}",
            suite_line(&suite)
        ),
    )
}

fn recovery() -> Outcome {
    let run = shipped("oscillator");
    let sim_cfg = run.config.sim.clone().unwrap();
    let a_true = sysid_core::linalg::from_rows("A_true", &sim_cfg.A_true).unwrap();
    let prior_dist = (&run.spec.a0 - &a_true).norm();
    let ok_setup = run.grid.intervals() == 1000
        && (run.grid.horizon() - 10.0).abs() < 1e-12
        && prior_dist > 0.0;
    let mut dists = Vec::new();
    for scale in [0.1, 0.03, 0.01] {
        let sim = run.simulate(Some(scale));
        let report = fit(&sim.dataset, &run.spec, &FitOptions::default()).unwrap();
        dists.push((&report.final_estimate.a - &a_true).norm());
    }
    let ok = ok_setup && dists[2] < prior_dist && dists.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        ok,
        format!(
            "|A-A_true|_F at noise 0.1/0.03/0.01: {:.4}/{:.4}/{:.4}, prior {prior_dist:.4}",
            dists[0], dists[1], dists[2]
        ),
    )
}

fn verify_cli() -> Outcome {
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_sysid"))
        .arg("verify")
        .output()
        .expect("sysid binary runs");
    let secs = start.elapsed().as_secs_f64();
    let code = output.status.code();
    outcome(
        code == Some(0) && secs < VERIFY_SECONDS,
        format!("exit {code:?} in {secs:.2}s"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("E-step oracle equivalence", estep_oracle),
        ("M-step oracle equivalence", mstep_oracle),
        ("descent identity", descent_identity),
        (
            "monotone descent and vanishing steps",
            monotone_and_vanishing,
        ),
        ("stationarity at convergence", stationarity),
        ("fixed-point exactness", fixed_point),
        ("Kalman smoothing limit", smoother_limit),
        ("recovery sanity", recovery),
        ("verify command", verify_cli),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result =
            std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let tag = if result.passed { "PASS" } else { "FAIL" };
        println!("acceptance {:>2} {tag}  {name}: {}", i + 1, result.detail);
        failed += usize::from(!result.passed);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
