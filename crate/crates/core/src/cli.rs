//! `sysid` command-line front end: `simulate`, `fit` and `verify`.
//!
//! Exit codes: 0 success, 1 fit not converged or a verify suite failed,
//! 2 configuration error, 3 I/O error, 4 descent violation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::SysidError;
use crate::fit::{fit_with_observer, FitOptions};
use crate::io::{self, IoError};
use crate::linalg::from_rows;
use crate::model::{ModelSpec, SpecDocument, TimeGrid};
use crate::simulate::{make_control, simulate_sde, ControlKind, SimResult};
use crate::verify::{self, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DESCENT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "sysid",
    version,
    about = "Joint state estimation and identification of linear continuous-time systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and its ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit (A, B) and the latent trajectory to a dataset.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol_step: Option<f64>,
        #[arg(long)]
        tol_stat: Option<f64>,
    },
    /// Run the built-in oracle suites.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Corrupt the gradient under test to exercise the failure path.
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlConfig {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            kind: "zero".to_string(),
            params: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SimConfig {
    pub A_true: Vec<Vec<f64>>,
    pub B_true: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    pub noise_scale: f64,
}

/// Everything a run needs. The model comes either inline (`spec`) or from a
/// file (`spec_path`, relative to the config file).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form description; ignored.
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub spec: Option<SpecDocument>,
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Descent(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Descent(_) => EXIT_DESCENT,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Descent(m) | CliError::Failed(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn config_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

fn solver_err(e: SysidError) -> CliError {
    match e {
        SysidError::DescentViolation(v) => CliError::Descent(v.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parse a run config, keeping the raw JSON so it can be echoed.
pub fn load_config(path: &Path) -> Result<(RunConfig, serde_json::Value), CliError> {
    let text = read_text(path)?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_err(&path.display().to_string(), e))?;
    let config: RunConfig = serde_json::from_value(raw.clone())
        .map_err(|e| config_err(&path.display().to_string(), e))?;
    Ok((config, raw))
}

/// Resolve the model and grid of a config loaded from `config_path`.
pub fn resolve_spec(
    config: &RunConfig,
    config_path: &Path,
) -> Result<(ModelSpec, TimeGrid), CliError> {
    let doc = match (&config.spec, &config.spec_path) {
        (Some(doc), None) => doc.clone(),
        (None, Some(rel)) => {
            let path = config_path.parent().unwrap_or(Path::new(".")).join(rel);
            let text = read_text(&path)?;
            serde_json::from_str(&text).map_err(|e| config_err(&path.display().to_string(), e))?
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "config sets both `spec` and `spec_path`".to_string(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "config needs `spec` or `spec_path`".to_string(),
            ))
        }
    };
    doc.resolve().map_err(|e| config_err("spec", e))
}

fn out_dir(flag: &Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = flag
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    from_rows(name, rows).map_err(|e| config_err(name, e))
}

/// Simulate the `sim` block of a config. `seed` and `noise_scale` override the
/// configured values when given.
pub fn simulate_config(
    config: &RunConfig,
    spec: &ModelSpec,
    grid: &TimeGrid,
    seed: Option<u64>,
    noise_scale: Option<f64>,
) -> Result<SimResult, CliError> {
    let sim_cfg = config
        .sim
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing the `sim` block".to_string()))?;
    let seed = seed.unwrap_or(sim_cfg.seed);
    let a_true = matrix("A_true", &sim_cfg.A_true)?;
    let b_true = matrix("B_true", &sim_cfg.B_true)?;
    let kind: ControlKind = config
        .control
        .kind
        .parse()
        .map_err(|e| config_err("control.kind", e))?;
    let v = make_control(kind, &config.control.params, grid, spec.dims.d)
        .map_err(|e| config_err("control", e))?;
    let scale = noise_scale.unwrap_or(sim_cfg.noise_scale);
    simulate_sde(&a_true, &b_true, spec, grid, &v, seed, scale).map_err(|e| config_err("sim", e))
}

pub fn cmd_simulate(
    config_path: &Path,
    out: &Option<PathBuf>,
    seed: Option<u64>,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let (config, raw) = load_config(config_path)?;
    let (spec, grid) = resolve_spec(&config, config_path)?;
    let sim = simulate_config(&config, &spec, &grid, seed, None)?;
    let seed = sim.seed;

    let dir = out_dir(out, &config)?;
    let dataset_path = dir.join("dataset.csv");
    let truth_path = dir.join("truth.csv");
    io::write_dataset_csv(&dataset_path, &sim.dataset)?;
    io::write_truth_csv(&truth_path, &sim)?;
    let manifest = json!({
        "config": raw,
        "seed": seed,
        "spec": SpecDocument::from_spec(&spec, &grid),
        "dataset": "dataset.csv",
        "truth": "truth.csv",
    });
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    let _ = writeln!(
        stdout,
        "simulated {} intervals (seed {seed}) -> {}",
        grid.intervals(),
        dir.display()
    );
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    config_path: &Path,
    data: &Option<PathBuf>,
    out: &Option<PathBuf>,
    max_iters: Option<usize>,
    tol_step: Option<f64>,
    tol_stat: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let (config, _) = load_config(config_path)?;
    let (spec, grid) = resolve_spec(&config, config_path)?;
    let data_path = data
        .clone()
        .or_else(|| config.data.clone())
        .ok_or_else(|| CliError::Config("no dataset given (use --data)".to_string()))?;
    let mut options = config.fit.clone();
    if let Some(v) = max_iters {
        options.max_iters = v;
    }
    if let Some(v) = tol_step {
        options.tol_step = v;
    }
    if let Some(v) = tol_stat {
        options.tol_stat = v;
    }
    if options.max_iters == 0
        || options.tol_step.is_nan()
        || options.tol_step < 0.0
        || options.tol_stat.is_nan()
        || options.tol_stat < 0.0
    {
        return Err(CliError::Config(
            "fit options need max_iters >= 1 and non-negative tolerances".to_string(),
        ));
    }

    let dataset = io::read_dataset_csv(&data_path, spec.dims, grid)?;
    let report = fit_with_observer(&dataset, &spec, &options, |s| {
        let _ = writeln!(
            stdout,
            "iter {:4}  J {:.12e}  step {:.3e}",
            s.iter, s.j, s.step_norm
        );
    })
    .map_err(solver_err)?;

    let dir = out_dir(out, &config)?;
    io::write_json(&dir.join("report.json"), &io::ReportDocument::from(&report))?;
    io::write_descent_log(&dir.join("descent_log.csv"), &report)?;
    let _ = writeln!(
        stdout,
        "{} after {} sweeps ({}), J = {:.12e}",
        if report.converged {
            "converged"
        } else {
            "not converged"
        },
        report.iterations,
        report.stop_reason,
        report.j_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(if report.converged {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

pub fn cmd_verify(
    config_path: &Option<PathBuf>,
    seed: Option<u64>,
    inject_fault: bool,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut vc = match config_path {
        Some(path) => {
            let (config, _) = load_config(path)?;
            config.verify.unwrap_or_default()
        }
        None => VerifyConfig::default(),
    };
    if let Some(s) = seed {
        vc.seed = s;
    }
    vc.inject_fault |= inject_fault;
    vc.check_size().map_err(CliError::Config)?;
    vc.dims().map_err(|e| config_err("verify", e))?;

    let report =
        verify::run_all(&vc).map_err(|e| CliError::Failed(format!("verify aborted: {e}")))?;
    for s in &report.suites {
        let _ = writeln!(
            stdout,
            "{} {:<32} worst {:.3e}  threshold {:.1e}  cases {:3}  {:.2}s{}",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            s.worst,
            s.threshold,
            s.cases,
            s.seconds,
            s.failing_seed
                .map(|seed| format!("  failing seed {seed}"))
                .unwrap_or_default()
        );
    }
    if report.passed() {
        let _ = writeln!(stdout, "all suites passed (seed {})", report.seed);
        Ok(EXIT_OK)
    } else {
        let failed: Vec<String> = report
            .suites
            .iter()
            .filter(|s| !s.passed)
            .map(|s| {
                format!(
                    "{} (seed {})",
                    s.name,
                    s.failing_seed.unwrap_or(report.seed)
                )
            })
            .collect();
        Err(CliError::Failed(format!(
            "failed suites: {}",
            failed.join(", ")
        )))
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(config, out, *seed, stdout),
        Command::Fit {
            config,
            data,
            out,
            max_iters,
            tol_step,
            tol_stat,
        } => cmd_fit(config, data, out, *max_iters, *tol_step, *tol_stat, stdout),
        Command::Verify {
            config,
            seed,
            inject_fault,
        } => cmd_verify(config, *seed, *inject_fault, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run(cli, &mut std::io::stdout(), &mut std::io::stderr())
}
