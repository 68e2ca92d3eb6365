//! Batch front end: load a problem file, optimize, write logs and controls.
//!
//! Everything is validated before any computation or output, so an input
//! error never leaves partial files behind.

pub mod files;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::engine::{
    compute_gradient, finite_difference_gradient_scaled, max_relative_error, optimize_with_callback, ControlProblem,
    GrapeResult, IterationRecord,
};
use crate::functionals::{FunctionalKind, FunctionalSpec};
use crate::model::{Amplitude, ControlSet, ControlTerm, Generator, Operator, StateVector, TimeGrid, Trajectory};
use crate::optimizer::{Method, OptimizerOptions};
use files::{Coupling, FunctionalName, InitialKind, MatrixFile, MethodName, ProblemFile, ResultFile};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_GRADIENT_CHECK_FAILED: i32 = 3;

/// Threshold for `--check-gradient`.
pub const GRADIENT_CHECK_TOL: f64 = 1e-6;

pub const ITERATIONS_HEADER: &str = "iter,J,J_T,J_a,grad_norm,step,fidelity";

/// An input problem, tagged with the key or path it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub key: String,
    pub message: String,
}

impl InputError {
    fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for InputError {}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub check_gradient: bool,
    pub method: Option<Method>,
    pub max_iter: Option<usize>,
    pub seed: u64,
    pub quiet: bool,
}

/// A fully validated problem plus the optimizer settings from the file.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: ControlProblem,
    pub options: OptimizerOptions,
}

fn read_matrix(base: &Path, rel: &str, key: &str) -> Result<ndarray::Array2<num_complex::Complex64>, InputError> {
    let path = base.join(rel);
    MatrixFile::read(&path)
        .and_then(|m| m.to_array())
        .map_err(|e| InputError::new(key, e))
}

fn read_operator(base: &Path, rel: &str, key: &str) -> Result<Operator, InputError> {
    let m = read_matrix(base, rel, key)?;
    Operator::new(m).map_err(|e| InputError::new(key, e))
}

fn read_state(base: &Path, rel: &str, key: &str) -> Result<StateVector, InputError> {
    let m = read_matrix(base, rel, key)?;
    if m.ncols() != 1 {
        return Err(InputError::new(
            key,
            format!("a state needs cols = 1, found {}", m.ncols()),
        ));
    }
    StateVector::new(Array1::from_iter(m.column(0).iter().copied())).map_err(|e| InputError::new(key, e))
}

/// Parses and validates a problem file. Relative paths are resolved against
/// the directory containing the problem file.
pub fn load_problem(path: &Path, seed: u64) -> Result<LoadedProblem, InputError> {
    let path_key = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| InputError::new(&path_key, e))?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(|e| InputError::new(&path_key, e))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    build_problem(&file, &base, seed)
}

pub fn build_problem(file: &ProblemFile, base: &Path, seed: u64) -> Result<LoadedProblem, InputError> {
    let grid =
        TimeGrid::uniform(file.grid.t_start, file.grid.t_stop, file.grid.nt).map_err(|e| InputError::new("grid", e))?;
    let nt = grid.n_intervals();

    if file.controls.is_empty() {
        return Err(InputError::new("controls", "at least one control is required"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let labels: Vec<String> = file.controls.iter().map(|c| c.name.clone()).collect();
    let mut columns = Vec::with_capacity(labels.len());
    for (i, control) in file.controls.iter().enumerate() {
        let key = format!("controls[{i}]");
        if labels[..i].contains(&control.name) {
            return Err(InputError::new(
                format!("{key}.name"),
                format!("duplicate control name {:?}", control.name),
            ));
        }
        let number = || {
            control
                .value
                .as_f64()
                .ok_or_else(|| InputError::new(format!("{key}.value"), "expected a number"))
        };
        let column = match control.initial {
            InitialKind::Constant => vec![number()?; nt],
            InitialKind::Random => {
                let amplitude = number()?.abs();
                (0..nt).map(|_| rng.gen_range(-1.0..=1.0) * amplitude).collect()
            }
            InitialKind::File => {
                let rel = control
                    .value
                    .as_str()
                    .ok_or_else(|| InputError::new(format!("{key}.value"), "expected a path"))?;
                let p = base.join(rel);
                let text = fs::read_to_string(&p)
                    .map_err(|e| InputError::new(format!("{key}.value"), format!("{}: {e}", p.display())))?;
                let values: Vec<f64> = serde_json::from_str(&text)
                    .map_err(|e| InputError::new(format!("{key}.value"), format!("{}: {e}", p.display())))?;
                if values.len() != nt {
                    return Err(InputError::new(
                        format!("{key}.value"),
                        format!("{} values for {nt} intervals", values.len()),
                    ));
                }
                values
            }
        };
        columns.push(column);
    }
    let flat: Vec<f64> = (0..nt).flat_map(|n| columns.iter().map(move |c| c[n])).collect();
    let controls = ControlSet::from_flat(flat, nt, labels.clone()).map_err(|e| InputError::new("controls", e))?;

    if file.trajectories.is_empty() {
        return Err(InputError::new("trajectories", "at least one trajectory is required"));
    }
    let mut trajectories = Vec::with_capacity(file.trajectories.len());
    for (k, spec) in file.trajectories.iter().enumerate() {
        let key = format!("trajectories[{k}]");
        let drift = read_operator(base, &spec.drift, &format!("{key}.drift"))?;
        let dim = drift.dim();
        let initial = read_state(base, &spec.initial_state, &format!("{key}.initial_state"))?;
        if initial.dim() != dim {
            return Err(InputError::new(
                format!("{key}.initial_state"),
                format!("dimension {} does not match drift dimension {dim}", initial.dim()),
            ));
        }
        let target = match &spec.target_state {
            Some(rel) => {
                let t = read_state(base, rel, &format!("{key}.target_state"))?;
                if t.dim() != dim {
                    return Err(InputError::new(
                        format!("{key}.target_state"),
                        format!("dimension {} does not match drift dimension {dim}", t.dim()),
                    ));
                }
                Some(t)
            }
            None => {
                return Err(InputError::new(
                    format!("{key}.target_state"),
                    "required by the functional",
                ))
            }
        };
        let mut terms = Vec::with_capacity(spec.terms.len());
        for (m, term) in spec.terms.iter().enumerate() {
            let tkey = format!("{key}.terms[{m}]");
            let op = read_operator(base, &term.operator, &format!("{tkey}.operator"))?;
            if op.dim() != dim {
                return Err(InputError::new(
                    format!("{tkey}.operator"),
                    format!("dimension {} does not match drift dimension {dim}", op.dim()),
                ));
            }
            let l = labels.iter().position(|name| *name == term.control).ok_or_else(|| {
                InputError::new(format!("{tkey}.control"), format!("unknown control {:?}", term.control))
            })?;
            let amplitude = match term.coupling {
                Coupling::Linear => Amplitude::Linear(l),
                Coupling::Quadratic => Amplitude::Quadratic(l),
            };
            terms.push(ControlTerm::new(amplitude, op));
        }
        let generator = Generator::new(drift, terms, labels.len()).map_err(|e| InputError::new(&key, e))?;
        let traj = Trajectory::new(initial, generator, target, spec.weight).map_err(|e| InputError::new(&key, e))?;
        trajectories.push(traj);
    }

    let kind = match file.functional.kind {
        FunctionalName::Re => FunctionalKind::RealOverlap,
        FunctionalName::Ss => FunctionalKind::SquareModulus,
        FunctionalName::Sm => FunctionalKind::SquareModulusOfSum,
    };
    let functional =
        FunctionalSpec::new(kind, file.functional.lambda_a).map_err(|e| InputError::new("functional.lambda_a", e))?;

    let problem = ControlProblem::new(trajectories, grid, functional, controls).map_err(|e| match e {
        crate::GrapeError::InvalidTrajectory { index, message } => {
            InputError::new(format!("trajectories[{index}]"), message)
        }
        crate::GrapeError::MissingTarget(index) => InputError::new(
            format!("trajectories[{index}].target_state"),
            "required by the functional",
        ),
        other => InputError::new("problem", other),
    })?;

    let mut options = OptimizerOptions::default();
    let o = &file.optimizer;
    if let Some(m) = o.method {
        options.method = match m {
            MethodName::Lbfgs => Method::Lbfgs,
            MethodName::Gd => Method::GradientDescent,
        };
    }
    if let Some(a) = o.alpha {
        options.alpha = a;
    }
    if let Some(m) = o.memory {
        options.memory = m;
    }
    if let Some(m) = o.max_iter {
        options.max_iter = m;
    }
    if let Some(t) = o.j_t_tol {
        options.j_t_tol = t;
    }
    options.validate().map_err(|e| InputError::new("optimizer", e))?;
    Ok(LoadedProblem { problem, options })
}

/// One CSV row of `iterations.csv`; the progress lines use the same format.
pub fn format_record(r: &IterationRecord) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        r.iteration, r.j_total, r.j_t, r.j_running, r.grad_norm, r.step_size, r.fidelity
    )
}

fn write_outputs(out_dir: &Path, problem: &ControlProblem, result: &GrapeResult) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;

    let mut csv = String::from(ITERATIONS_HEADER);
    csv.push('\n');
    for r in &result.records {
        csv.push_str(&format_record(r));
        csv.push('\n');
    }
    fs::write(out_dir.join("iterations.csv"), csv)?;

    let controls = &result.optimized_controls;
    let mut csv = String::from("t_mid");
    for label in controls.labels() {
        csv.push(',');
        csv.push_str(label);
    }
    csv.push('\n');
    for (n, t) in problem.grid().midpoints().iter().enumerate() {
        csv.push_str(&format!("{t:.16e}"));
        for v in controls.interval(n) {
            csv.push_str(&format!(",{v:.16e}"));
        }
        csv.push('\n');
    }
    fs::write(out_dir.join("controls_opt.csv"), csv)?;

    let last = result.final_record();
    let summary = ResultFile {
        converged: result.converged,
        reason: result.reason.clone(),
        iterations: last.iteration,
        final_j_t: last.j_t,
        final_fidelity: last.fidelity,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
    fs::write(out_dir.join("result.json"), text + "\n")
}

/// Executes `run`, returning the process exit code. Thread count is a
/// process-wide setting and is applied by the binary, not here.
pub fn run(
    problem_path: &Path,
    out_dir: Option<&Path>,
    flags: &RunFlags,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let loaded = match load_problem(problem_path, flags.seed) {
        Ok(l) => l,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    let LoadedProblem { problem, mut options } = loaded;
    if let Some(m) = flags.method {
        options.method = m;
    }
    if let Some(m) = flags.max_iter {
        options.max_iter = m;
    }

    if flags.check_gradient {
        let controls = problem.initial_controls();
        let check = compute_gradient(&problem, controls).and_then(|(_, grad)| {
            let fd = finite_difference_gradient_scaled(&problem, controls, 1e-6)?;
            Ok(max_relative_error(grad.as_slice().unwrap(), fd.as_slice().unwrap()))
        });
        return match check {
            Ok(e) => {
                let _ = writeln!(out, "max relative gradient error: {e:.6e}");
                if e <= GRADIENT_CHECK_TOL {
                    EXIT_CONVERGED
                } else {
                    let _ = writeln!(err, "gradient check failed: {e:.6e} > {GRADIENT_CHECK_TOL:e}");
                    EXIT_GRADIENT_CHECK_FAILED
                }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_INPUT_ERROR
            }
        };
    }

    let Some(out_dir) = out_dir else {
        let _ = writeln!(err, "error: --out: an output directory is required");
        return EXIT_INPUT_ERROR;
    };

    if !flags.quiet {
        let _ = writeln!(out, "{ITERATIONS_HEADER}");
    }
    let result = optimize_with_callback(&problem, &options, |r| {
        if !flags.quiet {
            let _ = writeln!(out, "{}", format_record(r));
        }
    });
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    if let Err(e) = write_outputs(out_dir, &problem, &result) {
        let _ = writeln!(err, "error: {}: {e}", out_dir.display());
        return EXIT_INPUT_ERROR;
    }
    if !flags.quiet {
        let _ = writeln!(out, "{}", result.reason);
    }
    if result.converged {
        EXIT_CONVERGED
    } else {
        EXIT_NOT_CONVERGED
    }
}
