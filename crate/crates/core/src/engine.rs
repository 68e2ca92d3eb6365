//! Objective and exact gradient over all trajectories, and the optimization
//! loop driving them.
//!
//! For each trajectory the forward sweep stores `Ψ_k(t_n)` and `U_n`; the
//! boundary state `χ_k(T)` is propagated backward with `U_n†`, and
//!
//! ```text
//! ∂J_T/∂ε_nl = −2 Re Σ_k ⟨χ_k(t_{n+1})| ∂U_n/∂ε_nl |Ψ_k(t_n)⟩
//! ```
//!
//! with `∂U_n/∂ε_nl` from the auxiliary-matrix exponential. Trajectories and
//! intervals are processed in parallel; the sum over trajectories is always
//! taken in ascending `k`, so results do not depend on the thread count.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{GrapeError, Result};
use crate::functionals::{chi_numeric, chi_states, evaluate_j_t, running_cost, FunctionalKind, FunctionalSpec};
use crate::model::{dot_conj, ControlSet, StateVector, TimeGrid, Trajectory};
use crate::optimizer::{minimize, sup_norm, Evaluation, OptimizerOptions, StopReason};
use crate::propagators::{backward_propagate, forward_propagate, prop_step_with_gradient, propagate_final};

const NORM_TOL: f64 = 1e-12;

/// Trajectories, grid, functional and initial guess of one optimization.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    trajectories: Vec<Trajectory>,
    grid: TimeGrid,
    functional: FunctionalSpec,
    initial_controls: ControlSet,
}

impl ControlProblem {
    /// Checks mutual consistency and normalizes the trajectory weights to sum
    /// to one. Closed-system trajectories (Hermitian generators) must start
    /// from a normalized state.
    pub fn new(
        mut trajectories: Vec<Trajectory>,
        grid: TimeGrid,
        functional: FunctionalSpec,
        initial_controls: ControlSet,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(GrapeError::InvalidTrajectory {
                index: 0,
                message: "a problem needs at least one trajectory".into(),
            });
        }
        if initial_controls.n_intervals() != grid.n_intervals() {
            return Err(GrapeError::InvalidControls(format!(
                "controls have {} intervals, time grid has {}",
                initial_controls.n_intervals(),
                grid.n_intervals()
            )));
        }
        for (k, traj) in trajectories.iter().enumerate() {
            let invalid = |message: String| GrapeError::InvalidTrajectory { index: k, message };
            if traj.generator.n_controls() != initial_controls.n_controls() {
                return Err(invalid(format!(
                    "generator has {} controls, problem has {}",
                    traj.generator.n_controls(),
                    initial_controls.n_controls()
                )));
            }
            if functional.kind.is_builtin() && traj.target_state.is_none() {
                return Err(GrapeError::MissingTarget(k));
            }
            if traj.generator.is_hermitian() && (traj.initial_state.norm() - 1.0).abs() > NORM_TOL {
                return Err(invalid(format!(
                    "initial state of a closed system must be normalized (norm {})",
                    traj.initial_state.norm()
                )));
            }
        }
        let total: f64 = trajectories.iter().map(|t| t.weight).sum();
        for traj in &mut trajectories {
            traj.weight /= total;
        }
        Ok(Self {
            trajectories,
            grid,
            functional,
            initial_controls,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn functional(&self) -> &FunctionalSpec {
        &self.functional
    }

    pub fn initial_controls(&self) -> &ControlSet {
        &self.initial_controls
    }

    pub fn weights(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.weight).collect()
    }

    fn targets(&self) -> Vec<Option<StateVector>> {
        self.trajectories.iter().map(|t| t.target_state.clone()).collect()
    }

    fn check_controls(&self, controls: &ControlSet) -> Result<()> {
        if controls.n_intervals() != self.grid.n_intervals()
            || controls.n_controls() != self.initial_controls.n_controls()
        {
            return Err(GrapeError::InvalidControls(format!(
                "expected {} x {} controls, got {} x {}",
                self.grid.n_intervals(),
                self.initial_controls.n_controls(),
                controls.n_intervals(),
                controls.n_controls()
            )));
        }
        Ok(())
    }

    /// Final states of all trajectories under `controls`.
    pub fn final_states(&self, controls: &ControlSet) -> Result<Vec<StateVector>> {
        self.check_controls(controls)?;
        self.trajectories
            .par_iter()
            .map(|t| propagate_final(t, controls, &self.grid))
            .collect()
    }

    /// `(J_T, J_a)` by forward propagation only.
    pub fn evaluate_parts(&self, controls: &ControlSet) -> Result<(f64, f64)> {
        let finals = self.final_states(controls)?;
        let j_t = evaluate_j_t(&self.functional, &finals, &self.targets(), &self.weights())?;
        let (j_a, _) = running_cost(controls, &self.grid, self.functional.running_cost_weight)?;
        Ok((j_t, j_a))
    }

    /// `J_T`, `J_a` and the flattened gradient of `J = J_T + J_a`.
    pub fn gradient_evaluation(&self, controls: &ControlSet) -> Result<GradientEvaluation> {
        self.check_controls(controls)?;
        let records = self
            .trajectories
            .par_iter()
            .map(|t| forward_propagate(t, controls, &self.grid, true))
            .collect::<Result<Vec<_>>>()?;
        let finals: Vec<StateVector> = records.iter().map(|r| r.final_state().clone()).collect();
        let targets = self.targets();
        let weights = self.weights();
        let j_t = evaluate_j_t(&self.functional, &finals, &targets, &weights)?;
        let chis = match &self.functional.kind {
            FunctionalKind::Custom(f) => chi_numeric(|s, t, w| f(s, t, w), &finals, &targets, &weights)?,
            _ => chi_states(&self.functional, &finals, &targets, &weights)?,
        };

        let nt = self.grid.n_intervals();
        let nl = controls.n_controls();
        let per_trajectory = self
            .trajectories
            .par_iter()
            .zip(records.par_iter())
            .zip(chis.par_iter())
            .map(|((traj, record), chi)| {
                let chi_bw = backward_propagate(chi, record)?;
                (0..nt)
                    .into_par_iter()
                    .map(|n| {
                        let (_, dpsi) = prop_step_with_gradient(
                            &traj.generator,
                            controls.interval(n),
                            self.grid.dt(n),
                            &record.states[n],
                        )?;
                        Ok(dpsi
                            .iter()
                            .map(|d| -2.0 * dot_conj(chi_bw[n + 1].amplitudes(), d.amplitudes()).re)
                            .collect::<Vec<f64>>())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let (j_running, running_grad) = running_cost(controls, &self.grid, self.functional.running_cost_weight)?;
        let mut gradient = vec![0.0; nt * nl];
        for rows in &per_trajectory {
            for (n, row) in rows.iter().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    gradient[n * nl + l] += v;
                }
            }
        }
        for (g, r) in gradient.iter_mut().zip(running_grad.iter()) {
            *g += r;
        }
        Ok(GradientEvaluation {
            j_t,
            j_running,
            gradient,
        })
    }
}

/// One evaluation of `J` and `∇J` at a point of control space.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEvaluation {
    pub j_t: f64,
    pub j_running: f64,
    /// Flattened interval-major, `index = n·L + l`.
    pub gradient: Vec<f64>,
}

impl GradientEvaluation {
    pub fn j_total(&self) -> f64 {
        self.j_t + self.j_running
    }
}

impl Evaluation for GradientEvaluation {
    fn value(&self) -> f64 {
        self.j_total()
    }

    fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    fn target_value(&self) -> f64 {
        self.j_t
    }
}

/// `J = J_T + J_a` without storing intermediate states.
pub fn evaluate_objective(problem: &ControlProblem, controls: &ControlSet) -> Result<f64> {
    let (j_t, j_a) = problem.evaluate_parts(controls)?;
    Ok(j_t + j_a)
}

/// `(J, ∇J)` with the gradient shaped `NT × L`.
pub fn compute_gradient(problem: &ControlProblem, controls: &ControlSet) -> Result<(f64, Array2<f64>)> {
    let eval = problem.gradient_evaluation(controls)?;
    let grad = Array2::from_shape_vec((controls.n_intervals(), controls.n_controls()), eval.gradient.clone())
        .expect("gradient has NT·L entries");
    Ok((eval.j_total(), grad))
}

/// Central differences of [`evaluate_objective`] with a fixed step `h`.
pub fn finite_difference_gradient(problem: &ControlProblem, controls: &ControlSet, h: f64) -> Result<Array2<f64>> {
    fd_gradient(problem, controls, |_| h)
}

/// Central differences with step `h·(1 + |ε_nl|)` per entry.
pub fn finite_difference_gradient_scaled(
    problem: &ControlProblem,
    controls: &ControlSet,
    h: f64,
) -> Result<Array2<f64>> {
    fd_gradient(problem, controls, |e| h * (1.0 + e.abs()))
}

fn fd_gradient(
    problem: &ControlProblem,
    controls: &ControlSet,
    step: impl Fn(f64) -> f64 + Sync,
) -> Result<Array2<f64>> {
    problem.check_controls(controls)?;
    let base = controls.as_flat();
    let values = (0..base.len())
        .into_par_iter()
        .map(|i| {
            let h = step(base[i]);
            if !(h > 0.0) {
                return Err(GrapeError::InvalidOptions(format!(
                    "finite-difference step must be positive, got {h}"
                )));
            }
            let mut x = base.to_vec();
            x[i] = base[i] + h;
            let plus = evaluate_objective(problem, &controls.with_flat(x.clone())?)?;
            x[i] = base[i] - h;
            let minus = evaluate_objective(problem, &controls.with_flat(x)?)?;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Array2::from_shape_vec((controls.n_intervals(), controls.n_controls()), values).expect("NT·L entries"))
}

/// Normwise relative difference `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, zero when both
/// vanish.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()));
    let scale = sup_norm(a).max(sup_norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub j_total: f64,
    pub j_t: f64,
    pub j_running: f64,
    /// ∞-norm of the flattened gradient of `J`.
    pub grad_norm: f64,
    pub step_size: f64,
    /// `1 − J_T`
    pub fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct GrapeResult {
    pub optimized_controls: ControlSet,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub reason: String,
    pub stop: StopReason,
}

impl GrapeResult {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least the initial record")
    }
}

pub fn optimize(problem: &ControlProblem, options: &OptimizerOptions) -> Result<GrapeResult> {
    optimize_with_callback(problem, options, |_| {})
}

/// Runs the optimizer from the problem's initial controls, calling
/// `callback` with the record of every iteration (including iteration 0).
pub fn optimize_with_callback<C>(
    problem: &ControlProblem,
    options: &OptimizerOptions,
    mut callback: C,
) -> Result<GrapeResult>
where
    C: FnMut(&IterationRecord),
{
    options.validate()?;
    let template = problem.initial_controls();
    let mut records = Vec::new();
    let minimum = minimize(
        |x: &[f64]| problem.gradient_evaluation(&template.with_flat(x.to_vec())?),
        template.as_flat().to_vec(),
        options,
        |it| {
            let record = IterationRecord {
                iteration: it.iteration,
                j_total: it.eval.j_total(),
                j_t: it.eval.j_t,
                j_running: it.eval.j_running,
                grad_norm: sup_norm(&it.eval.gradient),
                step_size: it.step,
                fidelity: 1.0 - it.eval.j_t,
            };
            callback(&record);
            records.push(record);
        },
    )?;
    Ok(GrapeResult {
        optimized_controls: template.with_flat(minimum.x)?,
        records,
        converged: minimum.reason.converged(),
        reason: minimum.reason.to_string(),
        stop: minimum.reason,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}
