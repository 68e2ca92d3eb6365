//! Update rules on the flattened control vector: L-BFGS with a strong-Wolfe
//! line search (default) and fixed-step gradient descent.

mod lbfgs;
mod linesearch;

pub use lbfgs::{lbfgs_direction, LbfgsHistory};
pub use linesearch::{wolfe_line_search, LinePoint, LineSearchError, LineSearchOutcome, LineSearchParams};

use std::fmt;

use crate::error::{GrapeError, Result};
use lbfgs::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lbfgs,
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub method: Method,
    /// Number of stored L-BFGS correction pairs.
    pub memory: usize,
    /// Fixed step width for gradient descent.
    pub alpha: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_linesearch: usize,
    /// Stop once the final-time functional drops to this value.
    pub j_t_tol: f64,
    /// Stop when `|J_i − J_{i−1}|` falls to this value; disabled at 0.
    pub delta_j_tol: f64,
    /// Stop when `‖∇J‖∞` falls to this value; disabled at 0.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs,
            memory: 10,
            alpha: 0.1,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_linesearch: 20,
            j_t_tol: 1e-4,
            delta_j_tol: 0.0,
            grad_tol: 0.0,
            max_iter: 1000,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GrapeError::InvalidOptions(msg));
        if self.memory < 1 {
            return bad("memory must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return bad(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            ));
        }
        if self.max_linesearch < 1 {
            return bad("max_linesearch must be at least 1".into());
        }
        if self.j_t_tol.is_nan() || !(self.delta_j_tol >= 0.0) || !(self.grad_tol >= 0.0) {
            return bad("tolerances must be non-negative numbers".into());
        }
        Ok(())
    }

    pub fn line_search_params(&self) -> LineSearchParams {
        LineSearchParams {
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
            max_trials: self.max_linesearch,
            ..LineSearchParams::default()
        }
    }
}

/// `−α·∇J`, applied unconditionally.
pub fn gd_step(grad: &[f64], alpha: f64) -> Vec<f64> {
    grad.iter().map(|g| -alpha * g).collect()
}

/// Result of one objective evaluation.
pub trait Evaluation: Clone {
    fn value(&self) -> f64;
    fn gradient(&self) -> &[f64];
    /// The quantity compared against `j_t_tol`; the full value by default.
    fn target_value(&self) -> f64 {
        self.value()
    }
}

impl Evaluation for (f64, Vec<f64>) {
    fn value(&self) -> f64 {
        self.0
    }

    fn gradient(&self) -> &[f64] {
        &self.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    TargetReached,
    DeltaJ,
    GradientTolerance,
    MaxIterations,
    LineSearchFailure(String),
}

impl StopReason {
    pub fn converged(&self) -> bool {
        matches!(
            self,
            StopReason::TargetReached | StopReason::DeltaJ | StopReason::GradientTolerance
        )
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::TargetReached => write!(f, "J_T tolerance reached"),
            StopReason::DeltaJ => write!(f, "change in J below tolerance"),
            StopReason::GradientTolerance => write!(f, "gradient norm below tolerance"),
            StopReason::MaxIterations => write!(f, "maximum number of iterations reached"),
            StopReason::LineSearchFailure(msg) => write!(f, "line-search failure: {msg}"),
        }
    }
}

/// State handed to the observer after every iteration (iteration 0 is the
/// initial guess).
#[derive(Debug)]
pub struct Iterate<'a, E> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub eval: &'a E,
    /// Accepted line-search step `t`, the fixed `α` for gradient descent,
    /// 0 for the initial guess.
    pub step: f64,
    /// For L-BFGS iterations, whether the accepted step satisfies the strong
    /// Wolfe conditions.
    pub strong_wolfe: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Minimum<E> {
    pub x: Vec<f64>,
    pub eval: E,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_stop<E: Evaluation>(
    opts: &OptimizerOptions,
    iteration: usize,
    eval: &E,
    prev: Option<f64>,
) -> Option<StopReason> {
    if eval.target_value() <= opts.j_t_tol {
        return Some(StopReason::TargetReached);
    }
    if opts.grad_tol > 0.0 && sup_norm(eval.gradient()) <= opts.grad_tol {
        return Some(StopReason::GradientTolerance);
    }
    if let Some(prev) = prev {
        if opts.delta_j_tol > 0.0 && (eval.value() - prev).abs() <= opts.delta_j_tol {
            return Some(StopReason::DeltaJ);
        }
    }
    if iteration >= opts.max_iter {
        return Some(StopReason::MaxIterations);
    }
    None
}

/// Minimizes `objective` from `x0`, calling `observe` once per iteration.
///
/// Objective errors abort the run; a failed line search ends it with
/// [`StopReason::LineSearchFailure`].
pub fn minimize<E, Er, F, C>(
    mut objective: F,
    x0: Vec<f64>,
    opts: &OptimizerOptions,
    mut observe: C,
) -> std::result::Result<Minimum<E>, Er>
where
    E: Evaluation,
    F: FnMut(&[f64]) -> std::result::Result<E, Er>,
    C: FnMut(&Iterate<'_, E>),
{
    let mut x = x0;
    let mut eval = objective(&x)?;
    let mut evaluations = 1;
    let mut history = LbfgsHistory::new(opts.memory.max(1));
    let params = opts.line_search_params();
    let mut iteration = 0;
    observe(&Iterate {
        iteration,
        x: &x,
        eval: &eval,
        step: 0.0,
        strong_wolfe: None,
    });
    let mut prev_value = None;

    loop {
        if let Some(reason) = check_stop(opts, iteration, &eval, prev_value) {
            return Ok(Minimum {
                x,
                eval,
                iterations: iteration,
                evaluations,
                reason,
            });
        }
        prev_value = Some(eval.value());

        let (x_new, eval_new, step, strong_wolfe) = match opts.method {
            Method::GradientDescent => {
                let update = gd_step(eval.gradient(), opts.alpha);
                let x_new: Vec<f64> = x.iter().zip(&update).map(|(a, b)| a + b).collect();
                let e = objective(&x_new)?;
                evaluations += 1;
                (x_new, e, opts.alpha, None)
            }
            Method::Lbfgs => {
                let mut attempt = 0;
                loop {
                    let grad = eval.gradient();
                    let mut dir = lbfgs_direction(grad, &history);
                    let mut slope = dot(&dir, grad);
                    if !(slope < 0.0) {
                        history.clear();
                        dir = gd_step(grad, 1.0);
                        slope = dot(&dir, grad);
                    }
                    let x_ref = &x;
                    let dir_ref = &dir;
                    let search = wolfe_line_search(
                        |t| {
                            let xt: Vec<f64> = x_ref.iter().zip(dir_ref).map(|(a, d)| a + t * d).collect();
                            let e = objective(&xt)?;
                            Ok(LinePoint {
                                value: e.value(),
                                slope: dot(e.gradient(), dir_ref),
                                payload: (xt, e),
                            })
                        },
                        eval.value(),
                        slope,
                        &params,
                    );
                    match search {
                        Ok(out) => {
                            evaluations += out.evaluations;
                            let (x_new, e) = out.point.payload;
                            break (x_new, e, out.step, Some(out.strong_wolfe));
                        }
                        Err(LineSearchError::Objective(err)) => return Err(err),
                        Err(failure) => {
                            let message = match failure {
                                LineSearchError::NoDecrease(n) => {
                                    evaluations += n;
                                    format!("no step with sufficient decrease after {n} trials")
                                }
                                LineSearchError::NotDescent(g) => format!("directional derivative {g} is not negative"),
                                LineSearchError::Objective(_) => unreachable!(),
                            };
                            // Retry once along the steepest descent direction.
                            if attempt == 0 && !history.is_empty() {
                                history.clear();
                                attempt += 1;
                                continue;
                            }
                            return Ok(Minimum {
                                x,
                                eval,
                                iterations: iteration,
                                evaluations,
                                reason: StopReason::LineSearchFailure(message),
                            });
                        }
                    }
                }
            }
        };

        if opts.method == Method::Lbfgs {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = eval_new
                .gradient()
                .iter()
                .zip(eval.gradient())
                .map(|(a, b)| a - b)
                .collect();
            history.push(s, y);
        }
        x = x_new;
        eval = eval_new;
        iteration += 1;
        observe(&Iterate {
            iteration,
            x: &x,
            eval: &eval,
            step,
            strong_wolfe,
        });
    }
}
