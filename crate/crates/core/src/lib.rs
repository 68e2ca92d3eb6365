//! Gradient ascent pulse engineering (GRAPE) for piecewise-constant quantum
//! optimal control.
//!
//! Controls `ε_nl` are constant on each interval `n` of a time grid. The
//! engine evaluates a final-time functional over one or more trajectories,
//! computes its exact gradient with a forward/backward sweep and
//! auxiliary-matrix propagator derivatives, and minimizes it with L-BFGS or
//! fixed-step gradient descent.
//!
//! ```
//! use grape::prelude::*;
//!
//! let generator = Generator::linear(Operator::zeros(2), vec![pauli::sigma_x()]).unwrap();
//! let trajectory = Trajectory::new(
//!     StateVector::basis(2, 0),
//!     generator,
//!     Some(StateVector::basis(2, 1)),
//!     1.0,
//! )
//! .unwrap();
//! let problem = ControlProblem::new(
//!     vec![trajectory],
//!     TimeGrid::uniform(0.0, 1.0, 20).unwrap(),
//!     FunctionalKind::SquareModulus.into(),
//!     ControlSet::constant(20, vec!["eps".into()], 1.0).unwrap(),
//! )
//! .unwrap();
//! let result = optimize(&problem, &OptimizerOptions::default()).unwrap();
//! assert!(result.converged);
//! ```

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod functionals;
pub mod liouville;
pub mod model;
pub mod optimizer;
pub mod propagators;

pub use error::{GrapeError, Result};

pub mod prelude {
    pub use crate::engine::{
        compute_gradient, evaluate_objective, finite_difference_gradient, finite_difference_gradient_scaled,
        max_relative_error, optimize, optimize_with_callback, with_workers, ControlProblem, GrapeResult,
        IterationRecord,
    };
    pub use crate::error::{GrapeError, Result};
    pub use crate::functionals::{FunctionalKind, FunctionalSpec};
    pub use crate::model::{
        inner_product, pauli, Amplitude, ControlSet, ControlTerm, Generator, Operator, StateVector, TimeGrid,
        Trajectory,
    };
    pub use crate::optimizer::{Method, OptimizerOptions};
    pub use num_complex::Complex64;
}
