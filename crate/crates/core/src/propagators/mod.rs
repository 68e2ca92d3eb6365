//! Piecewise-constant propagation.
//!
//! On interval `n` the generator is constant, `H_n = H(ε⃗_n)`, and the step
//! propagator is `U_n = exp(−i H_n dt_n)`. Derivatives `∂U_n/∂ε_nl` come from
//! the exponential of the block-triangular matrix
//!
//! ```text
//! B_l = [[−i H_n dt, −i μ_l dt],
//!        [    0,     −i H_n dt]]
//! ```
//!
//! whose upper-right block of `exp(B_l)` is exactly `∂U_n/∂ε_nl`.

mod expm;

pub use expm::expm;

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{mismatch, GrapeError, Result};
use crate::model::{ControlSet, Generator, Operator, StateVector, TimeGrid, Trajectory};

const MINUS_I: C64 = C64::new(0.0, -1.0);

/// Forward states on every grid point, optionally with the step propagators.
#[derive(Debug, Clone)]
pub struct PropagationRecord {
    /// `NT + 1` states, `states[n] = Ψ(t_n)`.
    pub states: Vec<StateVector>,
    /// `NT` step propagators `U_n`, present when requested.
    pub step_operators: Option<Vec<Operator>>,
}

impl PropagationRecord {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("record holds at least two states")
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(GrapeError::InvalidGrid(format!("time step must be positive, got {dt}")))
    }
}

/// `U = exp(−i H(ε⃗) dt)`
pub fn step_operator(generator: &Generator, controls: &[f64], dt: f64) -> Result<Operator> {
    check_dt(dt)?;
    let h = generator.evaluate(controls)?;
    expm(&h.scaled(MINUS_I * dt))
}

/// `exp(−i H(ε⃗_n) dt) |ψ⟩`
pub fn prop_step(generator: &Generator, controls: &[f64], dt: f64, state: &StateVector) -> Result<StateVector> {
    step_operator(generator, controls, dt)?.apply(state)
}

/// Exact step propagator and its derivatives `D_l = ∂U/∂ε_l` for every
/// control, one `2N × 2N` exponential per control.
pub fn step_derivatives(generator: &Generator, controls: &[f64], dt: f64) -> Result<(Operator, Vec<Operator>)> {
    check_dt(dt)?;
    let n = generator.dim();
    let h = generator.evaluate(controls)?;
    let diag = h.entries().mapv(|z| z * MINUS_I * dt);
    let mut u = None;
    let mut derivs = Vec::with_capacity(generator.n_controls());
    for l in 0..generator.n_controls() {
        let mu = generator.control_derivative(controls, l)?;
        let e = aux_exponential(&diag, &mu.entries().mapv(|z| z * MINUS_I * dt))?;
        if u.is_none() {
            u = Some(e.slice(s![..n, ..n]).to_owned());
        }
        derivs.push(Operator::from_array_unchecked(e.slice(s![..n, n..]).to_owned()));
    }
    let u = match u {
        Some(u) => Operator::from_array_unchecked(u),
        None => expm(&Operator::from_array_unchecked(diag))?,
    };
    Ok((u, derivs))
}

/// `(U|ψ⟩, [D_l|ψ⟩ for each control l])` with `D_l` from the auxiliary
/// block exponential.
pub fn prop_step_with_gradient(
    generator: &Generator,
    controls: &[f64],
    dt: f64,
    state: &StateVector,
) -> Result<(StateVector, Vec<StateVector>)> {
    if state.dim() != generator.dim() {
        return Err(mismatch("state for propagation", generator.dim(), state.dim()));
    }
    let (u, derivs) = step_derivatives(generator, controls, dt)?;
    let next = u.apply(state)?;
    let grads = derivs.iter().map(|d| d.apply(state)).collect::<Result<Vec<_>>>()?;
    Ok((next, grads))
}

/// First-order approximation `∂U/∂ε_l ≈ −i μ_l dt U`. Exact only when `μ_l`
/// commutes with `H`; used as a cross-check, never for optimization.
pub fn first_order_derivative(generator: &Generator, controls: &[f64], dt: f64, control: usize) -> Result<Operator> {
    let u = step_operator(generator, controls, dt)?;
    let mu = generator.control_derivative(controls, control)?;
    mu.scaled(MINUS_I * dt).matmul(&u)
}

fn aux_exponential(diag: &Array2<C64>, upper: &Array2<C64>) -> Result<Array2<C64>> {
    let n = diag.nrows();
    let mut b = Array2::zeros((2 * n, 2 * n));
    b.slice_mut(s![..n, ..n]).assign(diag);
    b.slice_mut(s![n.., n..]).assign(diag);
    b.slice_mut(s![..n, n..]).assign(upper);
    expm::expm_array(&b)
}

fn check_shapes(trajectory: &Trajectory, controls: &ControlSet, grid: &TimeGrid) -> Result<()> {
    if controls.n_intervals() != grid.n_intervals() {
        return Err(mismatch(
            "control intervals vs time grid",
            grid.n_intervals(),
            controls.n_intervals(),
        ));
    }
    if controls.n_controls() != trajectory.generator.n_controls() {
        return Err(mismatch(
            "controls vs generator",
            trajectory.generator.n_controls(),
            controls.n_controls(),
        ));
    }
    Ok(())
}

/// Propagates a trajectory over the whole grid. With `store`, the step
/// propagators are kept for a later [`backward_propagate`].
pub fn forward_propagate(
    trajectory: &Trajectory,
    controls: &ControlSet,
    grid: &TimeGrid,
    store: bool,
) -> Result<PropagationRecord> {
    check_shapes(trajectory, controls, grid)?;
    let nt = grid.n_intervals();
    let mut states = Vec::with_capacity(nt + 1);
    let mut ops = store.then(|| Vec::with_capacity(nt));
    states.push(trajectory.initial_state.clone());
    for n in 0..nt {
        let u = step_operator(&trajectory.generator, controls.interval(n), grid.dt(n))?;
        let next = u.apply(&states[n])?;
        states.push(next);
        if let Some(ops) = ops.as_mut() {
            ops.push(u);
        }
    }
    Ok(PropagationRecord {
        states,
        step_operators: ops,
    })
}

/// Final state only, without keeping intermediate states.
pub fn propagate_final(trajectory: &Trajectory, controls: &ControlSet, grid: &TimeGrid) -> Result<StateVector> {
    check_shapes(trajectory, controls, grid)?;
    let mut state = trajectory.initial_state.clone();
    for n in 0..grid.n_intervals() {
        state = prop_step(&trajectory.generator, controls.interval(n), grid.dt(n), &state)?;
    }
    Ok(state)
}

/// Backward sweep `χ(t_n) = U_n† χ(t_{n+1})` from `χ(t_NT) = χ_T`, using the
/// cached forward steps. Returns `NT + 1` states indexed by grid point.
pub fn backward_propagate(chi_final: &StateVector, record: &PropagationRecord) -> Result<Vec<StateVector>> {
    let ops = record.step_operators.as_ref().ok_or(GrapeError::MissingStepOperators)?;
    let nt = ops.len();
    let mut chis = vec![StateVector::from_array_unchecked(Array1::zeros(0)); nt + 1];
    chis[nt] = chi_final.clone();
    for n in (0..nt).rev() {
        chis[n] = ops[n].apply_adjoint(&chis[n + 1])?;
    }
    Ok(chis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{inner_product, pauli, ControlTerm};
    use std::f64::consts::FRAC_PI_2;

    fn tls() -> Generator {
        Generator::linear(Operator::zeros(2), vec![pauli::sigma_x()]).unwrap()
    }

    fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_generator_step_is_identity() {
        let g = Generator::linear(Operator::zeros(2), vec![]).unwrap();
        let psi = StateVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        assert_eq!(prop_step(&g, &[], 0.3, &psi).unwrap(), psi);
    }

    #[test]
    fn rabi_pi_pulse_step() {
        let out = prop_step(&tls(), &[FRAC_PI_2], 1.0, &StateVector::basis(2, 0)).unwrap();
        assert!(out.amplitudes()[0].norm() < 1e-12);
        assert!((out.amplitudes()[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn non_positive_dt_is_rejected() {
        assert!(prop_step(&tls(), &[1.0], 0.0, &StateVector::basis(2, 0)).is_err());
    }

    #[test]
    fn uncoupled_control_has_zero_derivative() {
        let g = Generator::new(pauli::sigma_z(), vec![ControlTerm::linear(0, pauli::sigma_x())], 2).unwrap();
        let psi = StateVector::basis(2, 0);
        let (_, grads) = prop_step_with_gradient(&g, &[0.3, 0.7], 0.5, &psi).unwrap();
        assert_eq!(grads.len(), 2);
        assert!(grads[1].amplitudes().iter().all(|z| z.norm() == 0.0));
        assert!(grads[0].norm() > 0.1);
    }

    #[test]
    fn commuting_derivative_is_first_order() {
        let (eps, dt) = (0.8, 0.45);
        let (u, d) = step_derivatives(&tls(), &[eps], dt).unwrap();
        let expected = pauli::sigma_x().scaled(MINUS_I * dt).matmul(&u).unwrap();
        assert!(max_diff(d[0].entries(), expected.entries()) < 1e-12);
        let approx = first_order_derivative(&tls(), &[eps], dt, 0).unwrap();
        assert!(max_diff(d[0].entries(), approx.entries()) < 1e-12);
    }

    #[test]
    fn aux_block_upper_left_is_step_operator() {
        let g = Generator::linear(pauli::sigma_z(), vec![pauli::sigma_x(), pauli::sigma_y()]).unwrap();
        let (u, _) = step_derivatives(&g, &[0.2, -0.4], 0.7).unwrap();
        let direct = step_operator(&g, &[0.2, -0.4], 0.7).unwrap();
        assert!(max_diff(u.entries(), direct.entries()) < 1e-14);
    }

    #[test]
    fn single_interval_forward_equals_step() {
        let grid = TimeGrid::uniform(0.0, 0.6, 1).unwrap();
        let traj = Trajectory::new(StateVector::basis(2, 0), tls(), None, 1.0).unwrap();
        let controls = ControlSet::constant(1, vec!["e".into()], 1.3).unwrap();
        let rec = forward_propagate(&traj, &controls, &grid, true).unwrap();
        let step = prop_step(&tls(), &[1.3], 0.6, &StateVector::basis(2, 0)).unwrap();
        assert_eq!(rec.states.len(), 2);
        assert_eq!(rec.final_state(), &step);
        assert_eq!(rec.step_operators.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn forward_shape_mismatch() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let traj = Trajectory::new(StateVector::basis(2, 0), tls(), None, 1.0).unwrap();
        let controls = ControlSet::constant(3, vec!["e".into()], 1.0).unwrap();
        assert!(matches!(
            forward_propagate(&traj, &controls, &grid, false),
            Err(GrapeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn backward_requires_cached_operators() {
        let grid = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let traj = Trajectory::new(StateVector::basis(2, 0), tls(), None, 1.0).unwrap();
        let controls = ControlSet::constant(2, vec!["e".into()], 1.0).unwrap();
        let rec = forward_propagate(&traj, &controls, &grid, false).unwrap();
        assert!(matches!(
            backward_propagate(&StateVector::basis(2, 1), &rec),
            Err(GrapeError::MissingStepOperators)
        ));
    }

    #[test]
    fn backward_through_identity() {
        let g = Generator::linear(Operator::zeros(2), vec![]).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 1).unwrap();
        let traj = Trajectory::new(StateVector::basis(2, 0), g, None, 1.0).unwrap();
        let controls = ControlSet::from_flat(vec![], 1, vec![]).unwrap();
        let rec = forward_propagate(&traj, &controls, &grid, true).unwrap();
        let chi = StateVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5)]).unwrap();
        let chis = backward_propagate(&chi, &rec).unwrap();
        assert_eq!(chis[0], chi);
    }

    #[test]
    fn overlap_is_conserved_along_the_sweep() {
        let g = Generator::linear(pauli::sigma_z(), vec![pauli::sigma_x()]).unwrap();
        let grid = TimeGrid::uniform(0.0, 2.0, 12).unwrap();
        let traj = Trajectory::new(StateVector::basis(2, 0), g, None, 1.0).unwrap();
        let vals: Vec<f64> = (0..12).map(|n| (n as f64 * 0.7).sin()).collect();
        let controls = ControlSet::from_flat(vals, 12, vec!["e".into()]).unwrap();
        let rec = forward_propagate(&traj, &controls, &grid, true).unwrap();
        let chi = StateVector::from_vec(vec![C64::new(0.1, 0.9), C64::new(0.4, -0.2)]).unwrap();
        let chis = backward_propagate(&chi, &rec).unwrap();
        let reference = inner_product(&chis[12], &rec.states[12]).unwrap();
        for (c, s) in chis.iter().zip(&rec.states) {
            let z = inner_product(c, s).unwrap();
            assert!((z - reference).norm() < 1e-10);
            assert!((c.norm() - chi.norm()).abs() < 1e-12);
        }
    }
}
