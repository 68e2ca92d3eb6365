#![allow(dead_code)]

use grape::prelude::*;
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_matrix(n: usize, scale: f64, rng: &mut StdRng) -> Operator {
    let m = Array2::from_shape_fn((n, n), |_| {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
    });
    Operator::new(m).unwrap()
}

pub fn random_hermitian(n: usize, scale: f64, rng: &mut StdRng) -> Operator {
    let a = random_matrix(n, scale, rng);
    let h = (a.entries() + &a.adjoint().into_inner()).mapv(|z| z * 0.5);
    Operator::new(h).unwrap()
}

pub fn random_state(n: usize, rng: &mut StdRng) -> StateVector {
    let v = StateVector::from_vec(
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap();
    let norm = v.norm();
    v.scaled(c(1.0 / norm, 0.0))
}

pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct RandomProblemShape {
    pub dim: usize,
    pub n_controls: usize,
    pub n_intervals: usize,
    pub n_trajectories: usize,
    pub hermitian: bool,
    pub quadratic: bool,
    pub functional: usize,
    pub lambda_a: f64,
}

impl RandomProblemShape {
    pub fn sample(index: usize, rng: &mut StdRng) -> Self {
        Self {
            dim: rng.gen_range(2..=6),
            n_controls: rng.gen_range(1..=3),
            n_intervals: rng.gen_range(1..=16),
            n_trajectories: rng.gen_range(1..=3),
            hermitian: index.is_multiple_of(2),
            quadratic: !(index / 2).is_multiple_of(2),
            functional: index % 3,
            lambda_a: if (index / 3).is_multiple_of(2) { 0.0 } else { 0.01 },
        }
    }

    pub fn kind(&self) -> FunctionalKind {
        match self.functional {
            0 => FunctionalKind::RealOverlap,
            1 => FunctionalKind::SquareModulus,
            _ => FunctionalKind::SquareModulusOfSum,
        }
    }
}

/// Random problem with the given shape; every control couples to one term
/// per trajectory, the first control quadratically when `quadratic` is set.
pub fn random_problem(shape: &RandomProblemShape, rng: &mut StdRng) -> ControlProblem {
    let n = shape.dim;
    let mut trajectories = Vec::new();
    for _ in 0..shape.n_trajectories {
        let op = |rng: &mut StdRng, scale: f64| {
            if shape.hermitian {
                random_hermitian(n, scale, rng)
            } else {
                random_matrix(n, scale, rng)
            }
        };
        let drift = op(rng, 1.0);
        let terms = (0..shape.n_controls)
            .map(|l| {
                let o = op(rng, 0.7);
                if shape.quadratic && l == 0 {
                    ControlTerm::quadratic(l, o)
                } else {
                    ControlTerm::linear(l, o)
                }
            })
            .collect();
        let generator = Generator::new(drift, terms, shape.n_controls).unwrap();
        trajectories.push(
            Trajectory::new(
                random_state(n, rng),
                generator,
                Some(random_state(n, rng)),
                rng.gen_range(0.2..1.0),
            )
            .unwrap(),
        );
    }
    let t_final = rng.gen_range(0.5..2.0);
    let grid = TimeGrid::uniform(0.0, t_final, shape.n_intervals).unwrap();
    let labels = (0..shape.n_controls).map(|l| format!("u{l}")).collect();
    let values = (0..shape.n_intervals * shape.n_controls)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let controls = ControlSet::from_flat(values, shape.n_intervals, labels).unwrap();
    let functional = FunctionalSpec::new(shape.kind(), shape.lambda_a).unwrap();
    ControlProblem::new(trajectories, grid, functional, controls).unwrap()
}

/// `H = ε σ_x`, `|0⟩ → |1⟩` on `[0, T]`.
pub fn tls_transfer(nt: usize, t_final: f64, eps0: f64) -> ControlProblem {
    let g = Generator::linear(Operator::zeros(2), vec![pauli::sigma_x()]).unwrap();
    let traj = Trajectory::new(StateVector::basis(2, 0), g, Some(StateVector::basis(2, 1)), 1.0).unwrap();
    ControlProblem::new(
        vec![traj],
        TimeGrid::uniform(0.0, t_final, nt).unwrap(),
        FunctionalKind::SquareModulus.into(),
        ControlSet::constant(nt, vec!["eps".into()], eps0).unwrap(),
    )
    .unwrap()
}

/// Amplitude damping `L = √γ σ₋` with drift `ω/2 σ_z` and an `ε σ_x` drive,
/// in Liouville space.
pub fn amplitude_damping_generator(omega: f64, gamma: f64) -> Generator {
    let lower =
        Operator::from_rows(&[vec![c(0.0, 0.0), c(gamma.sqrt(), 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]).unwrap();
    let drift = grape::liouville::lindblad_generator(&pauli::sigma_z().scaled(c(0.5 * omega, 0.0)), &[lower]).unwrap();
    let drive = grape::liouville::commutator_generator(&pauli::sigma_x());
    Generator::linear(drift, vec![drive]).unwrap()
}
