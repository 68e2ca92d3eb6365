//! Domain types: states, operators, generators, time grids, controls and
//! trajectories, together with the handful of linear-algebra primitives the
//! propagation code builds on.
//!
//! Units follow ħ = 1: a generator `H` drives `d|Ψ⟩/dt = −i H |Ψ⟩`, so its
//! entries are angular frequencies in the same time unit as the grid.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{mismatch, GrapeError, Result};

/// Tolerance used to classify a generator as Hermitian (closed system).
const HERMITIAN_TOL: f64 = 1e-14;

/// A complex state vector: a wavefunction, or a vectorized density matrix for
/// Liouville-space problems.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Array1<C64>);

impl StateVector {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(GrapeError::Empty);
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(GrapeError::NonFinite("state vector".into()));
        }
        Ok(Self(amplitudes))
    }

    pub fn from_vec(amplitudes: Vec<C64>) -> Result<Self> {
        Self::new(Array1::from(amplitudes))
    }

    /// Canonical basis state `|index⟩` of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dimension {dim}");
        let mut v = Array1::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Array1::zeros(dim))
    }

    pub(crate) fn from_array_unchecked(amplitudes: Array1<C64>) -> Self {
        Self(amplitudes)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<C64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self(self.0.mapv(|z| z * factor))
    }
}

/// `⟨a|b⟩`, conjugate-linear in the first argument.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(mismatch("inner product", a.dim(), b.dim()));
    }
    Ok(dot_conj(&a.0, &b.0))
}

#[inline]
pub(crate) fn dot_conj(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// A dense square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator(Array2<C64>);

impl Operator {
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows == 0 {
            return Err(GrapeError::Empty);
        }
        if rows != cols {
            return Err(mismatch("operator columns", rows, cols));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(GrapeError::NonFinite("operator".into()));
        }
        Ok(Self(entries))
    }

    /// Builds an operator from nested rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(mismatch(format!("operator row {i}"), n, row.len()));
            }
            for (j, z) in row.iter().enumerate() {
                m[[i, j]] = *z;
            }
        }
        Self::new(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Array2::zeros((dim, dim)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Array2::eye(dim))
    }

    pub(crate) fn from_array_unchecked(entries: Array2<C64>) -> Self {
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.t().mapv(|z| z.conj()))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self(self.0.mapv(|z| z * factor))
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(mismatch("operator sum", self.dim(), other.dim()));
        }
        Ok(Self(&self.0 + &other.0))
    }

    pub fn matmul(&self, other: &Operator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(mismatch("operator product", self.dim(), other.dim()));
        }
        Ok(Self(self.0.dot(&other.0)))
    }

    /// `A |ψ⟩`
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if self.dim() != state.dim() {
            return Err(mismatch("operator application", self.dim(), state.dim()));
        }
        Ok(StateVector(self.0.dot(&state.0)))
    }

    /// `A† |ψ⟩`, without forming the adjoint.
    pub fn apply_adjoint(&self, state: &StateVector) -> Result<StateVector> {
        if self.dim() != state.dim() {
            return Err(mismatch("adjoint application", self.dim(), state.dim()));
        }
        let n = self.dim();
        let mut out = Array1::zeros(n);
        for i in 0..n {
            let psi_i = state.0[i];
            for j in 0..n {
                out[j] += self.0[[i, j]].conj() * psi_i;
            }
        }
        Ok(StateVector(out))
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        let scale = self.max_abs().max(1.0);
        (0..n).all(|i| (i..n).all(|j| (self.0[[i, j]] - self.0[[j, i]].conj()).norm() <= tol * scale))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Operator {
        let (a, b) = (self.dim(), other.dim());
        let mut out = Array2::zeros((a * b, a * b));
        for i in 0..a {
            for j in 0..a {
                let s = self.0[[i, j]];
                if s == C64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..b {
                    for l in 0..b {
                        out[[i * b + k, j * b + l]] = s * other.0[[k, l]];
                    }
                }
            }
        }
        Operator(out)
    }
}

/// Pauli matrices, used throughout the examples and tests.
pub mod pauli {
    use super::Operator;
    use num_complex::Complex64 as C64;

    const O: C64 = C64::new(0.0, 0.0);
    const ONE: C64 = C64::new(1.0, 0.0);
    const I: C64 = C64::new(0.0, 1.0);

    pub fn sigma_x() -> Operator {
        Operator::from_rows(&[vec![O, ONE], vec![ONE, O]]).unwrap()
    }

    pub fn sigma_y() -> Operator {
        Operator::from_rows(&[vec![O, -I], vec![I, O]]).unwrap()
    }

    pub fn sigma_z() -> Operator {
        Operator::from_rows(&[vec![ONE, O], vec![O, -ONE]]).unwrap()
    }
}

/// Strictly increasing time points `t_0 < … < t_NT`. Controls live on the
/// `NT` intervals, states on the `NT + 1` points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(GrapeError::InvalidGrid("need at least one interval".into()));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(GrapeError::NonFinite("time grid".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(GrapeError::InvalidGrid(format!(
                "points must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// Uniform grid with `nt` intervals on `[t_start, t_stop]`.
    pub fn uniform(t_start: f64, t_stop: f64, nt: usize) -> Result<Self> {
        if nt == 0 {
            return Err(GrapeError::InvalidGrid("need at least one interval".into()));
        }
        if !(t_stop > t_start) {
            return Err(GrapeError::InvalidGrid(format!(
                "t_stop ({t_stop}) must exceed t_start ({t_start})"
            )));
        }
        let dt = (t_stop - t_start) / nt as f64;
        let mut points: Vec<f64> = (0..nt).map(|n| t_start + n as f64 * dt).collect();
        points.push(t_stop);
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of intervals, `NT`.
    pub fn n_intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.points[n + 1] - self.points[n]
    }

    pub fn intervals(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn t_final(&self) -> f64 {
        *self.points.last().unwrap()
    }
}

/// Control amplitudes `ε_nl` on `NT` intervals for `L` controls.
///
/// Stored interval-major, so the flattened optimization vector has
/// `index = n·L + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    values: Vec<f64>,
    n_intervals: usize,
    labels: Vec<String>,
}

impl ControlSet {
    pub fn new(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        let (nt, l) = values.dim();
        if l != labels.len() {
            return Err(mismatch("control labels", l, labels.len()));
        }
        Self::from_flat(values.iter().copied().collect(), nt, labels)
    }

    pub fn from_flat(values: Vec<f64>, n_intervals: usize, labels: Vec<String>) -> Result<Self> {
        if n_intervals == 0 {
            return Err(GrapeError::InvalidControls("zero intervals".into()));
        }
        if values.len() != n_intervals * labels.len() {
            return Err(mismatch("flattened controls", n_intervals * labels.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GrapeError::InvalidControls(format!(
                "non-finite value at interval {}, control {}",
                i / labels.len(),
                i % labels.len()
            )));
        }
        Ok(Self {
            values,
            n_intervals,
            labels,
        })
    }

    pub fn constant(n_intervals: usize, labels: Vec<String>, value: f64) -> Result<Self> {
        let len = n_intervals * labels.len();
        Self::from_flat(vec![value; len], n_intervals, labels)
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn n_controls(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// The `L` control values on interval `n`.
    pub fn interval(&self, n: usize) -> &[f64] {
        let l = self.n_controls();
        &self.values[n * l..(n + 1) * l]
    }

    pub fn get(&self, n: usize, l: usize) -> f64 {
        self.values[n * self.n_controls() + l]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n_intervals, self.n_controls()), self.values.clone())
            .expect("shape is consistent by construction")
    }

    /// Same shape and labels, new values.
    pub fn with_flat(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(values, self.n_intervals, self.labels.clone())
    }
}

/// A scalar amplitude `a(ε⃗)` with analytic partials `∂a/∂ε_l`.
pub trait AmplitudeFn: Send + Sync {
    fn value(&self, controls: &[f64]) -> f64;
    fn partial(&self, controls: &[f64], control: usize) -> f64;
}

struct ClosureAmplitude<V, P> {
    value: V,
    partial: P,
}

impl<V, P> AmplitudeFn for ClosureAmplitude<V, P>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    P: Fn(&[f64], usize) -> f64 + Send + Sync,
{
    fn value(&self, controls: &[f64]) -> f64 {
        (self.value)(controls)
    }

    fn partial(&self, controls: &[f64], control: usize) -> f64 {
        (self.partial)(controls, control)
    }
}

/// How a control term depends on the control values.
#[derive(Clone)]
pub enum Amplitude {
    /// `a(ε⃗) = ε_l`
    Linear(usize),
    /// `a(ε⃗) = ε_l²`
    Quadratic(usize),
    Custom(Arc<dyn AmplitudeFn>),
}

impl Amplitude {
    pub fn custom<V, P>(value: V, partial: P) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        P: Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    {
        Amplitude::Custom(Arc::new(ClosureAmplitude { value, partial }))
    }

    pub fn value(&self, controls: &[f64]) -> f64 {
        match self {
            Amplitude::Linear(l) => controls[*l],
            Amplitude::Quadratic(l) => controls[*l] * controls[*l],
            Amplitude::Custom(f) => f.value(controls),
        }
    }

    pub fn partial(&self, controls: &[f64], control: usize) -> f64 {
        match self {
            Amplitude::Linear(l) => {
                if *l == control {
                    1.0
                } else {
                    0.0
                }
            }
            Amplitude::Quadratic(l) => {
                if *l == control {
                    2.0 * controls[*l]
                } else {
                    0.0
                }
            }
            Amplitude::Custom(f) => f.partial(controls, control),
        }
    }
}

impl fmt::Debug for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Amplitude::Linear(l) => write!(f, "Linear({l})"),
            Amplitude::Quadratic(l) => write!(f, "Quadratic({l})"),
            Amplitude::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// One control-coupled term `a_m(ε⃗)·H_m`.
#[derive(Debug, Clone)]
pub struct ControlTerm {
    pub amplitude: Amplitude,
    pub operator: Operator,
}

impl ControlTerm {
    pub fn new(amplitude: Amplitude, operator: Operator) -> Self {
        Self { amplitude, operator }
    }

    pub fn linear(control: usize, operator: Operator) -> Self {
        Self::new(Amplitude::Linear(control), operator)
    }

    pub fn quadratic(control: usize, operator: Operator) -> Self {
        Self::new(Amplitude::Quadratic(control), operator)
    }
}

/// `H(ε⃗) = H₀ + Σ_m a_m(ε⃗)·H_m`.
#[derive(Debug, Clone)]
pub struct Generator {
    drift: Operator,
    terms: Vec<ControlTerm>,
    n_controls: usize,
    hermitian: bool,
}

impl Generator {
    /// Validates dimensions and checks every amplitude partial against
    /// central finite differences at a few fixed sample points.
    pub fn new(drift: Operator, terms: Vec<ControlTerm>, n_controls: usize) -> Result<Self> {
        let dim = drift.dim();
        for (m, term) in terms.iter().enumerate() {
            if term.operator.dim() != dim {
                return Err(mismatch(format!("control term {m} operator"), dim, term.operator.dim()));
            }
            match term.amplitude {
                Amplitude::Linear(l) | Amplitude::Quadratic(l) if l >= n_controls => {
                    return Err(GrapeError::InvalidGenerator(format!(
                        "term {m} couples to control {l}, but only {n_controls} controls exist"
                    )));
                }
                _ => {}
            }
        }
        for sample in amplitude_sample_points(n_controls) {
            for term in &terms {
                check_partials(&term.amplitude, &sample)?;
            }
        }
        let hermitian =
            drift.is_hermitian(HERMITIAN_TOL) && terms.iter().all(|t| t.operator.is_hermitian(HERMITIAN_TOL));
        Ok(Self {
            drift,
            terms,
            n_controls,
            hermitian,
        })
    }

    /// Linear couplings: `H₀ + Σ_l ε_l H_l`.
    pub fn linear(drift: Operator, controls: Vec<Operator>) -> Result<Self> {
        let n = controls.len();
        let terms = controls
            .into_iter()
            .enumerate()
            .map(|(l, op)| ControlTerm::linear(l, op))
            .collect();
        Self::new(drift, terms, n)
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn drift(&self) -> &Operator {
        &self.drift
    }

    pub fn terms(&self) -> &[ControlTerm] {
        &self.terms
    }

    /// Whether drift and all term operators are Hermitian, i.e. the dynamics
    /// are unitary for any real control values.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `H₀ + Σ_m a_m(ε⃗)·H_m`
    pub fn evaluate(&self, controls: &[f64]) -> Result<Operator> {
        self.check_controls(controls)?;
        let mut h = self.drift.0.clone();
        for (m, term) in self.terms.iter().enumerate() {
            let a = term.amplitude.value(controls);
            if !a.is_finite() {
                return Err(GrapeError::NonFinite(format!("amplitude of control term {m}")));
            }
            if a != 0.0 {
                h.scaled_add(C64::new(a, 0.0), &term.operator.0);
            }
        }
        Ok(Operator(h))
    }

    /// `μ_l = ∂H/∂ε_l = Σ_m (∂a_m/∂ε_l)(ε⃗)·H_m`
    pub fn control_derivative(&self, controls: &[f64], control: usize) -> Result<Operator> {
        self.check_controls(controls)?;
        if control >= self.n_controls {
            return Err(mismatch("control index", self.n_controls, control));
        }
        let mut mu = Array2::zeros((self.dim(), self.dim()));
        for (m, term) in self.terms.iter().enumerate() {
            let da = term.amplitude.partial(controls, control);
            if !da.is_finite() {
                return Err(GrapeError::NonFinite(format!("partial of control term {m}")));
            }
            if da != 0.0 {
                mu.scaled_add(C64::new(da, 0.0), &term.operator.0);
            }
        }
        Ok(Operator(mu))
    }

    fn check_controls(&self, controls: &[f64]) -> Result<()> {
        if controls.len() != self.n_controls {
            return Err(mismatch("control vector", self.n_controls, controls.len()));
        }
        if controls.iter().any(|v| !v.is_finite()) {
            return Err(GrapeError::NonFinite("control vector".into()));
        }
        Ok(())
    }
}

fn amplitude_sample_points(n_controls: usize) -> Vec<Vec<f64>> {
    vec![
        vec![0.0; n_controls],
        (0..n_controls).map(|l| 0.3 + 0.17 * l as f64).collect(),
        (0..n_controls).map(|l| -0.7 + 0.11 * l as f64).collect(),
        (0..n_controls).map(|l| 1.9 - 0.23 * l as f64).collect(),
    ]
}

fn check_partials(amplitude: &Amplitude, sample: &[f64]) -> Result<()> {
    let mut x = sample.to_vec();
    for l in 0..sample.len() {
        let h = 1e-5 * (1.0 + sample[l].abs());
        x[l] = sample[l] + h;
        let plus = amplitude.value(&x);
        x[l] = sample[l] - h;
        let minus = amplitude.value(&x);
        x[l] = sample[l];
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = amplitude.partial(sample, l);
        if !numeric.is_finite() || !analytic.is_finite() {
            return Err(GrapeError::NonFinite(format!("amplitude partial for control {l}")));
        }
        if (numeric - analytic).abs() > 1e-6 * analytic.abs().max(1.0) {
            return Err(GrapeError::AmplitudePartial {
                control: l,
                analytic,
                numeric,
            });
        }
    }
    Ok(())
}

/// One propagated state `|Ψ_k(t)⟩` with its own generator, optional target,
/// and weight in the functional.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial_state: StateVector,
    pub generator: Generator,
    pub target_state: Option<StateVector>,
    pub weight: f64,
}

impl Trajectory {
    pub fn new(
        initial_state: StateVector,
        generator: Generator,
        target_state: Option<StateVector>,
        weight: f64,
    ) -> Result<Self> {
        if initial_state.dim() != generator.dim() {
            return Err(mismatch("initial state", generator.dim(), initial_state.dim()));
        }
        if let Some(target) = &target_state {
            if target.dim() != generator.dim() {
                return Err(mismatch("target state", generator.dim(), target.dim()));
            }
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(GrapeError::InvalidGenerator(format!(
                "trajectory weight must be positive and finite, got {weight}"
            )));
        }
        Ok(Self {
            initial_state,
            generator,
            target_state,
            weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn max_diff(a: &Operator, b: &Operator) -> f64 {
        (&a.0 - &b.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn inner_product_examples() {
        let e0 = StateVector::basis(2, 0);
        let e1 = StateVector::basis(2, 1);
        assert_eq!(inner_product(&e0, &e0).unwrap(), c(1.0, 0.0));
        assert_eq!(inner_product(&e0, &e1).unwrap(), c(0.0, 0.0));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = StateVector::new(array![c(s, 0.0), c(0.0, s)]).unwrap();
        let b = StateVector::new(array![c(s, 0.0), c(s, 0.0)]).unwrap();
        let z = inner_product(&a, &b).unwrap();
        assert!((z - c(0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn inner_product_dimension_mismatch() {
        let a = StateVector::basis(2, 0);
        let b = StateVector::basis(3, 0);
        assert!(matches!(
            inner_product(&a, &b),
            Err(GrapeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn generator_evaluate_linear() {
        let g = Generator::linear(pauli::sigma_z(), vec![pauli::sigma_x()]).unwrap();
        assert_eq!(g.evaluate(&[0.0]).unwrap(), pauli::sigma_z());
        let expected = pauli::sigma_z().add(&pauli::sigma_x().scaled(c(2.0, 0.0))).unwrap();
        assert!(max_diff(&g.evaluate(&[2.0]).unwrap(), &expected) == 0.0);
        assert!(g.is_hermitian());
    }

    #[test]
    fn generator_quadratic_term() {
        let h1 = pauli::sigma_y();
        let g = Generator::new(Operator::zeros(2), vec![ControlTerm::quadratic(0, h1.clone())], 1).unwrap();
        let h = g.evaluate(&[3.0]).unwrap();
        assert!(max_diff(&h, &h1.scaled(c(9.0, 0.0))) < 1e-15);
        let mu = g.control_derivative(&[3.0], 0).unwrap();
        assert!(max_diff(&mu, &h1.scaled(c(6.0, 0.0))) < 1e-15);
    }

    #[test]
    fn control_derivative_linear_and_uncoupled() {
        let g = Generator::new(pauli::sigma_z(), vec![ControlTerm::linear(0, pauli::sigma_x())], 2).unwrap();
        assert_eq!(g.control_derivative(&[0.4, -1.0], 0).unwrap(), pauli::sigma_x());
        assert_eq!(g.control_derivative(&[0.4, -1.0], 1).unwrap(), Operator::zeros(2));
        assert!(g.control_derivative(&[0.4, -1.0], 2).is_err());
    }

    #[test]
    fn wrong_partial_is_rejected() {
        let bad = Amplitude::custom(|e: &[f64]| e[0].sin(), |e: &[f64], _| e[0].sin());
        let err = Generator::new(Operator::zeros(2), vec![ControlTerm::new(bad, pauli::sigma_x())], 1);
        assert!(matches!(err, Err(GrapeError::AmplitudePartial { .. })));

        let good = Amplitude::custom(|e: &[f64]| e[0].sin(), |e: &[f64], _| e[0].cos());
        assert!(Generator::new(Operator::zeros(2), vec![ControlTerm::new(good, pauli::sigma_x())], 1).is_ok());
    }

    #[test]
    fn non_finite_amplitude_is_an_error() {
        let amp = Amplitude::custom(
            |e: &[f64]| 1.0 / (e[0] - 5.0),
            |e: &[f64], _| -1.0 / (e[0] - 5.0).powi(2),
        );
        let g = Generator::new(Operator::zeros(2), vec![ControlTerm::new(amp, pauli::sigma_x())], 1).unwrap();
        assert!(matches!(g.evaluate(&[5.0]), Err(GrapeError::NonFinite(_))));
    }

    #[test]
    fn term_coupled_to_missing_control() {
        let err = Generator::new(Operator::zeros(2), vec![ControlTerm::linear(1, pauli::sigma_x())], 1);
        assert!(matches!(err, Err(GrapeError::InvalidGenerator(_))));
    }

    #[test]
    fn uniform_grid() {
        let g = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(g.n_intervals(), 4);
        assert_eq!(g.points().len(), 5);
        assert_eq!(g.t_final(), 1.0);
        assert!(g.intervals().iter().all(|dt| (dt - 0.25).abs() < 1e-15));
        assert!(TimeGrid::uniform(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn control_set_flattening_is_interval_major() {
        let c = ControlSet::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(c.as_flat(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(c.interval(1), &[3.0, 4.0]);
        assert_eq!(c.get(2, 0), 5.0);
        assert!(ControlSet::new(array![[f64::NAN]], vec!["a".into()]).is_err());
    }

    #[test]
    fn kron_dimensions() {
        let zx = pauli::sigma_z().kron(&pauli::sigma_x());
        assert_eq!(zx.dim(), 4);
        assert_eq!(zx.entries()[[0, 1]], c(1.0, 0.0));
        assert_eq!(zx.entries()[[2, 3]], c(-1.0, 0.0));
    }

    #[test]
    fn apply_adjoint_matches_adjoint_apply() {
        let a = Operator::from_rows(&[vec![c(1.0, 2.0), c(0.5, -1.0)], vec![c(-0.3, 0.0), c(0.0, 1.0)]]).unwrap();
        let psi = StateVector::new(array![c(0.2, 0.1), c(-0.7, 0.4)]).unwrap();
        let lhs = a.apply_adjoint(&psi).unwrap();
        let rhs = a.adjoint().apply(&psi).unwrap();
        assert!((&lhs.0 - &rhs.0).iter().all(|z| z.norm() < 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn state(dim: usize) -> impl Strategy<Value = StateVector> {
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim)
                .prop_map(|v| StateVector::from_vec(v.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap())
        }

        proptest! {
            #[test]
            fn inner_product_is_conjugate_symmetric((a, b) in (1usize..8).prop_flat_map(|n| (state(n), state(n)))) {
                let ab = inner_product(&a, &b).unwrap();
                let ba = inner_product(&b, &a).unwrap();
                prop_assert_eq!(ab, ba.conj());
                let aa = inner_product(&a, &a).unwrap();
                prop_assert!(aa.im == 0.0 && aa.re >= 0.0);
            }

            #[test]
            fn control_derivative_matches_finite_differences(
                e0 in -2.0..2.0f64,
                e1 in -2.0..2.0f64,
            ) {
                let amp = Amplitude::custom(
                    |e: &[f64]| e[0] * e[1] + e[0].cos(),
                    |e: &[f64], l| if l == 0 { e[1] - e[0].sin() } else { e[0] },
                );
                let g = Generator::new(
                    pauli::sigma_z(),
                    vec![
                        ControlTerm::quadratic(0, pauli::sigma_x()),
                        ControlTerm::linear(1, pauli::sigma_y()),
                        ControlTerm::new(amp, pauli::sigma_x().kron(&Operator::identity(1))),
                    ],
                    2,
                ).unwrap();
                let eps = [e0, e1];
                for l in 0..2 {
                    let h = 1e-5 * (1.0 + eps[l].abs());
                    let mut p = eps;
                    let mut m = eps;
                    p[l] += h;
                    m[l] -= h;
                    let fd = (&g.evaluate(&p).unwrap().0 - &g.evaluate(&m).unwrap().0).mapv(|z| z / (2.0 * h));
                    let mu = g.control_derivative(&eps, l).unwrap();
                    for (x, y) in fd.iter().zip(mu.entries().iter()) {
                        prop_assert!((x - y).norm() <= 1e-6 * y.norm().max(1.0));
                    }
                }
            }
        }
    }
}
