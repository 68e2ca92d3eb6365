//! Final-time functionals `J_T`, their boundary states
//! `χ_k = −∂J_T/∂⟨Ψ_k(T)|`, and the control-amplitude running cost.
//!
//! The chi conventions are tied to the gradient formula used by the engine,
//!
//! ```text
//! ∂J_T/∂ε_nl = −2 Re Σ_k ⟨χ_k(t_{n+1})| ∂U_n/∂ε_nl |Ψ_k(t_n)⟩,
//! ```
//!
//! which is why `RealOverlap` carries a factor ½ and the square-modulus
//! kinds do not.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{mismatch, GrapeError, Result};
use crate::model::{inner_product, ControlSet, StateVector, TimeGrid};

/// User-supplied `J_T(finals, targets, weights)`.
pub type CustomFunctional = Arc<dyn Fn(&[StateVector], &[Option<StateVector>], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FunctionalKind {
    /// `1 − Σ_k w_k Re τ_k`
    RealOverlap,
    /// `1 − Σ_k w_k |τ_k|²`
    SquareModulus,
    /// `1 − |Σ_k w_k τ_k|²`, sensitive to relative phases (gates).
    SquareModulusOfSum,
    Custom(CustomFunctional),
}

impl fmt::Debug for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalKind::RealOverlap => write!(f, "RealOverlap"),
            FunctionalKind::SquareModulus => write!(f, "SquareModulus"),
            FunctionalKind::SquareModulusOfSum => write!(f, "SquareModulusOfSum"),
            FunctionalKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl FunctionalKind {
    pub fn is_builtin(&self) -> bool {
        !matches!(self, FunctionalKind::Custom(_))
    }
}

#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    /// `λ_a ≥ 0` in `J_a = λ_a Σ_nl ε_nl² dt_n`.
    pub running_cost_weight: f64,
}

impl FunctionalSpec {
    pub fn new(kind: FunctionalKind, running_cost_weight: f64) -> Result<Self> {
        if !(running_cost_weight.is_finite() && running_cost_weight >= 0.0) {
            return Err(GrapeError::InvalidControls(format!(
                "running cost weight must be finite and non-negative, got {running_cost_weight}"
            )));
        }
        Ok(Self {
            kind,
            running_cost_weight,
        })
    }

    pub fn custom<F>(j: F, running_cost_weight: f64) -> Result<Self>
    where
        F: Fn(&[StateVector], &[Option<StateVector>], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(FunctionalKind::Custom(Arc::new(j)), running_cost_weight)
    }
}

impl From<FunctionalKind> for FunctionalSpec {
    fn from(kind: FunctionalKind) -> Self {
        Self {
            kind,
            running_cost_weight: 0.0,
        }
    }
}

/// `τ_k = ⟨φ_k^tgt|Ψ_k(T)⟩`
pub fn tau_overlaps(finals: &[StateVector], targets: &[StateVector]) -> Result<Vec<C64>> {
    if finals.len() != targets.len() {
        return Err(mismatch("number of targets", finals.len(), targets.len()));
    }
    finals
        .iter()
        .zip(targets)
        .map(|(psi, phi)| inner_product(phi, psi))
        .collect()
}

fn require_targets(targets: &[Option<StateVector>]) -> Result<Vec<&StateVector>> {
    targets
        .iter()
        .enumerate()
        .map(|(k, t)| t.as_ref().ok_or(GrapeError::MissingTarget(k)))
        .collect()
}

fn builtin_taus<'a>(
    finals: &[StateVector],
    targets: &'a [Option<StateVector>],
) -> Result<(Vec<&'a StateVector>, Vec<C64>)> {
    if finals.len() != targets.len() {
        return Err(mismatch("number of targets", finals.len(), targets.len()));
    }
    let tgts = require_targets(targets)?;
    let taus = finals
        .iter()
        .zip(&tgts)
        .map(|(psi, phi)| inner_product(phi, psi))
        .collect::<Result<Vec<_>>>()?;
    Ok((tgts, taus))
}

fn check_weights(finals: &[StateVector], weights: &[f64]) -> Result<()> {
    if finals.len() != weights.len() {
        return Err(mismatch("number of weights", finals.len(), weights.len()));
    }
    Ok(())
}

/// Final-time functional value.
pub fn evaluate_j_t(
    spec: &FunctionalSpec,
    finals: &[StateVector],
    targets: &[Option<StateVector>],
    weights: &[f64],
) -> Result<f64> {
    check_weights(finals, weights)?;
    let j = match &spec.kind {
        FunctionalKind::Custom(f) => f(finals, targets, weights),
        kind => {
            let (_, taus) = builtin_taus(finals, targets)?;
            let wt = weights.iter().zip(&taus);
            match kind {
                FunctionalKind::RealOverlap => 1.0 - wt.map(|(w, t)| w * t.re).sum::<f64>(),
                FunctionalKind::SquareModulus => 1.0 - wt.map(|(w, t)| w * t.norm_sqr()).sum::<f64>(),
                FunctionalKind::SquareModulusOfSum => 1.0 - wt.map(|(w, t)| t * *w).sum::<C64>().norm_sqr(),
                FunctionalKind::Custom(_) => unreachable!(),
            }
        }
    };
    if !j.is_finite() {
        return Err(GrapeError::NonFinite("final-time functional".into()));
    }
    Ok(j)
}

/// Analytic boundary states `χ_k = −∂J_T/∂⟨Ψ_k(T)|` for the built-in kinds.
pub fn chi_states(
    spec: &FunctionalSpec,
    finals: &[StateVector],
    targets: &[Option<StateVector>],
    weights: &[f64],
) -> Result<Vec<StateVector>> {
    check_weights(finals, weights)?;
    if !spec.kind.is_builtin() {
        return Err(GrapeError::CustomChi);
    }
    let (tgts, taus) = builtin_taus(finals, targets)?;
    let coeffs: Vec<C64> = match spec.kind {
        FunctionalKind::RealOverlap => weights.iter().map(|w| C64::new(0.5 * w, 0.0)).collect(),
        FunctionalKind::SquareModulus => weights.iter().zip(&taus).map(|(w, t)| t * *w).collect(),
        FunctionalKind::SquareModulusOfSum => {
            let sum: C64 = weights.iter().zip(&taus).map(|(w, t)| t * *w).sum();
            weights.iter().map(|w| sum * *w).collect()
        }
        FunctionalKind::Custom(_) => unreachable!(),
    };
    Ok(tgts.iter().zip(coeffs).map(|(phi, c)| phi.scaled(c)).collect())
}

/// Boundary states of an arbitrary functional by central differences over
/// the real and imaginary part of every component of every final state:
/// `χ_k,i = −½ (∂J/∂Re Ψ_k,i + i ∂J/∂Im Ψ_k,i)`.
pub fn chi_numeric<F>(
    j: F,
    finals: &[StateVector],
    targets: &[Option<StateVector>],
    weights: &[f64],
) -> Result<Vec<StateVector>>
where
    F: Fn(&[StateVector], &[Option<StateVector>], &[f64]) -> f64,
{
    let mut work: Vec<StateVector> = finals.to_vec();
    let eval = |work: &[StateVector]| -> Result<f64> {
        let v = j(work, targets, weights);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GrapeError::NonFinite("custom functional under perturbation".into()))
        }
    };
    let mut chis = Vec::with_capacity(finals.len());
    for k in 0..finals.len() {
        let original = finals[k].amplitudes().clone();
        let sup = original.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
        let h = 1e-6 * (1.0 + sup);
        let mut chi = Array1::zeros(original.len());
        for i in 0..original.len() {
            let partial = |delta: C64, work: &mut Vec<StateVector>| -> Result<f64> {
                let mut amps = original.clone();
                amps[i] += delta;
                work[k] = StateVector::from_array_unchecked(amps);
                let plus = eval(work)?;
                let mut amps = original.clone();
                amps[i] -= delta;
                work[k] = StateVector::from_array_unchecked(amps);
                let minus = eval(work)?;
                Ok((plus - minus) / (2.0 * h))
            };
            let d_re = partial(C64::new(h, 0.0), &mut work)?;
            let d_im = partial(C64::new(0.0, h), &mut work)?;
            chi[i] = C64::new(-0.5 * d_re, -0.5 * d_im);
        }
        work[k] = finals[k].clone();
        chis.push(StateVector::from_array_unchecked(chi));
    }
    Ok(chis)
}

/// `J_a = λ_a Σ_nl ε_nl² dt_n` and its gradient `2 λ_a ε_nl dt_n`.
pub fn running_cost(controls: &ControlSet, grid: &TimeGrid, weight: f64) -> Result<(f64, Array2<f64>)> {
    if controls.n_intervals() != grid.n_intervals() {
        return Err(mismatch(
            "control intervals vs time grid",
            grid.n_intervals(),
            controls.n_intervals(),
        ));
    }
    let (nt, nl) = (controls.n_intervals(), controls.n_controls());
    let mut grad = Array2::zeros((nt, nl));
    if weight == 0.0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for n in 0..nt {
        let dt = grid.dt(n);
        for (l, &e) in controls.interval(n).iter().enumerate() {
            total += e * e * dt;
            grad[[n, l]] = 2.0 * weight * e * dt;
        }
    }
    Ok((weight * total, grad))
}
