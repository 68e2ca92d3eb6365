//! Super-operators for open-system problems in Liouville space.
//!
//! Density matrices are vectorized column-stacked, `vec(ρ)[i + d·j] = ρ_ij`,
//! so that `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`. The returned operators are written as
//! generators in the same convention as Hamiltonians: the equation of motion is
//! `d vec(ρ)/dt = −i G vec(ρ)`.

use ndarray::Array1;
use num_complex::Complex64 as C64;

use crate::error::{mismatch, Result};
use crate::model::{Operator, StateVector};

fn transpose(op: &Operator) -> Operator {
    Operator::from_array_unchecked(op.entries().t().to_owned())
}

fn conjugate(op: &Operator) -> Operator {
    Operator::from_array_unchecked(op.entries().mapv(|z| z.conj()))
}

/// Generator for the coherent part `−i[H, ρ]`: `I ⊗ H − Hᵀ ⊗ I`.
///
/// Linear in `H`, so it can be used directly as the operator of a control term.
pub fn commutator_generator(hamiltonian: &Operator) -> Operator {
    let id = Operator::identity(hamiltonian.dim());
    let left = id.kron(hamiltonian);
    let right = transpose(hamiltonian).kron(&id);
    Operator::from_array_unchecked(left.entries() - right.entries())
}

/// Generator for the dissipator `LρL† − ½{L†L, ρ}` (rate included in `L`).
pub fn dissipator_generator(jump: &Operator) -> Operator {
    let d = jump.dim();
    let id = Operator::identity(d);
    let ldl = jump.adjoint().matmul(jump).expect("square");
    let sandwich = conjugate(jump).kron(jump);
    let anti = id.kron(&ldl).entries() + transpose(&ldl).kron(&id).entries();
    let superop = sandwich.entries() - &anti.mapv(|z| z * 0.5);
    // d vec(ρ)/dt = D vec(ρ) = −i (i D) vec(ρ)
    Operator::from_array_unchecked(superop.mapv(|z| z * C64::new(0.0, 1.0)))
}

/// Full Lindblad generator for drift `H` and jump operators `L_j`.
pub fn lindblad_generator(hamiltonian: &Operator, jumps: &[Operator]) -> Result<Operator> {
    let mut g = commutator_generator(hamiltonian);
    for (j, jump) in jumps.iter().enumerate() {
        if jump.dim() != hamiltonian.dim() {
            return Err(mismatch(format!("jump operator {j}"), hamiltonian.dim(), jump.dim()));
        }
        g = g.add(&dissipator_generator(jump))?;
    }
    Ok(g)
}

/// Column-stacked `vec(ρ)`.
pub fn vectorize(rho: &Operator) -> StateVector {
    let d = rho.dim();
    let mut v = Array1::zeros(d * d);
    for j in 0..d {
        for i in 0..d {
            v[i + d * j] = rho.entries()[[i, j]];
        }
    }
    StateVector::from_array_unchecked(v)
}

/// Inverse of [`vectorize`].
pub fn unvectorize(state: &StateVector) -> Result<Operator> {
    let n = state.dim();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(mismatch("vectorized density matrix (perfect square)", d * d, n));
    }
    let mut m = ndarray::Array2::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            m[[i, j]] = state.amplitudes()[i + d * j];
        }
    }
    Ok(Operator::from_array_unchecked(m))
}

/// `Tr ρ = Σ_i ρ_ii` of a vectorized density matrix.
pub fn trace(state: &StateVector) -> Result<C64> {
    let rho = unvectorize(state)?;
    Ok(rho.entries().diag().sum())
}
