//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005, fixed degree).

use ndarray::{Array2, Zip};
use num_complex::Complex64 as C64;

use crate::error::{GrapeError, Result};
use crate::model::Operator;

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// `e^A` for a square complex operator.
pub fn expm(a: &Operator) -> Result<Operator> {
    expm_array(a.entries()).map(Operator::from_array_unchecked)
}

pub(crate) fn expm_array(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if n == 0 {
        return Err(GrapeError::Empty);
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(GrapeError::NonFinite("matrix exponential argument".into()));
    }

    let norm = one_norm(a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = C64::new(0.5f64.powi(squarings), 0.0);
    let a = a.mapv(|z| z * scale);

    let ident: Array2<C64> = Array2::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| C64::new(PADE_13[k], 0.0);

    let u_inner = lin3(b(13), &a6, b(11), &a4, b(9), &a2);
    let u_tail = &lin3(b(7), &a6, b(5), &a4, b(3), &a2) + &ident.mapv(|z| z * b(1));
    let u = a.dot(&(&a6.dot(&u_inner) + &u_tail));

    let v_inner = lin3(b(12), &a6, b(10), &a4, b(8), &a2);
    let v_tail = &lin3(b(6), &a6, b(4), &a4, b(2), &a2) + &ident.mapv(|z| z * b(0));
    let v = &a6.dot(&v_inner) + &v_tail;

    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(q, p).ok_or_else(|| GrapeError::NonFinite("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(GrapeError::NonFinite("matrix exponential result".into()));
    }
    Ok(r)
}

fn lin3(c1: C64, m1: &Array2<C64>, c2: C64, m2: &Array2<C64>, c3: C64, m3: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros(m1.raw_dim());
    Zip::from(&mut out)
        .and(m1)
        .and(m2)
        .and(m3)
        .for_each(|o, &x, &y, &z| *o = c1 * x + c2 * y + c3 * z);
    out
}

fn one_norm(a: &Array2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `Q X = P` by LU factorization with partial pivoting.
fn solve(mut q: Array2<C64>, mut p: Array2<C64>) -> Option<Array2<C64>> {
    let n = q.nrows();
    let m = p.ncols();
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| q[[i, k]].norm().total_cmp(&q[[j, k]].norm()))?;
        if q[[pivot, k]].norm() == 0.0 {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                q.swap([k, j], [pivot, j]);
            }
            for j in 0..m {
                p.swap([k, j], [pivot, j]);
            }
        }
        let pivot_value = q[[k, k]];
        for i in k + 1..n {
            let factor = q[[i, k]] / pivot_value;
            if factor.norm() == 0.0 {
                continue;
            }
            q[[i, k]] = factor;
            for j in k + 1..n {
                let qkj = q[[k, j]];
                q[[i, j]] -= factor * qkj;
            }
            for j in 0..m {
                let pkj = p[[k, j]];
                p[[i, j]] -= factor * pkj;
            }
        }
    }
    for k in (0..n).rev() {
        let diag = q[[k, k]];
        for j in 0..m {
            let mut acc = p[[k, j]];
            for i in k + 1..n {
                acc -= q[[k, i]] * p[[i, j]];
            }
            p[[k, j]] = acc / diag;
        }
    }
    Some(p)
}
