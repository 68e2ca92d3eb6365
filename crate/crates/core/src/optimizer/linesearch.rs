//! Bracket-and-zoom line search for the strong Wolfe conditions
//! (Nocedal & Wright, Algorithms 3.5 and 3.6).

use thiserror::Error;

/// One evaluation along the ray `x + t·d`: `φ(t)`, `φ'(t)` and whatever the
/// caller wants back for the accepted step.
#[derive(Debug, Clone)]
pub struct LinePoint<P> {
    pub value: f64,
    pub slope: f64,
    pub payload: P,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub c1: f64,
    pub c2: f64,
    pub max_trials: usize,
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_trials: 20,
            initial_step: 1.0,
            max_step: 1e10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome<P> {
    pub step: f64,
    pub point: LinePoint<P>,
    pub evaluations: usize,
    /// False when the trial budget ran out and the best sufficient-decrease
    /// step was returned instead.
    pub strong_wolfe: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineSearchError<E> {
    #[error("directional derivative {0} is not negative")]
    NotDescent(f64),
    #[error("no step with sufficient decrease after {0} trials")]
    NoDecrease(usize),
    #[error(transparent)]
    Objective(E),
}

struct Search<'a, P, E, F> {
    phi: F,
    f0: f64,
    g0: f64,
    params: &'a LineSearchParams,
    evaluations: usize,
    best: Option<(f64, LinePoint<P>)>,
    _err: std::marker::PhantomData<E>,
}

impl<P: Clone, E, F> Search<'_, P, E, F>
where
    F: FnMut(f64) -> Result<LinePoint<P>, E>,
{
    fn armijo(&self, t: f64, value: f64) -> bool {
        value <= self.f0 + self.params.c1 * t * self.g0
    }

    fn curvature(&self, slope: f64) -> bool {
        slope.abs() <= -self.params.c2 * self.g0
    }

    fn eval(&mut self, t: f64) -> Result<LinePoint<P>, LineSearchError<E>> {
        self.evaluations += 1;
        let p = (self.phi)(t).map_err(LineSearchError::Objective)?;
        let value_ok = p.value.is_finite() && p.slope.is_finite();
        if value_ok && self.armijo(t, p.value) && self.best.as_ref().is_none_or(|(_, b)| p.value < b.value) {
            self.best = Some((t, p.clone()));
        }
        Ok(p)
    }

    fn accept(&self, step: f64, point: LinePoint<P>) -> LineSearchOutcome<P> {
        LineSearchOutcome {
            step,
            point,
            evaluations: self.evaluations,
            strong_wolfe: true,
        }
    }

    fn fallback(self) -> Result<LineSearchOutcome<P>, LineSearchError<E>> {
        match self.best {
            Some((step, point)) => Ok(LineSearchOutcome {
                step,
                point,
                evaluations: self.evaluations,
                strong_wolfe: false,
            }),
            None => Err(LineSearchError::NoDecrease(self.evaluations)),
        }
    }
}

/// Minimizer of the cubic interpolating `(a, fa, ga)` and `(b, fb, gb)`,
/// falling back to bisection when it leaves the safeguarded interior.
fn cubic_step(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    if t.is_finite() && t >= lo + margin && t <= hi - margin {
        t
    } else {
        mid
    }
}

/// Finds `t` with `φ(t) ≤ φ(0) + c1 t φ'(0)` and `|φ'(t)| ≤ c2 |φ'(0)|`.
///
/// If the trial budget is exhausted, the best step seen that satisfies the
/// sufficient-decrease condition is returned with `strong_wolfe = false`;
/// if there is none, the search fails.
pub fn wolfe_line_search<P, E, F>(
    phi: F,
    f0: f64,
    g0: f64,
    params: &LineSearchParams,
) -> Result<LineSearchOutcome<P>, LineSearchError<E>>
where
    P: Clone,
    F: FnMut(f64) -> Result<LinePoint<P>, E>,
{
    if !(g0 < 0.0) {
        return Err(LineSearchError::NotDescent(g0));
    }
    let mut search = Search {
        phi,
        f0,
        g0,
        params,
        evaluations: 0,
        best: None,
        _err: std::marker::PhantomData,
    };

    let (mut t_prev, mut f_prev, mut g_prev) = (0.0, f0, g0);
    let mut t = params.initial_step.min(params.max_step);
    let mut first = true;
    while search.evaluations < params.max_trials {
        let p = search.eval(t)?;
        if !p.value.is_finite() || !p.slope.is_finite() || !search.armijo(t, p.value) || (!first && p.value >= f_prev) {
            return zoom(search, (t_prev, f_prev, g_prev), (t, p.value, p.slope));
        }
        if search.curvature(p.slope) {
            return Ok(search.accept(t, p));
        }
        if p.slope >= 0.0 {
            return zoom(search, (t, p.value, p.slope), (t_prev, f_prev, g_prev));
        }
        if t >= params.max_step {
            break;
        }
        (t_prev, f_prev, g_prev) = (t, p.value, p.slope);
        t = (2.0 * t).min(params.max_step);
        first = false;
    }
    search.fallback()
}

fn zoom<P, E, F>(
    mut search: Search<'_, P, E, F>,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Result<LineSearchOutcome<P>, LineSearchError<E>>
where
    P: Clone,
    F: FnMut(f64) -> Result<LinePoint<P>, E>,
{
    while search.evaluations < search.params.max_trials {
        let t = if hi.1.is_finite() && hi.2.is_finite() {
            cubic_step(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            0.5 * (lo.0 + hi.0)
        };
        if (hi.0 - lo.0).abs() <= f64::EPSILON * lo.0.abs().max(1e-300) {
            break;
        }
        let p = search.eval(t)?;
        if !p.value.is_finite() || !search.armijo(t, p.value) || p.value >= lo.1 {
            hi = (t, p.value, p.slope);
        } else {
            if search.curvature(p.slope) {
                return Ok(search.accept(t, p));
            }
            if p.slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t, p.value, p.slope);
        }
    }
    search.fallback()
}

#[cfg(test)]
mod tests {
    use super::*;

    type Never = std::convert::Infallible;

    fn quad(t: f64) -> Result<LinePoint<()>, Never> {
        // ½(x − 1)² along x = t
        Ok(LinePoint {
            value: 0.5 * (t - 1.0) * (t - 1.0),
            slope: t - 1.0,
            payload: (),
        })
    }

    #[test]
    fn quadratic_accepts_unit_step() {
        let out = wolfe_line_search(quad, 0.5, -1.0, &LineSearchParams::default()).unwrap();
        assert_eq!(out.step, 1.0);
        assert_eq!(out.evaluations, 1);
        assert!(out.strong_wolfe);
    }

    #[test]
    fn ascent_direction_is_rejected() {
        let err = wolfe_line_search(quad, 0.5, 1.0, &LineSearchParams::default()).unwrap_err();
        assert_eq!(err, LineSearchError::NotDescent(1.0));
    }

    #[test]
    fn linear_function_returns_best_decrease() {
        // No step can satisfy the curvature condition on a line; the search
        // expands and returns the best sufficient-decrease step.
        let params = LineSearchParams::default();
        let out = wolfe_line_search(
            |t| {
                Ok::<_, Never>(LinePoint {
                    value: 3.0 - 2.0 * t,
                    slope: -2.0,
                    payload: (),
                })
            },
            3.0,
            -2.0,
            &params,
        )
        .unwrap();
        assert!(!out.strong_wolfe);
        assert!(out.step >= 1.0);
        assert!(out.point.value <= 3.0 + params.c1 * out.step * -2.0);
        assert_eq!(out.evaluations, params.max_trials);
    }

    #[test]
    fn overshoot_is_zoomed() {
        // φ(t) = (t − 0.01)², steep minimum far inside the unit step.
        let phi = |t: f64| {
            Ok::<_, Never>(LinePoint {
                value: (t - 0.01).powi(2),
                slope: 2.0 * (t - 0.01),
                payload: t,
            })
        };
        let params = LineSearchParams::default();
        let (f0, g0) = (1e-4, -0.02);
        let out = wolfe_line_search(phi, f0, g0, &params).unwrap();
        assert!(out.strong_wolfe);
        assert!(out.point.value <= f0 + params.c1 * out.step * g0);
        assert!(out.point.slope.abs() <= params.c2 * g0.abs());
        assert_eq!(out.point.payload, out.step);
    }

    #[test]
    fn no_decrease_fails() {
        let params = LineSearchParams {
            max_trials: 5,
            ..Default::default()
        };
        let err = wolfe_line_search(
            |_| {
                Ok::<_, Never>(LinePoint {
                    value: 10.0,
                    slope: 1.0,
                    payload: (),
                })
            },
            0.0,
            -1.0,
            &params,
        )
        .unwrap_err();
        assert_eq!(err, LineSearchError::NoDecrease(5));
    }

    #[test]
    fn objective_errors_propagate() {
        let err = wolfe_line_search(
            |_| Err::<LinePoint<()>, _>("boom"),
            0.0,
            -1.0,
            &LineSearchParams::default(),
        )
        .unwrap_err();
        assert_eq!(err, LineSearchError::Objective("boom"));
    }
}
