use std::collections::VecDeque;

/// Recent `(s, y)` correction pairs, oldest first.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LbfgsHistory {
    pub fn new(memory: usize) -> Self {
        assert!(memory >= 1, "L-BFGS memory must be at least 1");
        Self {
            memory,
            pairs: VecDeque::with_capacity(memory),
        }
    }

    /// Stores a pair if it satisfies `s·y > 1e-12 ‖s‖ ‖y‖`; returns whether
    /// it was kept. The oldest pair is evicted once memory is full.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
        true
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice()))
    }
}

/// Two-loop recursion: `d = −H·g`, with the initial inverse Hessian scaled by
/// `γ = s·y / y·y` of the newest pair. Empty history gives `−g`.
pub fn lbfgs_direction(grad: &[f64], history: &LbfgsHistory) -> Vec<f64> {
    let mut q = grad.to_vec();
    let k = history.pairs.len();
    let mut alphas = vec![0.0; k];
    let rhos: Vec<f64> = history.pairs.iter().map(|(s, y)| 1.0 / dot(s, y)).collect();

    for i in (0..k).rev() {
        let (s, y) = &history.pairs[i];
        let a = rhos[i] * dot(s, &q);
        alphas[i] = a;
        q.iter_mut().zip(y).for_each(|(qj, yj)| *qj -= a * yj);
    }

    let gamma = match history.pairs.back() {
        Some((s, y)) => dot(s, y) / dot(y, y),
        None => 1.0,
    };
    q.iter_mut().for_each(|v| *v *= gamma);

    for i in 0..k {
        let (s, y) = &history.pairs[i];
        let b = rhos[i] * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(rj, sj)| *rj += (alphas[i] - b) * sj);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_steepest_descent() {
        let h = LbfgsHistory::new(5);
        assert_eq!(lbfgs_direction(&[1.0, -2.0, 0.5], &h), vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn curvature_violations_are_skipped() {
        let mut h = LbfgsHistory::new(2);
        assert!(!h.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!h.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(h.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        assert!(h.push(vec![0.0, 1.0], vec![0.0, 3.0]));
        assert!(h.push(vec![1.0, 1.0], vec![1.0, 1.0]));
        assert_eq!(h.len(), 2);
        let first: Vec<f64> = h.pairs().next().unwrap().0.to_vec();
        assert_eq!(first, vec![0.0, 1.0]);
    }

    /// Dense BFGS inverse update `H+ = (I − ρ s yᵀ) H0 (I − ρ y sᵀ) + ρ s sᵀ`.
    fn dense_bfgs_inverse(s: &[f64], y: &[f64], gamma: f64) -> Vec<Vec<f64>> {
        let n = s.len();
        let rho = 1.0 / dot(s, y);
        let mut left = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                left[i][j] = if i == j { 1.0 } else { 0.0 } - rho * s[i] * y[j];
            }
        }
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                // left · (γ I) · leftᵀ
                h[i][j] = gamma * (0..n).map(|k| left[i][k] * left[j][k]).sum::<f64>() + rho * s[i] * s[j];
            }
        }
        h
    }

    #[test]
    fn one_pair_matches_dense_bfgs() {
        // J = ½ xᵀ A x, A = diag(1, 4): y = A s.
        let s = vec![0.7, -0.3];
        let y = vec![0.7, -1.2];
        let mut hist = LbfgsHistory::new(3);
        assert!(hist.push(s.clone(), y.clone()));
        let g = vec![0.4, 1.1];
        let d = lbfgs_direction(&g, &hist);
        let gamma = dot(&s, &y) / dot(&y, &y);
        let h = dense_bfgs_inverse(&s, &y, gamma);
        for i in 0..2 {
            let expected = -(h[i][0] * g[0] + h[i][1] * g[1]);
            assert!((d[i] - expected).abs() < 1e-14, "{} vs {}", d[i], expected);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn direction_is_descent(
                pairs in proptest::collection::vec(
                    (proptest::collection::vec(-1.0..1.0f64, 4), proptest::collection::vec(-1.0..1.0f64, 4)),
                    0..6,
                ),
                grad in proptest::collection::vec(-1.0..1.0f64, 4),
            ) {
                prop_assume!(grad.iter().any(|g| g.abs() > 1e-6));
                let mut hist = LbfgsHistory::new(4);
                for (s, y) in pairs {
                    hist.push(s, y);
                }
                for (s, y) in hist.pairs() {
                    prop_assert!(dot(s, y) > 1e-12 * norm(s) * norm(y));
                }
                let d = lbfgs_direction(&grad, &hist);
                prop_assert!(dot(&d, &grad) < 0.0);
            }
        }
    }
}
