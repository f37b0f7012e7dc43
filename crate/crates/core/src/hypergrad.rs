//! Inexact hypergradients via implicit differentiation and their
//! time-averaged (windowed) form.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, Cholesky, Matrix, Vector};
use crate::par::{self, Execution};
use crate::round::{RoundFunctions, SharedRound};

/// Solve `jac_xy + M · hess_yy = 0` for `M` (shape `d1 × d2`).
///
/// One Cholesky factorization of `hess_yy`, then one solve per row of `M`
/// (`hess_yy` is symmetric, so row `i` of `M` solves `hess_yy m = -jac_xy[i, :]`).
pub fn solve_m(hess_yy: &Matrix, jac_xy: &Matrix) -> Result<Matrix> {
    let d2 = hess_yy.nrows();
    if jac_xy.ncols() != d2 {
        return Err(Error::DimensionMismatch {
            what: "cross-Jacobian columns",
            expected: d2,
            got: jac_xy.ncols(),
        });
    }
    let chol = Cholesky::factor(hess_yy)?;
    let d1 = jac_xy.nrows();
    let mut m = Matrix::zeros(d1, d2);
    let mut row = vec![0.0; d2];
    for i in 0..d1 {
        for j in 0..d2 {
            row[j] = -jac_xy[(i, j)];
        }
        chol.solve_in_place(&mut row);
        for j in 0..d2 {
            m[(i, j)] = row[j];
        }
    }
    Ok(m)
}

/// `‖jac_xy + M hess_yy‖_max`, the defining residual of [`solve_m`].
pub fn m_residual(hess_yy: &Matrix, jac_xy: &Matrix, m: &Matrix) -> f64 {
    max_abs(&(jac_xy + m * hess_yy))
}

/// `∇_x f(x, y) + M ∇_y f(x, y)` with `M` from the round's own inner curvature at `(x, y)`.
pub fn hypergradient(round: &dyn RoundFunctions, x: &Vector, y: &Vector) -> Result<Vector> {
    hypergradient_with_inner(round, round, x, y)
}

/// Hypergradient of `outer`'s loss through the solution map of `inner`.
pub fn hypergradient_with_inner(
    outer: &dyn RoundFunctions,
    inner: &dyn RoundFunctions,
    x: &Vector,
    y: &Vector,
) -> Result<Vector> {
    let m = solve_m(&inner.hess_yy_g(x, y), &inner.jac_xy_g(x, y))?;
    Ok(outer.grad_x_f(x, y) + m * outer.grad_y_f(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Uniform,
    Exponential { gamma: f64 },
}

/// Weights `1 = u_0 >= u_1 >= ... >= u_{w-1} > 0` and their sum `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightWindow {
    weights: Vec<f64>,
    total: f64,
}

impl WeightWindow {
    pub fn new(kind: WeightKind, w: usize) -> Result<Self> {
        if w == 0 {
            return Err(Error::InvalidParameter("window size must be >= 1".into()));
        }
        let weights: Vec<f64> = match kind {
            WeightKind::Uniform => vec![1.0; w],
            WeightKind::Exponential { gamma } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "exponential weight gamma must lie in (0, 1), got {gamma}"
                    )));
                }
                let mut u = Vec::with_capacity(w);
                let mut p = 1.0;
                for _ in 0..w {
                    u.push(p);
                    p *= gamma;
                }
                u
            }
        };
        Self::from_weights(weights)
    }

    /// Custom weights; must start at 1, be non-increasing and positive.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("window size must be >= 1".into()));
        }
        if weights[0] != 1.0 {
            return Err(Error::InvalidParameter("first weight must equal 1".into()));
        }
        if weights.windows(2).any(|p| p[1] > p[0]) || weights.iter().any(|u| !(*u > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive and non-increasing".into()));
        }
        let total = weights.iter().sum();
        Ok(WeightWindow { weights, total })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Normalizer `W = Σ u_i`.
    pub fn total(&self) -> f64 {
        self.total
    }
}

pub fn make_weights(kind: WeightKind, w: usize) -> Result<WeightWindow> {
    WeightWindow::new(kind, w)
}

/// The last `w` round handles, tagged with their round index.
///
/// Gradients are never cached: every windowed evaluation re-queries each
/// round at the current iterate.
#[derive(Clone)]
pub struct HypergradientHistory {
    capacity: usize,
    rounds: VecDeque<(usize, SharedRound)>,
}

impl HypergradientHistory {
    pub fn new(w: usize) -> Self {
        HypergradientHistory {
            capacity: w.max(1),
            rounds: VecDeque::with_capacity(w.max(1).min(4096)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Index of the most recent round, 0 when empty.
    pub fn current(&self) -> usize {
        self.rounds.back().map_or(0, |(t, _)| *t)
    }

    /// Append round `t`; indices must be consecutive starting at 1.
    pub fn push(&mut self, t: usize, round: SharedRound) -> Result<()> {
        if t != self.current() + 1 {
            return Err(Error::InvalidParameter(format!(
                "history expects round {}, got {t}",
                self.current() + 1
            )));
        }
        if self.rounds.len() == self.capacity {
            self.rounds.pop_front();
        }
        self.rounds.push_back((t, round));
        Ok(())
    }

    /// Round `t - lag`, if it is positive and still held.
    pub fn lagged(&self, lag: usize) -> Option<&(usize, SharedRound)> {
        let n = self.rounds.len();
        if lag >= n {
            None
        } else {
            self.rounds.get(n - 1 - lag)
        }
    }
}

/// `(1/W) Σ_i u_i ∇̃f_{t-i}(x, y)`, each term with its own round's `M`.
/// Rounds before the first contribute zero but keep their weight in `W`.
pub fn windowed_hypergradient(
    history: &HypergradientHistory,
    window: &WeightWindow,
    x: &Vector,
    y: &Vector,
    exec: Execution,
) -> Result<Vector> {
    if history.capacity() != window.len() {
        return Err(Error::DimensionMismatch {
            what: "history window",
            expected: window.len(),
            got: history.capacity(),
        });
    }
    let held = history.len();
    let terms = par::try_map(exec, held, |lag| {
        let (t, round) = history.lagged(lag).expect("lag within held rounds");
        hypergradient(round.as_ref(), x, y).map_err(|e| e.at_round(*t))
    })?;
    Ok(weighted_mean(window, x.len(), terms))
}

/// Windowed hypergradient of the outer losses `outers[0] = f_t, outers[1] = f_{t-1}, ...`
/// all taken through the solution map of a single inner round.
pub fn windowed_hypergradient_shared_inner(
    outers: &[SharedRound],
    inner: &dyn RoundFunctions,
    window: &WeightWindow,
    x: &Vector,
    y: &Vector,
) -> Result<Vector> {
    let m = solve_m(&inner.hess_yy_g(x, y), &inner.jac_xy_g(x, y))?;
    let terms = outers
        .iter()
        .take(window.len())
        .map(|f| f.grad_x_f(x, y) + &m * f.grad_y_f(x, y))
        .collect();
    Ok(weighted_mean(window, x.len(), terms))
}

fn weighted_mean(window: &WeightWindow, d1: usize, terms: Vec<Vector>) -> Vector {
    let mut acc = Vector::zeros(d1);
    for (u, term) in window.weights().iter().zip(terms) {
        acc.axpy(*u, &term, 1.0);
    }
    acc / window.total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::QuadraticRound;
    use std::sync::Arc;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    #[test]
    fn diagonal_solve() {
        let got = solve_m(&m(2, 2, &[2.0, 0.0, 0.0, 4.0]), &m(1, 2, &[1.0, 2.0])).unwrap();
        assert!((got - m(1, 2, &[-0.5, -0.5])).amax() < 1e-15);
    }

    #[test]
    fn identity_hessian_negates() {
        let j = m(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let got = solve_m(&Matrix::identity(3, 3), &j).unwrap();
        assert_eq!(got, -j);
    }

    #[test]
    fn quadratic_family_m_is_one() {
        let got = solve_m(&m(1, 1, &[1.0]), &m(1, 1, &[-1.0])).unwrap();
        assert_eq!(got[(0, 0)], 1.0);
    }

    #[test]
    fn residual_is_small_on_random_spd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d2 = rng.gen_range(1..8);
            let d1 = rng.gen_range(1..5);
            let b = Matrix::from_fn(d2, d2, |_, _| rng.gen_range(-1.0..1.0));
            let h = &b * b.transpose() + Matrix::identity(d2, d2) * 0.1;
            let j = Matrix::from_fn(d1, d2, |_, _| rng.gen_range(-3.0..3.0));
            let sol = solve_m(&h, &j).unwrap();
            assert!(m_residual(&h, &j, &sol) <= 1e-10 * (1.0 + max_abs(&j)));
        }
    }

    #[test]
    fn indefinite_hessian_fails() {
        let err = solve_m(&m(2, 2, &[1.0, 0.0, 0.0, -1.0]), &m(1, 2, &[1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::FactorizationFailure { .. }));
    }

    #[test]
    fn quadratic_hypergradient_at_unit_point() {
        let r = QuadraticRound::new(0.0, 0.0, 0.0, 0.0);
        let one = Vector::from_element(1, 1.0);
        assert_eq!(hypergradient(&r, &one, &one).unwrap()[0], 2.0);
    }

    #[test]
    fn quadratic_hypergradient_at_inner_optimum() {
        let (a1, a2) = (0.3, -0.7);
        let r = QuadraticRound::new(a1, a2, 1.0, 2.0);
        for x in [-1.0, -0.2, 0.4, 0.9] {
            let xv = Vector::from_element(1, x);
            let y = Vector::from_element(1, x - a2);
            let got = hypergradient(&r, &xv, &y).unwrap()[0];
            assert!((got - ((x + 2.0 * a1) + (x - 2.0 * a2))).abs() < 1e-14);
        }
    }

    #[test]
    fn weights() {
        let u = make_weights(WeightKind::Uniform, 4).unwrap();
        assert_eq!((u.weights(), u.total()), (&[1.0, 1.0, 1.0, 1.0][..], 4.0));
        let e = make_weights(WeightKind::Exponential { gamma: 0.5 }, 3).unwrap();
        assert_eq!((e.weights(), e.total()), (&[1.0, 0.5, 0.25][..], 1.75));
        for kind in [WeightKind::Uniform, WeightKind::Exponential { gamma: 0.9 }] {
            let one = make_weights(kind, 1).unwrap();
            assert_eq!((one.weights(), one.total()), (&[1.0][..], 1.0));
        }
        assert!(make_weights(WeightKind::Uniform, 0).is_err());
        assert!(make_weights(WeightKind::Exponential { gamma: 1.0 }, 3).is_err());
        assert!(make_weights(WeightKind::Exponential { gamma: 0.0 }, 3).is_err());
    }

    fn quad(a1: f64, a2: f64) -> SharedRound {
        Arc::new(QuadraticRound::new(a1, a2, 0.0, 0.0))
    }

    #[test]
    fn window_of_one_matches_single_round() {
        let window = make_weights(WeightKind::Uniform, 1).unwrap();
        let mut h = HypergradientHistory::new(1);
        let (x, y) = (Vector::from_element(1, 0.3), Vector::from_element(1, -0.2));
        for (t, a) in [0.1, -0.4, 0.8].into_iter().enumerate() {
            let r = quad(a, -a);
            h.push(t + 1, r.clone()).unwrap();
            let got = windowed_hypergradient(&h, &window, &x, &y, Execution::Sequential).unwrap();
            assert_eq!(got, hypergradient(r.as_ref(), &x, &y).unwrap());
        }
    }

    #[test]
    fn identical_rounds_ignore_weights() {
        let window = make_weights(WeightKind::Exponential { gamma: 0.3 }, 4).unwrap();
        let mut h = HypergradientHistory::new(4);
        for t in 1..=6 {
            h.push(t, quad(0.2, 0.5)).unwrap();
        }
        let (x, y) = (Vector::from_element(1, -0.6), Vector::from_element(1, 0.9));
        let got = windowed_hypergradient(&h, &window, &x, &y, Execution::Parallel).unwrap();
        let single = hypergradient(&QuadraticRound::new(0.2, 0.5, 0.0, 0.0), &x, &y).unwrap();
        assert!((got - single).amax() < 1e-15);
    }

    #[test]
    fn first_round_zero_padding() {
        let window = make_weights(WeightKind::Uniform, 3).unwrap();
        let mut h = HypergradientHistory::new(3);
        let r = quad(0.4, -0.1);
        h.push(1, r.clone()).unwrap();
        let (x, y) = (Vector::from_element(1, 0.5), Vector::from_element(1, 0.25));
        let got = windowed_hypergradient(&h, &window, &x, &y, Execution::Sequential).unwrap();
        // explicit sum: one live term and two zero-convention terms
        let explicit = (hypergradient(r.as_ref(), &x, &y).unwrap()
            + Vector::zeros(1)
            + Vector::zeros(1))
            / 3.0;
        assert_eq!(got, explicit);
    }

    #[test]
    fn history_evicts_oldest_and_checks_order() {
        let mut h = HypergradientHistory::new(2);
        h.push(1, quad(0.0, 0.0)).unwrap();
        h.push(2, quad(0.0, 0.0)).unwrap();
        h.push(3, quad(0.0, 0.0)).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.lagged(0).unwrap().0, 3);
        assert_eq!(h.lagged(1).unwrap().0, 2);
        assert!(h.lagged(2).is_none());
        assert!(h.push(5, quad(0.0, 0.0)).is_err());
    }

    #[test]
    fn window_mismatch_is_rejected() {
        let window = make_weights(WeightKind::Uniform, 3).unwrap();
        let h = HypergradientHistory::new(2);
        let z = Vector::zeros(1);
        assert!(windowed_hypergradient(&h, &window, &z, &z, Execution::Sequential).is_err());
    }

    struct Indefinite;
    impl RoundFunctions for Indefinite {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }
        fn f(&self, _: &Vector, _: &Vector) -> f64 {
            0.0
        }
        fn grad_x_f(&self, _: &Vector, _: &Vector) -> Vector {
            Vector::zeros(1)
        }
        fn grad_y_f(&self, _: &Vector, _: &Vector) -> Vector {
            Vector::zeros(1)
        }
        fn g(&self, _: &Vector, y: &Vector) -> f64 {
            -0.5 * y[0] * y[0]
        }
        fn grad_y_g(&self, _: &Vector, y: &Vector) -> Vector {
            -y
        }
        fn jac_xy_g(&self, _: &Vector, _: &Vector) -> Matrix {
            Matrix::zeros(1, 1)
        }
        fn hess_yy_g(&self, _: &Vector, _: &Vector) -> Matrix {
            Matrix::from_element(1, 1, -1.0)
        }
    }

    #[test]
    fn failure_carries_round_index() {
        let window = make_weights(WeightKind::Uniform, 2).unwrap();
        let mut h = HypergradientHistory::new(2);
        h.push(1, Arc::new(Indefinite)).unwrap();
        h.push(2, quad(0.0, 0.0)).unwrap();
        let z = Vector::zeros(1);
        match windowed_hypergradient(&h, &window, &z, &z, Execution::Sequential) {
            Err(Error::FactorizationFailure { round: Some(1), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
