//! The scalar quadratic family
//! `f = ½(x + 2a¹)² + ½(y − a²)² + a³`, `g = ½y² − (x − a²)y + a⁴`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::ProblemConstants;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::round::{RoundFunctions, SharedRound, Stream};
use crate::set::FeasibleSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticRound {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl QuadraticRound {
    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Self {
        QuadraticRound { a1, a2, a3, a4 }
    }

    /// Unconstrained bilevel minimizer `a² − a¹`.
    pub fn x_star_unconstrained(&self) -> f64 {
        self.a2 - self.a1
    }
}

fn s(v: f64) -> Vector {
    Vector::from_element(1, v)
}

impl RoundFunctions for QuadraticRound {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }
    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * (x[0] + 2.0 * self.a1).powi(2) + 0.5 * (y[0] - self.a2).powi(2) + self.a3
    }
    fn grad_x_f(&self, x: &Vector, _y: &Vector) -> Vector {
        s(x[0] + 2.0 * self.a1)
    }
    fn grad_y_f(&self, _x: &Vector, y: &Vector) -> Vector {
        s(y[0] - self.a2)
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * y[0] * y[0] - (x[0] - self.a2) * y[0] + self.a4
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        s(y[0] - (x[0] - self.a2))
    }
    fn jac_xy_g(&self, _x: &Vector, _y: &Vector) -> Matrix {
        Matrix::from_element(1, 1, -1.0)
    }
    fn hess_yy_g(&self, _x: &Vector, _y: &Vector) -> Matrix {
        Matrix::from_element(1, 1, 1.0)
    }
    fn closed_form_y_star(&self, x: &Vector) -> Option<Vector> {
        Some(s(x[0] - self.a2))
    }
    fn closed_form_x_star(&self, set: &FeasibleSet) -> Option<Vector> {
        // φ(x) = ½(x + 2a¹)² + ½(x − 2a²)² is a 1-D convex quadratic, so
        // projecting its stationary point onto the interval is exact.
        Some(set.project(&s(self.x_star_unconstrained())))
    }
    fn composed_convex(&self) -> bool {
        true
    }
}

/// Which coefficient pattern to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CoefficientRule {
    /// `a² = (−1)^t/√t`; `a¹ = a²` when `outer_tracks_inner`, else `a¹ = 0`.
    AltSqrt { outer_tracks_inner: bool },
    /// Same coefficients every round.
    Constant { a1: f64, a2: f64, a3: f64, a4: f64 },
    /// `a¹ = amplitude·(−1)^t`, fixed `a²`: the inner solution map never moves.
    AltOuter { amplitude: f64, a2: f64 },
    /// Explicit `[a¹, a², a³, a⁴]` per round.
    Table { rows: Vec<[f64; 4]> },
}

impl CoefficientRule {
    pub fn coefficients(&self, t: usize) -> Option<[f64; 4]> {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        match self {
            CoefficientRule::AltSqrt { outer_tracks_inner } => {
                let a2 = sign / (t as f64).sqrt();
                let a1 = if *outer_tracks_inner { a2 } else { 0.0 };
                Some([a1, a2, 0.0, 0.0])
            }
            CoefficientRule::Constant { a1, a2, a3, a4 } => Some([*a1, *a2, *a3, *a4]),
            CoefficientRule::AltOuter { amplitude, a2 } => Some([amplitude * sign, *a2, 0.0, 0.0]),
            CoefficientRule::Table { rows } => rows.get(t.checked_sub(1)?).copied(),
        }
    }
}

pub fn quadratic_stream(rule: &CoefficientRule, horizon: usize) -> Result<Stream> {
    let mut rounds: Vec<SharedRound> = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let [a1, a2, a3, a4] = rule.coefficients(t).ok_or(Error::StreamExhausted {
            t,
            len: t - 1,
        })?;
        if ![a1, a2, a3, a4].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coefficient at round {t}")));
        }
        rounds.push(Arc::new(QuadraticRound::new(a1, a2, a3, a4)));
    }
    Ok(Stream::new(rounds))
}

/// Declared constants for the family on a 1-D set, given `max |a¹|, |a²| <= coeff_bound`.
///
/// `ℓ_{g,1}` is the spectral norm of the joint Hessian `[[0, −1], [−1, 1]]`;
/// `ℓ_{f,0}` bounds `‖∇f‖` over `|x| <= R`, `|y| <= R + coeff_bound`.
pub fn quadratic_constants(set: &FeasibleSet, coeff_bound: f64) -> Result<ProblemConstants> {
    let radius = match set {
        FeasibleSet::Box { lower, upper } => lower[0].abs().max(upper[0].abs()),
        FeasibleSet::Ball { center, radius } => center[0].abs() + radius,
        FeasibleSet::Unbounded { .. } => {
            return Err(Error::InvalidParameter(
                "quadratic constants need a bounded set".into(),
            ))
        }
    };
    let grad_bound = radius + 2.0 * coeff_bound;
    Ok(ProblemConstants {
        ell_f0: std::f64::consts::SQRT_2 * grad_bound,
        ell_f1: 1.0,
        ell_g1: (1.0 + 5.0_f64.sqrt()) / 2.0,
        ell_g2: 0.0,
        mu_g: 1.0,
        mu_f: Some(1.0),
        m_bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck::check_round;

    #[test]
    fn alt_sqrt_coefficients() {
        let stream = quadratic_stream(&CoefficientRule::AltSqrt { outer_tracks_inner: true }, 4).unwrap();
        let r = stream.round(4).unwrap();
        let x = s(0.9);
        let y_star = r.closed_form_y_star(&x).unwrap();
        assert!((y_star[0] - 0.4).abs() < 1e-15);
        let rule = CoefficientRule::AltSqrt { outer_tracks_inner: false };
        assert_eq!(rule.coefficients(3).unwrap()[0], 0.0);
        assert!((rule.coefficients(3).unwrap()[1] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn short_table_exhausts() {
        let rule = CoefficientRule::Table { rows: vec![[0.0; 4]; 3] };
        assert_eq!(
            quadratic_stream(&rule, 5).unwrap_err(),
            Error::StreamExhausted { t: 4, len: 3 }
        );
    }

    #[test]
    fn closed_forms_are_consistent() {
        let set = FeasibleSet::cube(1, -1.0, 1.0).unwrap();
        let r = QuadraticRound::new(0.2, 0.5, 0.0, 0.0);
        assert!((r.closed_form_x_star(&set).unwrap()[0] - 0.3).abs() < 1e-15);
        for x in [-1.0, 0.0, 0.7] {
            let x = s(x);
            let y = r.closed_form_y_star(&x).unwrap();
            assert_eq!(r.grad_y_g(&x, &y)[0], 0.0);
        }
        // boundary case: unconstrained optimum 3 clips to 1
        let r = QuadraticRound::new(-1.0, 2.0, 0.0, 0.0);
        assert_eq!(r.closed_form_x_star(&set).unwrap()[0], 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let r = QuadraticRound::new(0.3, -0.2, 1.5, -0.5);
        let report = check_round(&r, &s(0.4), &s(-0.8), 1e-5);
        assert!(report.max_rel_error() <= 1e-5, "{report:?}");
    }
}
