use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

// Rescaled points can land a few ulps outside the sphere; accepting them keeps
// projection exactly idempotent.
const BALL_SLACK: f64 = 1.0 + 8.0 * f64::EPSILON;

/// Convex decision set for the leader, with Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    Unbounded { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl FeasibleSet {
    pub fn unbounded(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("set dimension must be >= 1".into()));
        }
        Ok(FeasibleSet::Unbounded { dim })
    }

    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidParameter("box dimension must be >= 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box upper bound",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "box bounds must be finite with lower <= upper (coordinate {i}: {lo} > {hi})"
                )));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    /// Box `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(vec![lo; dim], vec![hi; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("ball dimension must be >= 1".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Unbounded { dim } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
        }
    }

    /// Euclidean diameter `D`; infinite for the unbounded set.
    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::Unbounded { .. } => f64::INFINITY,
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| (hi - lo) * (hi - lo))
                .sum::<f64>()
                .sqrt(),
            FeasibleSet::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, FeasibleSet::Unbounded { .. })
    }

    /// Euclidean projection onto the set. Feasible points are returned unchanged.
    pub fn project(&self, x: &Vector) -> Vector {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            FeasibleSet::Unbounded { .. } => x.clone(),
            FeasibleSet::Box { lower, upper } => {
                Vector::from_iterator(x.len(), x.iter().enumerate().map(|(i, v)| v.clamp(lower[i], upper[i])))
            }
            FeasibleSet::Ball { center, radius } => {
                let dist = x
                    .iter()
                    .zip(center)
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                if dist <= radius * BALL_SLACK {
                    x.clone()
                } else {
                    let s = radius / dist;
                    Vector::from_iterator(x.len(), x.iter().zip(center).map(|(v, c)| c + s * (v - c)))
                }
            }
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            FeasibleSet::Unbounded { .. } => x.iter().all(|v| v.is_finite()),
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .enumerate()
                .all(|(i, v)| lower[i] <= *v && *v <= upper[i]),
            FeasibleSet::Ball { center, radius } => {
                x.iter()
                    .zip(center)
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt()
                    <= radius * BALL_SLACK
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn box_clamps() {
        let set = FeasibleSet::cube(1, -1.0, 1.0).unwrap();
        assert_eq!(set.project(&v(&[1.5])), v(&[1.0]));
        assert_eq!(set.diameter(), 2.0);
    }

    #[test]
    fn ball_scales_radially() {
        let set = FeasibleSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = set.project(&v(&[3.0, 4.0]));
        assert!((p - v(&[0.6, 0.8])).amax() < 1e-15);
        assert_eq!(set.diameter(), 2.0);
    }

    #[test]
    fn unbounded_is_identity() {
        let set = FeasibleSet::unbounded(2).unwrap();
        assert_eq!(set.project(&v(&[7.0, -2.0])), v(&[7.0, -2.0]));
        assert!(set.diameter().is_infinite());
    }

    #[test]
    fn box_diameter_is_euclidean() {
        let set = FeasibleSet::new_box(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(set.diameter(), 5.0);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(FeasibleSet::new_box(vec![1.0], vec![0.0]).is_err());
        assert!(FeasibleSet::new_box(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(FeasibleSet::ball(vec![0.0], 0.0).is_err());
        assert!(FeasibleSet::unbounded(0).is_err());
    }

    fn sets() -> impl Strategy<Value = FeasibleSet> {
        prop_oneof![
            Just(FeasibleSet::unbounded(3).unwrap()),
            (prop::array::uniform3(-2.0..0.0f64), prop::array::uniform3(0.0..2.0f64))
                .prop_map(|(lo, hi)| FeasibleSet::new_box(lo.to_vec(), hi.to_vec()).unwrap()),
            (prop::array::uniform3(-1.0..1.0f64), 0.1..3.0f64)
                .prop_map(|(c, r)| FeasibleSet::ball(c.to_vec(), r).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(set in sets(), x in prop::array::uniform3(-10.0..10.0f64)) {
            let p = set.project(&v(&x));
            prop_assert!(set.contains(&p));
            prop_assert_eq!(set.project(&p), p);
        }

        #[test]
        fn projection_is_nonexpansive(
            set in sets(),
            a in prop::array::uniform3(-10.0..10.0f64),
            b in prop::array::uniform3(-10.0..10.0f64),
        ) {
            let (a, b) = (v(&a), v(&b));
            let lhs = (set.project(&a) - set.project(&b)).norm();
            prop_assert!(lhs <= (a - b).norm() + 1e-12);
        }
    }
}
