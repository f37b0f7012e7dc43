use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::set::FeasibleSet;

/// The leader/follower pair played in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionPair {
    pub x: Vector,
    pub y: Vector,
}

impl DecisionPair {
    pub fn new(x: Vector, y: Vector) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::InvalidParameter("decision dimensions must be >= 1".into()));
        }
        Ok(DecisionPair { x, y })
    }

    /// `y = 0`, `x` the projection of the origin onto `set`.
    pub fn default_for(set: &FeasibleSet, d2: usize) -> Self {
        DecisionPair {
            x: set.project(&Vector::zeros(set.dim())),
            y: Vector::zeros(d2),
        }
    }
}

/// First- and second-order oracle for one round's bilevel pair `(f_t, g_t)`.
///
/// `x` has dimension `d1`, `y` dimension `d2`. All derivatives are analytic.
pub trait RoundFunctions: Send + Sync {
    fn dims(&self) -> (usize, usize);

    /// Outer (leader) loss.
    fn f(&self, x: &Vector, y: &Vector) -> f64;
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector;

    /// Inner (follower) loss.
    fn g(&self, x: &Vector, y: &Vector) -> f64;
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector;
    /// Mixed second derivative `∇²_{xy} g`, shape `d1 × d2`.
    fn jac_xy_g(&self, x: &Vector, y: &Vector) -> Matrix;
    /// `∇²_{yy} g`, shape `d2 × d2`.
    fn hess_yy_g(&self, x: &Vector, y: &Vector) -> Matrix;

    fn closed_form_y_star(&self, _x: &Vector) -> Option<Vector> {
        None
    }

    fn closed_form_x_star(&self, _set: &FeasibleSet) -> Option<Vector> {
        None
    }

    /// Whether `x ↦ f(x, y*(x))` is convex; numerical outer oracles flag their
    /// result as local-only otherwise.
    fn composed_convex(&self) -> bool {
        false
    }
}

pub type SharedRound = Arc<dyn RoundFunctions>;

/// A finite sequence of rounds, indexed from 1.
#[derive(Clone, Default)]
pub struct Stream {
    rounds: Vec<SharedRound>,
}

impl fmt::Debug for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stream").field("len", &self.rounds.len()).finish()
    }
}

impl Stream {
    pub fn new(rounds: Vec<SharedRound>) -> Self {
        Stream { rounds }
    }

    pub fn push(&mut self, round: SharedRound) {
        self.rounds.push(round);
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Round `t` (1-based).
    pub fn round(&self, t: usize) -> Result<&SharedRound> {
        if t == 0 {
            return Err(Error::InvalidParameter("round indices start at 1".into()));
        }
        self.rounds.get(t - 1).ok_or(Error::StreamExhausted {
            t,
            len: self.rounds.len(),
        })
    }

    pub fn rounds(&self) -> &[SharedRound] {
        &self.rounds
    }

    /// First `t` rounds, failing if the stream is shorter.
    pub fn prefix(&self, t: usize) -> Result<Stream> {
        if t > self.rounds.len() {
            return Err(Error::StreamExhausted {
                t: self.rounds.len() + 1,
                len: self.rounds.len(),
            });
        }
        Ok(Stream::new(self.rounds[..t].to_vec()))
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.rounds.first().map(|r| r.dims())
    }
}

/// Wraps a round and multiplies its outer loss by a constant; the inner
/// problem is untouched.
pub struct ScaledOuter {
    pub inner: SharedRound,
    pub scale: f64,
}

impl RoundFunctions for ScaledOuter {
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        self.scale * self.inner.f(x, y)
    }
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner.grad_x_f(x, y) * self.scale
    }
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner.grad_y_f(x, y) * self.scale
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        self.inner.g(x, y)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        self.inner.grad_y_g(x, y)
    }
    fn jac_xy_g(&self, x: &Vector, y: &Vector) -> Matrix {
        self.inner.jac_xy_g(x, y)
    }
    fn hess_yy_g(&self, x: &Vector, y: &Vector) -> Matrix {
        self.inner.hess_yy_g(x, y)
    }
    fn closed_form_y_star(&self, x: &Vector) -> Option<Vector> {
        self.inner.closed_form_y_star(x)
    }
    fn closed_form_x_star(&self, set: &FeasibleSet) -> Option<Vector> {
        if self.scale > 0.0 {
            self.inner.closed_form_x_star(set)
        } else {
            None
        }
    }
    fn composed_convex(&self) -> bool {
        self.scale >= 0.0 && self.inner.composed_convex()
    }
}

impl Stream {
    /// The same stream with every outer loss multiplied by `scale`.
    pub fn scale_outer(&self, scale: f64) -> Stream {
        Stream::new(
            self.rounds
                .iter()
                .map(|r| Arc::new(ScaledOuter { inner: r.clone(), scale }) as SharedRound)
                .collect(),
        )
    }
}
