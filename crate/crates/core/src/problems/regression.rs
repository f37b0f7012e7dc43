//! Online hyperparameter learning for regression: the follower fits a
//! regularized linear model on a training sample, the leader scores it on a
//! validation sample.

use std::sync::Arc;

use crate::dataset::{Sample, SampleTable};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::round::{RoundFunctions, SharedRound, Stream};

/// How a block of hyperparameters maps onto the ridge diagonal `C(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeLayout {
    /// One hyperparameter shared by every coordinate.
    Broadcast,
    /// One hyperparameter per coordinate.
    Diagonal,
}

impl RidgeLayout {
    fn for_block(len: usize, d2: usize) -> Result<Self> {
        match len {
            1 => Ok(RidgeLayout::Broadcast),
            n if n == d2 => Ok(RidgeLayout::Diagonal),
            n => Err(Error::DimensionMismatch {
                what: "ridge hyperparameter block (must be 1 or d2)",
                expected: d2,
                got: n,
            }),
        }
    }

    fn len(self, d2: usize) -> usize {
        match self {
            RidgeLayout::Broadcast => 1,
            RidgeLayout::Diagonal => d2,
        }
    }

    fn index(self, offset: usize, j: usize) -> usize {
        match self {
            RidgeLayout::Broadcast => offset,
            RidgeLayout::Diagonal => offset + j,
        }
    }
}

/// Shared ridge-regression pieces; `ridge_offset` is where the ridge block starts in `x`.
#[derive(Debug, Clone)]
struct RidgeCore {
    train: Sample,
    val: Sample,
    layout: RidgeLayout,
    ridge_offset: usize,
}

impl RidgeCore {
    fn d2(&self) -> usize {
        self.train.a.len()
    }

    fn residual(s: &Sample, y: &Vector) -> f64 {
        s.a.dot(y) - s.b
    }

    fn c(&self, x: &Vector, j: usize) -> f64 {
        x[self.layout.index(self.ridge_offset, j)].exp()
    }

    fn f(&self, y: &Vector) -> f64 {
        0.5 * Self::residual(&self.val, y).powi(2)
    }

    fn grad_y_f(&self, y: &Vector) -> Vector {
        &self.val.a * Self::residual(&self.val, y)
    }

    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        let ridge: f64 = (0..self.d2()).map(|j| self.c(x, j) * y[j] * y[j]).sum();
        0.5 * Self::residual(&self.train, y).powi(2) + ridge
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        let mut grad = &self.train.a * Self::residual(&self.train, y);
        for j in 0..self.d2() {
            grad[j] += 2.0 * self.c(x, j) * y[j];
        }
        grad
    }

    fn hess_yy_g(&self, x: &Vector) -> Matrix {
        let a = &self.train.a;
        let mut h = a * a.transpose();
        for j in 0..self.d2() {
            h[(j, j)] += 2.0 * self.c(x, j);
        }
        h
    }

    /// Adds the ridge contribution to a `d1 × d2` cross-Jacobian.
    fn add_jac_xy(&self, x: &Vector, y: &Vector, jac: &mut Matrix) {
        for j in 0..self.d2() {
            let row = self.layout.index(self.ridge_offset, j);
            jac[(row, j)] += 2.0 * self.c(x, j) * y[j];
        }
    }
}

/// `g(x, y) = ½(aᵀy − b)² + yᵀC(x)y`, `f(x, y) = ½(a_valᵀy − b_val)²`, `C(x) = diag(exp(x))`.
#[derive(Debug, Clone)]
pub struct HORegressionRound {
    core: RidgeCore,
    d1: usize,
}

impl HORegressionRound {
    pub fn new(train: Sample, val: Sample, d1: usize) -> Result<Self> {
        let d2 = train.a.len();
        check_val(&train, &val)?;
        let layout = RidgeLayout::for_block(d1, d2)?;
        Ok(HORegressionRound {
            core: RidgeCore {
                train,
                val,
                layout,
                ridge_offset: 0,
            },
            d1,
        })
    }
}

fn check_val(train: &Sample, val: &Sample) -> Result<()> {
    if train.a.is_empty() {
        return Err(Error::InvalidParameter("feature dimension must be >= 1".into()));
    }
    if val.a.len() != train.a.len() {
        return Err(Error::DimensionMismatch {
            what: "validation feature length",
            expected: train.a.len(),
            got: val.a.len(),
        });
    }
    Ok(())
}

impl RoundFunctions for HORegressionRound {
    fn dims(&self) -> (usize, usize) {
        (self.d1, self.core.d2())
    }
    fn f(&self, _x: &Vector, y: &Vector) -> f64 {
        self.core.f(y)
    }
    fn grad_x_f(&self, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(self.d1)
    }
    fn grad_y_f(&self, _x: &Vector, y: &Vector) -> Vector {
        self.core.grad_y_f(y)
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        self.core.g(x, y)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        self.core.grad_y_g(x, y)
    }
    fn jac_xy_g(&self, x: &Vector, y: &Vector) -> Matrix {
        let mut jac = Matrix::zeros(self.d1, self.core.d2());
        self.core.add_jac_xy(x, y, &mut jac);
        jac
    }
    fn hess_yy_g(&self, x: &Vector, _y: &Vector) -> Matrix {
        self.core.hess_yy_g(x)
    }
}

/// The ridge model plus a smoothed ℓ1 penalty `Σ_i exp(x_i)(y_i² + μ²)^{1/2}`.
///
/// `x = (x_1..x_{d2}, x̄)`: the first `d2` entries weight the ℓ1 terms, the
/// ridge block `x̄` has length 1 or `d2`.
#[derive(Debug, Clone)]
pub struct SmoothedElasticNetRound {
    core: RidgeCore,
    mu: f64,
}

impl SmoothedElasticNetRound {
    pub fn new(train: Sample, val: Sample, d1: usize, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smoothing parameter must be > 0, got {mu}"
            )));
        }
        check_val(&train, &val)?;
        let d2 = train.a.len();
        if d1 <= d2 {
            return Err(Error::DimensionMismatch {
                what: "elastic-net hyperparameters (d2 l1 weights plus a ridge block)",
                expected: d2 + 1,
                got: d1,
            });
        }
        let layout = RidgeLayout::for_block(d1 - d2, d2)?;
        Ok(SmoothedElasticNetRound {
            core: RidgeCore {
                train,
                val,
                layout,
                ridge_offset: d2,
            },
            mu,
        })
    }

    fn smooth(&self, yj: f64) -> f64 {
        (yj * yj + self.mu * self.mu).sqrt()
    }
}

impl RoundFunctions for SmoothedElasticNetRound {
    fn dims(&self) -> (usize, usize) {
        let d2 = self.core.d2();
        (d2 + self.core.layout.len(d2), d2)
    }
    fn f(&self, _x: &Vector, y: &Vector) -> f64 {
        self.core.f(y)
    }
    fn grad_x_f(&self, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(self.dims().0)
    }
    fn grad_y_f(&self, _x: &Vector, y: &Vector) -> Vector {
        self.core.grad_y_f(y)
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        let l1: f64 = (0..self.core.d2()).map(|j| x[j].exp() * self.smooth(y[j])).sum();
        self.core.g(x, y) + l1
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        let mut grad = self.core.grad_y_g(x, y);
        for j in 0..self.core.d2() {
            grad[j] += x[j].exp() * y[j] / self.smooth(y[j]);
        }
        grad
    }
    fn jac_xy_g(&self, x: &Vector, y: &Vector) -> Matrix {
        let (d1, d2) = self.dims();
        let mut jac = Matrix::zeros(d1, d2);
        for j in 0..d2 {
            jac[(j, j)] = x[j].exp() * y[j] / self.smooth(y[j]);
        }
        self.core.add_jac_xy(x, y, &mut jac);
        jac
    }
    fn hess_yy_g(&self, x: &Vector, y: &Vector) -> Matrix {
        let mut h = self.core.hess_yy_g(x);
        let mu2 = self.mu * self.mu;
        for j in 0..self.core.d2() {
            h[(j, j)] += x[j].exp() * mu2 / self.smooth(y[j]).powi(3);
        }
        h
    }
}

fn bind_rounds(
    train: &[Sample],
    val: &[Sample],
    horizon: usize,
    mut make: impl FnMut(&Sample, &Sample) -> Result<SharedRound>,
) -> Result<Stream> {
    let available = train.len().min(val.len());
    if available < horizon {
        return Err(Error::StreamExhausted {
            t: available + 1,
            len: available,
        });
    }
    let rounds = train
        .iter()
        .zip(val)
        .take(horizon)
        .map(|(tr, va)| make(tr, va))
        .collect::<Result<Vec<_>>>()?;
    Ok(Stream::new(rounds))
}

/// Round `t` pairs training sample `t` (inner) with validation sample `t` (outer).
pub fn ho_stream_from_samples(train: &[Sample], val: &[Sample], d1: usize, horizon: usize) -> Result<Stream> {
    bind_rounds(train, val, horizon, |tr, va| {
        Ok(Arc::new(HORegressionRound::new(tr.clone(), va.clone(), d1)?) as SharedRound)
    })
}

pub fn ho_stream(table: &SampleTable, d1: usize, horizon: usize) -> Result<Stream> {
    ho_stream_from_samples(table.train(), table.validation(), d1, horizon)
}

pub fn elastic_net_stream_from_samples(
    train: &[Sample],
    val: &[Sample],
    d1: usize,
    mu: f64,
    horizon: usize,
) -> Result<Stream> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing parameter must be > 0, got {mu}"
        )));
    }
    bind_rounds(train, val, horizon, |tr, va| {
        Ok(Arc::new(SmoothedElasticNetRound::new(tr.clone(), va.clone(), d1, mu)?) as SharedRound)
    })
}

pub fn elastic_net_stream(table: &SampleTable, d1: usize, mu: f64, horizon: usize) -> Result<Stream> {
    elastic_net_stream_from_samples(table.train(), table.validation(), d1, mu, horizon)
}

/// Mean of `(aᵀy − b)²` over `samples`.
pub fn mean_squared_error(samples: &[Sample], y: &Vector) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().map(|s| (s.a.dot(y) - s.b).powi(2)).sum::<f64>() / samples.len() as f64
}
