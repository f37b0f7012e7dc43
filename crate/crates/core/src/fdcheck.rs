//! Central finite-difference checks for the analytic derivatives a
//! [`RoundFunctions`] implementation supplies.

use crate::linalg::{Matrix, Vector};
use crate::round::RoundFunctions;

/// Worst relative error per derivative. Errors are `|analytic − numeric| / max(1, |numeric|)`
/// taken entrywise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FdReport {
    pub grad_x_f: f64,
    pub grad_y_f: f64,
    pub grad_y_g: f64,
    pub jac_xy_g: f64,
    pub hess_yy_g: f64,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        [self.grad_x_f, self.grad_y_f, self.grad_y_g, self.jac_xy_g, self.hess_yy_g]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn bump(v: &Vector, i: usize, h: f64) -> Vector {
    let mut out = v.clone();
    out[i] += h;
    out
}

fn central_scalar(f: impl Fn(&Vector) -> f64, at: &Vector, i: usize, h: f64) -> f64 {
    (f(&bump(at, i, h)) - f(&bump(at, i, -h))) / (2.0 * h)
}

fn central_vector(f: impl Fn(&Vector) -> Vector, at: &Vector, i: usize, h: f64) -> Vector {
    (f(&bump(at, i, h)) - f(&bump(at, i, -h))) / (2.0 * h)
}

/// Compare every supplied derivative of `round` at `(x, y)` with central differences of step `h`.
pub fn check_round(round: &dyn RoundFunctions, x: &Vector, y: &Vector, h: f64) -> FdReport {
    let (d1, d2) = (x.len(), y.len());
    let mut rep = FdReport::default();

    let gx = round.grad_x_f(x, y);
    for i in 0..d1 {
        let fd = central_scalar(|xx| round.f(xx, y), x, i, h);
        rep.grad_x_f = rep.grad_x_f.max(rel(gx[i], fd));
    }
    let gy = round.grad_y_f(x, y);
    let gg = round.grad_y_g(x, y);
    for j in 0..d2 {
        let fd = central_scalar(|yy| round.f(x, yy), y, j, h);
        rep.grad_y_f = rep.grad_y_f.max(rel(gy[j], fd));
        let fd = central_scalar(|yy| round.g(x, yy), y, j, h);
        rep.grad_y_g = rep.grad_y_g.max(rel(gg[j], fd));
    }

    let hess: Matrix = round.hess_yy_g(x, y);
    for j in 0..d2 {
        let col = central_vector(|yy| round.grad_y_g(x, yy), y, j, h);
        for k in 0..d2 {
            rep.hess_yy_g = rep.hess_yy_g.max(rel(hess[(k, j)], col[k]));
        }
    }
    let jac: Matrix = round.jac_xy_g(x, y);
    for i in 0..d1 {
        let row = central_vector(|xx| round.grad_y_g(xx, y), x, i, h);
        for k in 0..d2 {
            rep.jac_xy_g = rep.jac_xy_g.max(rel(jac[(i, k)], row[k]));
        }
    }
    rep
}
