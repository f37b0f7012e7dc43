//! Comparator oracles and regret metrics over a finished trace.

use crate::error::{Error, Result};
use crate::hypergrad::{hypergradient, windowed_hypergradient_shared_inner, WeightWindow};
use crate::linalg::{Cholesky, Vector};
use crate::driver::Trace;
use crate::par::{self, Execution};
use crate::round::{RoundFunctions, SharedRound, Stream};
use crate::set::FeasibleSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Stop the inner solve once `‖∇_y g‖ <= inner_tol`.
    pub inner_tol: f64,
    /// Projected-gradient residual tolerance, relative to `1 + ‖x‖`.
    pub outer_tol: f64,
    pub inner_max_iters: usize,
    pub outer_max_iters: usize,
    /// When false, rounds without closed forms fail with `OracleUnavailable`.
    pub allow_numerical: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            inner_tol: 1e-12,
            outer_tol: 1e-10,
            inner_max_iters: 1_000_000,
            outer_max_iters: 100_000,
            allow_numerical: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    ClosedForm,
    Numerical { tol: f64 },
}

/// `y*(x) = argmin_y g(x, y)`.
pub fn inner_oracle(round: &dyn RoundFunctions, x: &Vector, opts: &OracleOptions) -> Result<Vector> {
    if let Some(y) = round.closed_form_y_star(x) {
        return Ok(y);
    }
    let (_, d2) = round.dims();
    inner_oracle_from(round, x, Vector::zeros(d2), opts)
}

/// Damped Newton on `g(x, ·)` from `y` with Armijo backtracking on `g`. Once
/// `g` stops resolving the decrease, a full step is still taken if it shrinks
/// the gradient.
pub fn inner_oracle_from(
    round: &dyn RoundFunctions,
    x: &Vector,
    mut y: Vector,
    opts: &OracleOptions,
) -> Result<Vector> {
    if !opts.allow_numerical {
        return Err(Error::OracleUnavailable { round: 0 });
    }
    let mut grad = round.grad_y_g(x, &y);
    let mut norm = grad.norm();
    for _ in 0..opts.inner_max_iters {
        if norm <= opts.inner_tol || !norm.is_finite() {
            break;
        }
        let dir = Cholesky::factor(&round.hess_yy_g(x, &y))?.solve(&grad);
        let g0 = round.g(x, &y);
        let slope = grad.dot(&dir);
        let mut s = 1.0;
        let mut accepted = None;
        // below this the Armijo test compares values `g` cannot tell apart
        let resolvable = 1e-4 * slope > 8.0 * f64::EPSILON * g0.abs().max(f64::MIN_POSITIVE);
        while resolvable && s >= 1e-12 {
            let cand = &y - &dir * s;
            if round.g(x, &cand) <= g0 - 1e-4 * s * slope {
                accepted = Some(cand);
                break;
            }
            s *= 0.5;
        }
        let next = match accepted {
            Some(cand) => cand,
            None => {
                let full = &y - &dir;
                if round.grad_y_g(x, &full).norm() >= norm {
                    // stalled at the floating-point floor
                    break;
                }
                full
            }
        };
        y = next;
        grad = round.grad_y_g(x, &y);
        norm = grad.norm();
    }
    if norm <= opts.inner_tol {
        return Ok(y);
    }
    Err(Error::OracleDiverged {
        oracle: "inner",
        iters: opts.inner_max_iters,
        residual: norm,
    })
}

/// Outer solution, flagged when the composed objective is not known to be convex.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterSolution {
    pub x: Vector,
    pub local_only: bool,
    pub provenance: Provenance,
}

/// `x* = argmin_{x ∈ X} f(x, y*(x))`.
pub fn outer_oracle(round: &dyn RoundFunctions, set: &FeasibleSet, opts: &OracleOptions) -> Result<OuterSolution> {
    if let Some(x) = round.closed_form_x_star(set) {
        return Ok(OuterSolution {
            x,
            local_only: false,
            provenance: Provenance::ClosedForm,
        });
    }
    if !opts.allow_numerical {
        return Err(Error::OracleUnavailable { round: 0 });
    }
    let x0 = set.project(&Vector::zeros(set.dim()));
    let x = projected_descent(&[round], set, x0, opts, Execution::Sequential)?;
    Ok(OuterSolution {
        x,
        local_only: !round.composed_convex(),
        provenance: Provenance::Numerical { tol: opts.outer_tol },
    })
}

/// Static comparator for the averaged objective `(1/n) Σ f_t(x, y*_t(x))`.
pub fn static_outer_oracle(
    rounds: &[SharedRound],
    set: &FeasibleSet,
    opts: &OracleOptions,
    exec: Execution,
) -> Result<OuterSolution> {
    if rounds.is_empty() {
        return Err(Error::InvalidParameter("static comparator needs at least one round".into()));
    }
    let closed: Option<Vec<Vector>> = rounds.iter().map(|r| r.closed_form_x_star(set)).collect();
    let x0 = match closed {
        Some(xs) => {
            let mut mean = Vector::zeros(set.dim());
            for x in &xs {
                mean += x;
            }
            set.project(&(mean / xs.len() as f64))
        }
        None => set.project(&Vector::zeros(set.dim())),
    };
    let refs: Vec<&dyn RoundFunctions> = rounds.iter().map(|r| r.as_ref()).collect();
    let x = projected_descent(&refs, set, x0, opts, exec)?;
    Ok(OuterSolution {
        x,
        local_only: !rounds.iter().all(|r| r.composed_convex()),
        provenance: Provenance::Numerical { tol: opts.outer_tol },
    })
}

/// Value and exact hypergradient of the averaged composed objective.
fn composed(rounds: &[&dyn RoundFunctions], x: &Vector, opts: &OracleOptions, exec: Execution) -> Result<(f64, Vector)> {
    let parts = par::try_map(exec, rounds.len(), |i| {
        let r = rounds[i];
        let y = inner_oracle(r, x, opts)?;
        Ok((r.f(x, &y), hypergradient(r, x, &y)?))
    })?;
    let n = rounds.len() as f64;
    let mut value = 0.0;
    let mut grad = Vector::zeros(x.len());
    for (v, g) in parts {
        value += v;
        grad += g;
    }
    Ok((value / n, grad / n))
}

fn projected_descent(
    rounds: &[&dyn RoundFunctions],
    set: &FeasibleSet,
    mut x: Vector,
    opts: &OracleOptions,
    exec: Execution,
) -> Result<Vector> {
    let (mut value, mut grad) = composed(rounds, &x, opts, exec)?;
    let mut step = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.outer_max_iters {
        residual = (&x - set.project(&(&x - &grad))).norm();
        if residual <= opts.outer_tol * (1.0 + x.norm()) {
            return Ok(x);
        }
        loop {
            let cand = set.project(&(&x - &grad * step));
            let delta = &cand - &x;
            let (cv, cg) = composed(rounds, &cand, opts, exec)?;
            let model = value + grad.dot(&delta) + delta.norm_squared() / (2.0 * step);
            let slack = 10.0 * f64::EPSILON * value.abs().max(1.0);
            if cv <= model + slack {
                // Barzilai-Borwein guess for the next trial step
                let dg = &cg - &grad;
                let curv = delta.dot(&dg);
                step = if curv > 0.0 {
                    (delta.norm_squared() / curv).clamp(1e-12, 1e12)
                } else {
                    step * 2.0
                };
                x = cand;
                value = cv;
                grad = cg;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::OracleDiverged {
                    oracle: "outer",
                    iters: 0,
                    residual,
                });
            }
        }
    }
    Err(Error::OracleDiverged {
        oracle: "outer",
        iters: opts.outer_max_iters,
        residual,
    })
}

/// Per-round optima `x*_t`, `y*_t(x*_t)`, `f*_t` and `‖∇f_t(x*_t, y*_t(x*_t))‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSeries {
    pub x_star: Vec<Vector>,
    pub y_star: Vec<Vector>,
    pub f_star: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub provenance: Vec<Provenance>,
    pub local_only: bool,
}

impl ComparatorSeries {
    pub fn len(&self) -> usize {
        self.x_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_star.is_empty()
    }

    /// Series from explicit comparator points (values and norms are left at zero).
    pub fn from_points(x_star: Vec<Vector>, y_star: Vec<Vector>) -> Self {
        let n = x_star.len();
        ComparatorSeries {
            x_star,
            y_star,
            f_star: vec![0.0; n],
            grad_norm: vec![0.0; n],
            provenance: vec![Provenance::ClosedForm; n],
            local_only: false,
        }
    }
}

pub fn comparators(
    rounds: &[SharedRound],
    set: &FeasibleSet,
    opts: &OracleOptions,
    exec: Execution,
) -> Result<ComparatorSeries> {
    let per = par::try_map(exec, rounds.len(), |i| {
        let r = rounds[i].as_ref();
        let wrap = |e: Error| e.at_round(i + 1);
        let outer = outer_oracle(r, set, opts).map_err(wrap)?;
        let y = inner_oracle(r, &outer.x, opts).map_err(wrap)?;
        let f = r.f(&outer.x, &y);
        let gn = hypergradient(r, &outer.x, &y).map_err(wrap)?.norm();
        Ok((outer, y, f, gn))
    })?;
    let mut series = ComparatorSeries {
        x_star: Vec::with_capacity(per.len()),
        y_star: Vec::with_capacity(per.len()),
        f_star: Vec::with_capacity(per.len()),
        grad_norm: Vec::with_capacity(per.len()),
        provenance: Vec::with_capacity(per.len()),
        local_only: false,
    };
    for (outer, y, f, gn) in per {
        series.local_only |= outer.local_only;
        series.x_star.push(outer.x);
        series.provenance.push(outer.provenance);
        series.y_star.push(y);
        series.f_star.push(f);
        series.grad_norm.push(gn);
    }
    Ok(series)
}

fn consecutive_sum(points: &[Vector], p: u32) -> f64 {
    points.windows(2).map(|w| (&w[0] - &w[1]).norm().powi(p as i32)).sum()
}

/// `(P_{p,T}, Y_{p,T}, Ȳ_{p,T})`. `static_inner` holds `y*_t(x*)` for the fixed
/// static comparator; when absent `Ȳ` is zero.
pub fn path_lengths(series: &ComparatorSeries, static_inner: Option<&[Vector]>, p: u32) -> (f64, f64, f64) {
    (
        consecutive_sum(&series.x_star, p),
        consecutive_sum(&series.y_star, p),
        static_inner.map_or(0.0, |ys| consecutive_sum(ys, p)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub oracle: OracleOptions,
    /// Per-round comparators, dynamic regret and path lengths. Skipping them
    /// leaves those series empty.
    pub compute_dynamic: bool,
    pub compute_static: bool,
    pub compute_local: bool,
    pub compute_h: bool,
    /// Quasi-random points for the `H_T` supremum (box corners are added when `d1 <= 10`).
    pub h_samples: usize,
    pub exec: Execution,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            oracle: OracleOptions::default(),
            compute_dynamic: true,
            compute_static: true,
            compute_local: true,
            compute_h: true,
            h_samples: 128,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub bd_regret: Vec<f64>,
    pub bs_regret: Option<Vec<f64>>,
    pub bl_regret: Option<Vec<f64>>,
    pub p1: f64,
    pub p2: f64,
    pub y1: f64,
    pub y2: f64,
    pub ybar1: f64,
    pub ybar2: f64,
    /// Cumulative `‖x*_{t-1} - x*_t‖²` and `‖y*_{t-1} - y*_t‖²` per round.
    pub p2_cum: Vec<f64>,
    pub y2_cum: Vec<f64>,
    /// Sampled lower bound on `H_T`.
    pub h_t: Option<f64>,
    pub h_samples: usize,
    pub comparator_grad_sum: f64,
    pub f_star_sum: f64,
    pub static_x: Option<Vector>,
    pub comparators: ComparatorSeries,
    pub local_only: bool,
}

impl RegretReport {
    pub fn bd_total(&self) -> f64 {
        self.bd_regret.last().copied().unwrap_or(0.0)
    }

    pub fn bs_total(&self) -> Option<f64> {
        self.bs_regret.as_ref().and_then(|s| s.last().copied())
    }

    pub fn bl_total(&self) -> Option<f64> {
        self.bl_regret.as_ref().and_then(|s| s.last().copied())
    }
}

fn cumsum(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn consecutive_cum(points: &[Vector]) -> Vec<f64> {
    cumsum((0..points.len()).map(|i| if i == 0 { 0.0 } else { (&points[i - 1] - &points[i]).norm_squared() }))
}

pub fn compute_report(
    trace: &Trace,
    stream: &Stream,
    set: &FeasibleSet,
    window: &WeightWindow,
    opts: &ReportOptions,
) -> Result<RegretReport> {
    let n = trace.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    let rounds = &stream.prefix(n)?.rounds().to_vec();
    let exec = opts.exec;
    let oracle = &opts.oracle;

    let comps = if opts.compute_dynamic {
        comparators(rounds, set, oracle, exec)?
    } else {
        ComparatorSeries::from_points(Vec::new(), Vec::new())
    };
    let bd_regret = cumsum(trace.records.iter().zip(&comps.f_star).map(|(r, f)| r.f_value - f));
    let (p1, y1, _) = path_lengths(&comps, None, 1);
    let (p2, y2, _) = path_lengths(&comps, None, 2);
    let mut local_only = comps.local_only;

    let (mut bs_regret, mut static_x, mut ybar1, mut ybar2) = (None, None, 0.0, 0.0);
    if opts.compute_static {
        let st = static_outer_oracle(rounds, set, oracle, exec)?;
        local_only |= st.local_only;
        let per = par::try_map(exec, n, |i| {
            let r = rounds[i].as_ref();
            let y = inner_oracle(r, &st.x, oracle).map_err(|e| e.at_round(i + 1))?;
            Ok((r.f(&st.x, &y), y))
        })?;
        let ys: Vec<Vector> = per.iter().map(|(_, y)| y.clone()).collect();
        (_, _, ybar1) = path_lengths(&comps, Some(&ys), 1);
        (_, _, ybar2) = path_lengths(&comps, Some(&ys), 2);
        bs_regret = Some(cumsum(trace.records.iter().zip(&per).map(|(r, (f, _))| r.f_value - f)));
        static_x = Some(st.x);
    }

    let bl_regret = if opts.compute_local {
        let terms = par::try_map(exec, n, |i| {
            let x = &trace.records[i].x;
            let inner = rounds[i].as_ref();
            let y = inner_oracle(inner, x, oracle).map_err(|e| e.at_round(i + 1))?;
            let outers: Vec<SharedRound> = (0..window.len().min(i + 1)).map(|lag| rounds[i - lag].clone()).collect();
            let g = windowed_hypergradient_shared_inner(&outers, inner, window, x, &y).map_err(|e| e.at_round(i + 1))?;
            Ok(g.norm_squared())
        })?;
        Some(cumsum(terms))
    } else {
        None
    };

    let h_t = if opts.compute_h {
        let xs: Vec<Vector> = trace.records.iter().map(|r| r.x.clone()).collect();
        let cloud = sample_cloud(set, &xs, opts.h_samples);
        Some(sampled_h(rounds, &cloud, oracle, exec)?)
    } else {
        None
    };

    Ok(RegretReport {
        bd_regret,
        bs_regret,
        bl_regret,
        p1,
        p2,
        y1,
        y2,
        ybar1,
        ybar2,
        p2_cum: consecutive_cum(&comps.x_star),
        y2_cum: consecutive_cum(&comps.y_star),
        h_t,
        h_samples: if opts.compute_h { opts.h_samples } else { 0 },
        comparator_grad_sum: comps.grad_norm.iter().sum(),
        f_star_sum: comps.f_star.iter().sum(),
        static_x,
        comparators: comps,
        local_only,
    })
}

/// `Σ_{t>=2} max_{x in cloud} ‖y*_{t-1}(x) - y*_t(x)‖²`.
pub fn sampled_h(rounds: &[SharedRound], cloud: &[Vector], opts: &OracleOptions, exec: Execution) -> Result<f64> {
    if rounds.len() < 2 || cloud.is_empty() {
        return Ok(0.0);
    }
    let per = par::try_map(exec, rounds.len() - 1, |i| {
        let (a, b) = (rounds[i].as_ref(), rounds[i + 1].as_ref());
        let mut best: f64 = 0.0;
        for x in cloud {
            let ya = inner_oracle(a, x, opts).map_err(|e| e.at_round(i + 1))?;
            let yb = inner_oracle(b, x, opts).map_err(|e| e.at_round(i + 2))?;
            best = best.max((ya - yb).norm_squared());
        }
        Ok(best)
    })?;
    Ok(per.iter().sum())
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn primes(n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Halton points in `[lo, hi]` (per coordinate), plus the corners when `d <= 10`.
pub fn halton_box(lo: &[f64], hi: &[f64], count: usize) -> Vec<Vector> {
    let d = lo.len();
    let bases = primes(d);
    let mut pts: Vec<Vector> = (1..=count)
        .map(|i| Vector::from_fn(d, |j, _| lo[j] + radical_inverse(i, bases[j]) * (hi[j] - lo[j])))
        .collect();
    if d <= 10 {
        for mask in 0..(1usize << d) {
            pts.push(Vector::from_fn(d, |j, _| if mask >> j & 1 == 1 { hi[j] } else { lo[j] }));
        }
    }
    pts
}

/// Sample cloud over `X`. Unbounded sets use the bounding box of `visited`
/// widened by one in every direction.
pub fn sample_cloud(set: &FeasibleSet, visited: &[Vector], count: usize) -> Vec<Vector> {
    let d = set.dim();
    match set {
        FeasibleSet::Box { lower, upper } => halton_box(lower.as_slice(), upper.as_slice(), count),
        FeasibleSet::Ball { center, radius } => {
            let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
            halton_box(&lo, &hi, count).iter().map(|x| set.project(x)).collect()
        }
        FeasibleSet::Unbounded { .. } => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for x in visited {
                for j in 0..d {
                    lo[j] = lo[j].min(x[j]);
                    hi[j] = hi[j].max(x[j]);
                }
            }
            if visited.is_empty() {
                lo = vec![0.0; d];
                hi = vec![0.0; d];
            }
            let lo: Vec<f64> = lo.iter().map(|v| v - 1.0).collect();
            let hi: Vec<f64> = hi.iter().map(|v| v + 1.0).collect();
            halton_box(&lo, &hi, count)
        }
    }
}
