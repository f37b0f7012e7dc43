//! The online alternating driver: inner gradient steps for the follower,
//! then a projected time-averaged hypergradient step for the leader. Also the
//! full-information baseline that replays the previous round's optimum.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::constants::{DerivedConstants, ProblemConstants};
use crate::error::{Error, Result};
use crate::hypergrad::{windowed_hypergradient, HypergradientHistory, WeightWindow};
use crate::inner::{inner_gd, InnerSchedule};
use crate::linalg::Vector;
use crate::par::Execution;
use crate::regret::{inner_oracle, outer_oracle, OracleOptions};
use crate::round::{DecisionPair, Stream};
use crate::set::FeasibleSet;

/// Outer step sizes `α_t`.
#[derive(Clone)]
pub enum StepSizeSchedule {
    Constant(f64),
    /// `α_t = 2/(μ_f t)`.
    StronglyConvexStatic { mu_f: f64 },
    /// `α_t = D/(ℓ_{f,0} √t)`.
    ConvexStatic { diameter: f64, ell_f0: f64 },
    /// Constant `α <= 1/(3 L_f)`.
    Nonconvex { alpha: f64 },
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for StepSizeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSizeSchedule::Constant(a) => write!(f, "Constant({a})"),
            StepSizeSchedule::StronglyConvexStatic { mu_f } => {
                write!(f, "StronglyConvexStatic {{ mu_f: {mu_f} }}")
            }
            StepSizeSchedule::ConvexStatic { diameter, ell_f0 } => {
                write!(f, "ConvexStatic {{ diameter: {diameter}, ell_f0: {ell_f0} }}")
            }
            StepSizeSchedule::Nonconvex { alpha } => write!(f, "Nonconvex {{ alpha: {alpha} }}"),
            StepSizeSchedule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The constant `c = μ_f² / (2(L_f² + L_y²))` of the strongly convex dynamic schedule.
pub fn strongly_convex_c(mu_f: f64, derived: &DerivedConstants) -> f64 {
    mu_f * mu_f / (2.0 * (derived.l_f.powi(2) + derived.l_y.powi(2)))
}

impl StepSizeSchedule {
    /// `α = 4c/μ_f`; returns the schedule and `c` (which the inner rule also needs).
    pub fn strongly_convex_dynamic(constants: &ProblemConstants, derived: &DerivedConstants) -> Result<(Self, f64)> {
        let mu_f = constants.mu_f_required()?;
        let c = strongly_convex_c(mu_f, derived);
        Ok((StepSizeSchedule::Constant(4.0 * c / mu_f), c))
    }

    pub fn strongly_convex_static(constants: &ProblemConstants) -> Result<Self> {
        Ok(StepSizeSchedule::StronglyConvexStatic {
            mu_f: constants.mu_f_required()?,
        })
    }

    pub fn convex_static(constants: &ProblemConstants, set: &FeasibleSet) -> Result<Self> {
        let diameter = set.diameter();
        if !diameter.is_finite() || !(constants.ell_f0 > 0.0) {
            return Err(Error::InvalidParameter(
                "convex static step needs a bounded set and ell_f0 > 0".into(),
            ));
        }
        Ok(StepSizeSchedule::ConvexStatic {
            diameter,
            ell_f0: constants.ell_f0,
        })
    }

    /// `α = 1/(3 L_f)`.
    pub fn nonconvex(derived: &DerivedConstants) -> Self {
        StepSizeSchedule::Nonconvex {
            alpha: 1.0 / (3.0 * derived.l_f),
        }
    }

    pub fn alpha_at(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self {
            StepSizeSchedule::Constant(a) => *a,
            StepSizeSchedule::StronglyConvexStatic { mu_f } => 2.0 / (mu_f * tf),
            StepSizeSchedule::ConvexStatic { diameter, ell_f0 } => diameter / (ell_f0 * tf.sqrt()),
            StepSizeSchedule::Nonconvex { alpha } => *alpha,
            StepSizeSchedule::Custom(f) => f(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            // zero is accepted as a frozen-leader schedule
            StepSizeSchedule::Constant(a) => *a >= 0.0 && a.is_finite(),
            StepSizeSchedule::StronglyConvexStatic { mu_f } => *mu_f > 0.0,
            StepSizeSchedule::ConvexStatic { diameter, ell_f0 } => {
                *diameter > 0.0 && diameter.is_finite() && *ell_f0 > 0.0
            }
            StepSizeSchedule::Nonconvex { alpha } => *alpha > 0.0 && alpha.is_finite(),
            StepSizeSchedule::Custom(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid step-size schedule {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSizeSchedule::Constant(_) => "constant",
            StepSizeSchedule::StronglyConvexStatic { .. } => "strongly_convex_static",
            StepSizeSchedule::ConvexStatic { .. } => "convex_static",
            StepSizeSchedule::Nonconvex { .. } => "nonconvex",
            StepSizeSchedule::Custom(_) => "custom",
        }
    }
}

/// One played round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// Played leader decision `x_t`.
    pub x: Vector,
    /// Played follower decision `y_t` (before the inner update).
    pub y: Vector,
    /// `y_{t+1}`.
    pub y_after_inner: Vector,
    pub hypergrad: Vector,
    pub alpha: f64,
    pub beta: f64,
    /// Inner iterations; `None` when an exact oracle replaced the inner loop.
    pub k: Option<usize>,
    pub k_capped: bool,
    /// `f_t(x_t, y_t)`.
    pub f_value: f64,
    /// `‖∇_y g_t(x_t, y_{t+1})‖`.
    pub inner_residual: f64,
    pub wall_nanos: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Oagd,
    FullInformation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: TraceKind,
    pub records: Vec<RoundRecord>,
    /// `x_{T+1}, y_{T+1}`.
    pub next: DecisionPair,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn played_x(&self) -> Vec<Vector> {
        self.records.iter().map(|r| r.x.clone()).collect()
    }

    /// Same trace with timing zeroed, for bitwise comparisons.
    pub fn without_timing(&self) -> Trace {
        let mut t = self.clone();
        for r in &mut t.records {
            r.wall_nanos = 0;
        }
        t
    }

    /// Leader decision following round `t` (1-based).
    pub fn x_after(&self, t: usize) -> &Vector {
        if t < self.records.len() {
            &self.records[t].x
        } else {
            &self.next.x
        }
    }
}

/// Algorithm settings shared by every run.
#[derive(Debug, Clone)]
pub struct Oagd {
    pub set: FeasibleSet,
    pub window: WeightWindow,
    pub steps: StepSizeSchedule,
    pub inner: InnerSchedule,
    pub exec: Execution,
}

fn check_start(stream: &Stream, init: &DecisionPair, set: &FeasibleSet, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if init.x.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial x",
            expected: set.dim(),
            got: init.x.len(),
        });
    }
    if !set.contains(&init.x) {
        return Err(Error::InvalidParameter("initial x lies outside the feasible set".into()));
    }
    if let Some((d1, d2)) = stream.dims() {
        if d1 != init.x.len() {
            return Err(Error::DimensionMismatch {
                what: "stream outer dimension",
                expected: init.x.len(),
                got: d1,
            });
        }
        if d2 != init.y.len() {
            return Err(Error::DimensionMismatch {
                what: "stream inner dimension",
                expected: init.y.len(),
                got: d2,
            });
        }
    }
    if stream.len() < horizon {
        return Err(Error::StreamExhausted {
            t: stream.len() + 1,
            len: stream.len(),
        });
    }
    Ok(())
}

impl Oagd {
    pub fn run(&self, stream: &Stream, init: &DecisionPair, horizon: usize) -> Result<Trace> {
        check_start(stream, init, &self.set, horizon)?;
        self.steps.validate()?;
        self.inner.validate()?;
        let mut history = HypergradientHistory::new(self.window.len());
        let mut x = init.x.clone();
        let mut y = init.y.clone();
        let mut records = Vec::with_capacity(horizon);
        let mut warnings = Vec::new();
        for t in 1..=horizon {
            let start = Instant::now();
            let round = stream.round(t)?.clone();
            let f_value = round.f(&x, &y);

            let k = self.inner.k_at(t)?;
            if k.capped && warnings.len() < 16 {
                warnings.push(format!("round {t}: inner iterations capped at k_max = {}", k.k));
            }
            let y_next = inner_gd(round.as_ref(), &x, &y, self.inner.beta, k.k).map_err(|e| e.at_round(t))?;
            let inner_residual = round.grad_y_g(&x, &y_next).norm();

            history.push(t, round)?;
            let hypergrad = windowed_hypergradient(&history, &self.window, &x, &y_next, self.exec)?;
            let alpha = self.steps.alpha_at(t);
            if !(alpha >= 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidParameter(format!("step size at round {t} is {alpha}")));
            }
            let x_next = self.set.project(&(&x - &hypergrad * alpha));
            if x_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIterate { round: t, step: 0 });
            }

            records.push(RoundRecord {
                t,
                x: std::mem::replace(&mut x, x_next),
                y: std::mem::replace(&mut y, y_next.clone()),
                y_after_inner: y_next,
                hypergrad,
                alpha,
                beta: self.inner.beta,
                k: Some(k.k),
                k_capped: k.capped,
                f_value,
                inner_residual,
                wall_nanos: start.elapsed().as_nanos() as u64,
            });
        }
        Ok(Trace {
            kind: TraceKind::Oagd,
            records,
            next: DecisionPair { x, y },
            warnings,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn oagd_run(
    stream: &Stream,
    init: &DecisionPair,
    set: &FeasibleSet,
    window: &WeightWindow,
    steps: &StepSizeSchedule,
    inner: &InnerSchedule,
    horizon: usize,
) -> Result<Trace> {
    Oagd {
        set: set.clone(),
        window: window.clone(),
        steps: steps.clone(),
        inner: inner.clone(),
        exec: Execution::default(),
    }
    .run(stream, init, horizon)
}

/// Play `(x_t, y_t)`, then move to round `t`'s bilevel optimum
/// `x_{t+1} = x*_t`, `y_{t+1} = y*_t(x*_t)`.
pub fn full_info_run(
    stream: &Stream,
    init: &DecisionPair,
    set: &FeasibleSet,
    horizon: usize,
    oracle: &OracleOptions,
) -> Result<Trace> {
    check_start(stream, init, set, horizon)?;
    let mut x = init.x.clone();
    let mut y = init.y.clone();
    let mut records = Vec::with_capacity(horizon);
    let mut warnings = Vec::new();
    for t in 1..=horizon {
        let start = Instant::now();
        let round = stream.round(t)?;
        let f_value = round.f(&x, &y);
        let outer = outer_oracle(round.as_ref(), set, oracle).map_err(|e| e.at_round(t))?;
        if outer.local_only && warnings.len() < 16 {
            warnings.push(format!("round {t}: comparator is a local solution"));
        }
        let y_next = inner_oracle(round.as_ref(), &outer.x, oracle).map_err(|e| e.at_round(t))?;
        let inner_residual = round.grad_y_g(&x, &y_next).norm();
        records.push(RoundRecord {
            t,
            x: std::mem::replace(&mut x, outer.x),
            y: std::mem::replace(&mut y, y_next.clone()),
            y_after_inner: y_next,
            hypergrad: Vector::zeros(set.dim()),
            alpha: 0.0,
            beta: 0.0,
            k: None,
            k_capped: false,
            f_value,
            inner_residual,
            wall_nanos: start.elapsed().as_nanos() as u64,
        });
    }
    Ok(Trace {
        kind: TraceKind::FullInformation,
        records,
        next: DecisionPair { x, y },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergrad::WeightKind;
    use crate::problems::quadratic::{quadratic_stream, CoefficientRule};

    fn interval() -> FeasibleSet {
        FeasibleSet::cube(1, -1.0, 1.0).unwrap()
    }

    fn v(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn driver(alpha: f64, beta: f64, k: usize, w: usize) -> Oagd {
        Oagd {
            set: interval(),
            window: WeightWindow::new(WeightKind::Uniform, w).unwrap(),
            steps: StepSizeSchedule::Constant(alpha),
            inner: InnerSchedule::fixed(beta, k),
            exec: Execution::Sequential,
        }
    }

    fn stationary(horizon: usize) -> Stream {
        quadratic_stream(
            &CoefficientRule::Constant {
                a1: 0.2,
                a2: 0.5,
                a3: 0.0,
                a4: 0.0,
            },
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn single_round_by_hand() {
        let stream = quadratic_stream(&CoefficientRule::Constant { a1: 0.0, a2: 0.0, a3: 0.0, a4: 0.0 }, 1).unwrap();
        let init = DecisionPair::new(v(1.0), v(1.0)).unwrap();
        let trace = driver(0.1, 1.0, 1, 1).run(&stream, &init, 1).unwrap();
        let r = &trace.records[0];
        assert_eq!(r.y_after_inner[0], 1.0);
        assert!((r.hypergrad[0] - 2.0).abs() < 1e-15);
        assert!((trace.next.x[0] - 0.8).abs() < 1e-15);
        assert_eq!(r.f_value, 1.0);
    }

    #[test]
    fn stationary_stream_converges() {
        let stream = stationary(500);
        let init = DecisionPair::default_for(&interval(), 1);
        let trace = driver(0.2, 0.5, 5, 1).run(&stream, &init, 500).unwrap();
        assert!((trace.next.x[0] - 0.3).abs() < 1e-8, "{}", trace.next.x[0]);
        assert!((trace.next.y[0] - (0.3 - 0.5)).abs() < 1e-8);
    }

    #[test]
    fn frozen_leader() {
        let stream = stationary(60);
        let init = DecisionPair::new(v(0.7), v(3.0)).unwrap();
        let trace = driver(0.0, 0.5, 2, 3).run(&stream, &init, 60).unwrap();
        assert!(trace.records.iter().all(|r| r.x[0] == 0.7));
        assert!((trace.next.y[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn trace_is_ordered_feasible_and_replayable() {
        let stream = quadratic_stream(&CoefficientRule::AltSqrt { outer_tracks_inner: true }, 200).unwrap();
        let oagd = driver(1.5, 0.7, 3, 10);
        let init = DecisionPair::new(v(-0.4), v(0.0)).unwrap();
        let trace = oagd.run(&stream, &init, 200).unwrap();
        for (i, r) in trace.records.iter().enumerate() {
            assert_eq!(r.t, i + 1);
            assert!(oagd.set.contains(&r.x));
            let replay = oagd.set.project(&(&r.x - &r.hypergrad * r.alpha));
            assert_eq!(&replay, trace.x_after(r.t));
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let stream = quadratic_stream(&CoefficientRule::AltSqrt { outer_tracks_inner: false }, 100).unwrap();
        let init = DecisionPair::default_for(&interval(), 1);
        let mut a = driver(0.3, 0.5, 2, 7);
        let first = a.run(&stream, &init, 100).unwrap().without_timing();
        a.exec = Execution::Parallel;
        let second = a.run(&stream, &init, 100).unwrap().without_timing();
        assert_eq!(first, second);
    }

    #[test]
    fn short_stream_and_bad_start_are_rejected() {
        let stream = stationary(3);
        let init = DecisionPair::default_for(&interval(), 1);
        assert_eq!(
            driver(0.1, 0.5, 1, 1).run(&stream, &init, 4).unwrap_err(),
            Error::StreamExhausted { t: 4, len: 3 }
        );
        let outside = DecisionPair::new(v(2.0), v(0.0)).unwrap();
        assert!(matches!(
            driver(0.1, 0.5, 1, 1).run(&stream, &outside, 2),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn schedules() {
        let s = StepSizeSchedule::StronglyConvexStatic { mu_f: 2.0 };
        assert_eq!(s.alpha_at(1), 1.0);
        assert!(s.alpha_at(5) < s.alpha_at(4));
        let c = StepSizeSchedule::ConvexStatic { diameter: 2.0, ell_f0: 4.0 };
        assert_eq!(c.alpha_at(4), 0.25);
        let derived = DerivedConstants {
            kappa_g: 1.0,
            l_y: 1.0,
            m_f: 2.0,
            l_f: 4.0,
        };
        assert_eq!(StepSizeSchedule::nonconvex(&derived).alpha_at(9), 1.0 / 12.0);
        assert!(StepSizeSchedule::Constant(-1.0).validate().is_err());
    }

    #[test]
    fn full_information_on_stationary_stream() {
        let stream = stationary(5);
        let init = DecisionPair::new(v(-1.0), v(1.0)).unwrap();
        let trace = full_info_run(&stream, &init, &interval(), 5, &OracleOptions::default()).unwrap();
        let opt = 0.5 * 0.7f64.powi(2) + 0.5 * 0.7f64.powi(2);
        for r in &trace.records[1..] {
            assert!((r.x[0] - 0.3).abs() < 1e-15);
            assert!((r.y[0] + 0.2).abs() < 1e-15);
            assert!((r.f_value - opt).abs() < 1e-15);
            assert_eq!(r.k, None);
        }
        let one = full_info_run(&stream, &init, &interval(), 1, &OracleOptions::default()).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.records[0].f_value, stream.round(1).unwrap().f(&v(-1.0), &v(1.0)));
    }

    #[test]
    fn full_information_without_oracle() {
        use crate::problems::regression::HORegressionRound;
        use crate::dataset::Sample;
        let sample = Sample { a: Vector::from_vec(vec![1.0, 0.5]), b: 1.0 };
        let round = HORegressionRound::new(sample.clone(), sample, 1).unwrap();
        let stream = Stream::new(vec![Arc::new(round)]);
        let set = FeasibleSet::unbounded(1).unwrap();
        let init = DecisionPair::default_for(&set, 2);
        let opts = OracleOptions {
            allow_numerical: false,
            ..OracleOptions::default()
        };
        assert_eq!(
            full_info_run(&stream, &init, &set, 1, &opts).unwrap_err(),
            Error::OracleUnavailable { round: 1 }
        );
    }
}
