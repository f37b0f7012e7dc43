//! The follower's update: a fixed number of gradient steps on `g_t(x_t, ·)`,
//! warm-started from the previous inner iterate, and the schedules that pick
//! the step size and iteration count.

use std::fmt;
use std::sync::Arc;

use crate::constants::{DerivedConstants, ProblemConstants};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::round::RoundFunctions;

pub const DEFAULT_K_MAX: usize = 10_000;

/// `K` plain gradient steps `z ← z − β ∇_y g(x, z)` from `y_init`, with `x` fixed.
pub fn inner_gd(round: &dyn RoundFunctions, x: &Vector, y_init: &Vector, beta: f64, k: usize) -> Result<Vector> {
    if k == 0 {
        return Err(Error::InvalidParameter("inner iteration count must be >= 1".into()));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("inner step size must be > 0, got {beta}")));
    }
    let mut z = y_init.clone();
    for step in 1..=k {
        let grad = round.grad_y_g(x, &z);
        z.axpy(-beta, &grad, 1.0);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate { round: 0, step });
        }
    }
    Ok(z)
}

/// `β = 2/(ℓ_{g,1} + μ_g)`.
pub fn contraction_beta(c: &ProblemConstants) -> f64 {
    2.0 / (c.ell_g1 + c.mu_g)
}

/// How many inner steps to run at round `t`.
#[derive(Clone)]
pub enum KRule {
    Fixed(usize),
    /// Constant `K` for strongly convex dynamic regret, parameter `c` of the outer step.
    StronglyConvex { c: f64 },
    /// Constant `K` for strongly convex static regret with `α_t = 2/(μ_f t)`.
    StronglyConvexStatic { mu_f: f64 },
    /// `⌈0.5(κ_g+1) ln(4t²)⌉`, i.e. `ρ_t = 1/(2t²)`.
    ConvexLogT,
    /// Constant `K` for local regret: `⌈0.5(κ_g+1) ln max(6c, W)⌉`.
    Nonconvex { c: f64, window_total: f64 },
    Custom(Arc<dyn Fn(usize) -> usize + Send + Sync>),
}

impl fmt::Debug for KRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KRule::Fixed(k) => write!(f, "Fixed({k})"),
            KRule::StronglyConvex { c } => write!(f, "StronglyConvex {{ c: {c} }}"),
            KRule::StronglyConvexStatic { mu_f } => write!(f, "StronglyConvexStatic {{ mu_f: {mu_f} }}"),
            KRule::ConvexLogT => write!(f, "ConvexLogT"),
            KRule::Nonconvex { c, window_total } => {
                write!(f, "Nonconvex {{ c: {c}, window_total: {window_total} }}")
            }
            KRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl KRule {
    /// The nonconvex rule with `c = 3(1 + L_y² M_f² α²)`.
    pub fn nonconvex(derived: &DerivedConstants, alpha: f64, window_total: f64) -> Self {
        let c = 3.0 * (1.0 + derived.l_y.powi(2) * derived.m_f.powi(2) * alpha * alpha);
        KRule::Nonconvex { c, window_total }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KRule::Fixed(_) => "fixed",
            KRule::StronglyConvex { .. } => "strongly_convex",
            KRule::StronglyConvexStatic { .. } => "strongly_convex_static",
            KRule::ConvexLogT => "convex_log_t",
            KRule::Nonconvex { .. } => "nonconvex",
            KRule::Custom(_) => "custom",
        }
    }
}

fn ceil_steps(kappa_g: f64, log_arg: f64) -> usize {
    let k = (0.5 * (kappa_g + 1.0) * log_arg.ln()).ceil();
    if k.is_finite() && k >= 1.0 {
        k as usize
    } else if k.is_nan() || k < 1.0 {
        1
    } else {
        usize::MAX
    }
}

/// Iteration count from the regime's ceiling formula (natural logs), at least 1.
pub fn k_for_round(rule: &KRule, constants: &DerivedConstants, t: usize) -> Result<usize> {
    if t == 0 {
        return Err(Error::InvalidParameter("round indices start at 1".into()));
    }
    let kappa = constants.kappa_g;
    let k = match rule {
        KRule::Fixed(k) => *k,
        KRule::StronglyConvex { c } => {
            check_positive("c", *c)?;
            ceil_steps(kappa, 12.0 * constants.m_f.powi(2) * (1.0 + 1.0 / c) + 2.0)
        }
        KRule::StronglyConvexStatic { mu_f } => {
            check_positive("mu_f", *mu_f)?;
            ceil_steps(kappa, 72.0 * constants.l_y.powi(2) * constants.m_f.powi(2) / mu_f + mu_f / 2.0)
        }
        KRule::ConvexLogT => {
            let t = t as f64;
            ceil_steps(kappa, 4.0 * t * t)
        }
        KRule::Nonconvex { c, window_total } => {
            check_positive("c", *c)?;
            ceil_steps(kappa, (6.0 * c).max(*window_total))
        }
        KRule::Custom(f) => f(t),
    };
    Ok(k.max(1))
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

/// Step size and iteration rule for the follower.
#[derive(Debug, Clone)]
pub struct InnerSchedule {
    pub beta: f64,
    pub rule: KRule,
    pub k_max: usize,
    /// Constants consumed by the formula rules.
    pub derived: Option<DerivedConstants>,
    /// Set when `beta` was supplied by hand rather than `2/(ℓ_{g,1}+μ_g)`.
    pub beta_overridden: bool,
}

/// The iteration count actually used at one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KChoice {
    pub k: usize,
    pub capped: bool,
}

impl InnerSchedule {
    pub fn from_constants(constants: &ProblemConstants, derived: DerivedConstants, rule: KRule) -> Self {
        InnerSchedule {
            beta: contraction_beta(constants),
            rule,
            k_max: DEFAULT_K_MAX,
            derived: Some(derived),
            beta_overridden: false,
        }
    }

    /// Hand-picked `β` and a fixed `K`.
    pub fn fixed(beta: f64, k: usize) -> Self {
        InnerSchedule {
            beta,
            rule: KRule::Fixed(k),
            k_max: DEFAULT_K_MAX,
            derived: None,
            beta_overridden: true,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self.beta_overridden = true;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("beta", self.beta)?;
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be >= 1".into()));
        }
        if let KRule::Fixed(0) = self.rule {
            return Err(Error::InvalidParameter("fixed K must be >= 1".into()));
        }
        Ok(())
    }

    pub fn k_at(&self, t: usize) -> Result<KChoice> {
        let k = match (&self.rule, &self.derived) {
            (KRule::Fixed(_) | KRule::Custom(_), _) => k_for_round(&self.rule, &PLACEHOLDER, t)?,
            (rule, Some(d)) => k_for_round(rule, d, t)?,
            (rule, None) => {
                return Err(Error::InvalidParameter(format!(
                    "inner rule '{}' needs problem constants",
                    rule.name()
                )))
            }
        };
        Ok(if k > self.k_max {
            KChoice { k: self.k_max, capped: true }
        } else {
            KChoice { k, capped: false }
        })
    }
}

// Fixed and custom rules never read the constants.
const PLACEHOLDER: DerivedConstants = DerivedConstants {
    kappa_g: 1.0,
    l_y: 1.0,
    m_f: 1.0,
    l_f: 1.0,
};
