use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared smoothness and convexity constants of a problem family.
///
/// `ell_f0`, `ell_f1`, `ell_g1`, `ell_g2` are Lipschitz constants of `f_t`,
/// `∇f_t`, `∇g_t` and `∇²g_t`; `mu_g` is the strong convexity of `g_t(x, ·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub ell_f0: f64,
    pub ell_f1: f64,
    pub ell_g1: f64,
    pub ell_g2: f64,
    pub mu_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_f: Option<f64>,
    /// Bound `|f_t| <= M`, used by the nonconvex analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bound: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("ell_f0", self.ell_f0),
            ("ell_f1", self.ell_f1),
            ("ell_g1", self.ell_g1),
            ("ell_g2", self.ell_g2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.mu_g > 0.0) || !self.mu_g.is_finite() {
            return Err(Error::InvalidParameter(format!("mu_g must be > 0, got {}", self.mu_g)));
        }
        if self.mu_g > self.ell_g1 {
            return Err(Error::InvalidParameter(format!(
                "mu_g ({}) exceeds ell_g1 ({})",
                self.mu_g, self.ell_g1
            )));
        }
        if let Some(mu_f) = self.mu_f {
            if !(mu_f > 0.0) || mu_f > self.ell_f1 {
                return Err(Error::InvalidParameter(format!(
                    "mu_f must lie in (0, ell_f1], got {mu_f}"
                )));
            }
        }
        if let Some(m) = self.m_bound {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("M bound must be > 0, got {m}")));
            }
        }
        Ok(())
    }

    pub fn mu_f_required(&self) -> Result<f64> {
        self.mu_f
            .ok_or_else(|| Error::InvalidParameter("regime requires mu_f".into()))
    }
}

/// Constants derived from [`ProblemConstants`]: condition number and the
/// Lipschitz constants of the solution map and hypergradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub kappa_g: f64,
    pub l_y: f64,
    pub m_f: f64,
    pub l_f: f64,
}

pub fn derive_constants(c: &ProblemConstants) -> Result<DerivedConstants> {
    if !(c.mu_g > 0.0) {
        return Err(Error::InvalidParameter(format!("mu_g must be > 0, got {}", c.mu_g)));
    }
    let mu = c.mu_g;
    let kappa_g = c.ell_g1 / mu;
    let l_y = c.ell_g1 / mu;
    let curvature = (c.ell_f0 / mu) * (c.ell_g2 + c.ell_g1 * c.ell_g2 / mu);
    let m_f = c.ell_f1 + c.ell_g1 * c.ell_f1 / mu + curvature;
    let l_f = c.ell_f1 + c.ell_g1 * (c.ell_f1 + m_f) / mu + curvature;
    Ok(DerivedConstants { kappa_g, l_y, m_f, l_f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn consts(ell_f0: f64, ell_f1: f64, ell_g1: f64, ell_g2: f64, mu_g: f64) -> ProblemConstants {
        ProblemConstants {
            ell_f0,
            ell_f1,
            ell_g1,
            ell_g2,
            mu_g,
            mu_f: None,
            m_bound: None,
        }
    }

    #[test]
    fn unit_constants() {
        let d = derive_constants(&consts(1.0, 1.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(d, DerivedConstants { kappa_g: 1.0, l_y: 1.0, m_f: 2.0, l_f: 4.0 });
    }

    #[test]
    fn flat_hessian_simplifies() {
        // ell_g2 = 0 removes the ell_f0 term: M_f = ell_f1 (1 + kappa_g).
        for ell_f0 in [0.0, 0.3, 17.0] {
            let c = consts(ell_f0, 2.5, 6.0, 0.0, 1.5);
            let d = derive_constants(&c).unwrap();
            assert!((d.m_f - 2.5 * (1.0 + 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_mu_g() {
        assert!(derive_constants(&consts(1.0, 1.0, 1.0, 0.0, 0.0)).is_err());
        assert!(consts(1.0, 1.0, 1.0, 0.0, 2.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_kappa(
            f0 in 0.0..5.0f64, f1 in 0.01..5.0f64, g2 in 0.0..5.0f64,
            mu in 0.1..2.0f64, extra in 0.0..10.0f64, bump in 0.0..10.0f64,
        ) {
            let lo = derive_constants(&consts(f0, f1, mu + extra, g2, mu)).unwrap();
            let hi = derive_constants(&consts(f0, f1, mu + extra + bump, g2, mu)).unwrap();
            prop_assert!(hi.m_f >= lo.m_f);
            prop_assert!(hi.l_f >= lo.l_f);
            prop_assert!(lo.l_f >= lo.m_f && lo.m_f >= f1);
        }
    }
}
