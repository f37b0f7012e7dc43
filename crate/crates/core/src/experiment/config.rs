//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::ProblemConstants;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::set::FeasibleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Ho,
    ElasticNet,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticRuleKind {
    /// `a¹ = a² = (−1)^t/√t`.
    AltSqrt,
    /// `a¹ = 0`, `a² = (−1)^t/√t`.
    AltSqrtFixedOuter,
    Constant,
    AltOuter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StronglyConvex,
    StronglyConvexStatic,
    ConvexDynamic,
    ConvexStatic,
    Nonconvex,
    /// Explicit `alpha`, `beta` and `k`.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKindName {
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Box,
    Ball,
    Unbounded,
}

/// A window size, or `"T"` for the horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Size(usize),
    Label(String),
}

impl WindowSpec {
    pub fn resolve(&self, horizon: usize) -> Result<usize> {
        match self {
            WindowSpec::Size(0) => Err(Error::Config("window must be >= 1".into())),
            WindowSpec::Size(w) => Ok(*w),
            WindowSpec::Label(s) if s == "T" => Ok(horizon),
            WindowSpec::Label(s) => Err(Error::Config(format!("window must be a positive integer or \"T\", got {s:?}"))),
        }
    }

    /// Parses a comma-separated list such as `1,10,100,T`.
    pub fn parse_list(text: &str) -> Result<Vec<WindowSpec>> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s.parse::<usize>() {
                Ok(w) => Ok(WindowSpec::Size(w)),
                Err(_) if s == "T" => Ok(WindowSpec::Label("T".into())),
                Err(_) => Err(Error::Config(format!("bad window {s:?}"))),
            })
            .collect()
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::Size(1)
    }
}

fn yes() -> bool {
    true
}

fn default_upper() -> f64 {
    1.0
}

fn default_lower() -> f64 {
    -1.0
}

fn default_inner_tol() -> f64 {
    1e-12
}

fn default_outer_tol() -> f64 {
    1e-10
}

fn default_h_samples() -> usize {
    128
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub horizon: usize,

    pub rule: Option<QuadraticRuleKind>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub a4: Option<f64>,
    pub amplitude: Option<f64>,

    pub dataset: Option<PathBuf>,
    pub label_column: Option<String>,
    pub shuffle_seed: Option<u64>,
    pub mu_smooth: Option<f64>,

    pub stages: Option<usize>,
    pub noise_max: Option<f64>,
    #[serde(default = "default_dim")]
    pub d1: usize,
    pub d2: Option<usize>,
    #[serde(default)]
    pub seed: u64,

    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default = "uniform")]
    pub window_kind: WindowKindName,
    pub gamma: Option<f64>,

    pub regime: Regime,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub k_max: Option<usize>,

    pub ell_f0: Option<f64>,
    pub ell_f1: Option<f64>,
    pub ell_g1: Option<f64>,
    pub ell_g2: Option<f64>,
    pub mu_g: Option<f64>,
    pub mu_f: Option<f64>,

    #[serde(default = "box_kind")]
    pub set: SetKind,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    pub radius: Option<f64>,
    #[serde(default)]
    pub center: f64,
    pub init_x: Option<f64>,
    pub init_y: Option<f64>,

    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "default_h_samples")]
    pub h_samples: usize,
    #[serde(default = "yes")]
    pub report_dynamic: bool,
    #[serde(default = "yes")]
    pub report_static: bool,
    #[serde(default = "yes")]
    pub report_local: bool,
    #[serde(default = "yes")]
    pub report_h: bool,
    /// Also run the full-information baseline.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default)]
    pub execution: Execution,
    pub output: Option<PathBuf>,
}

fn uniform() -> WindowKindName {
    WindowKindName::Uniform
}

fn box_kind() -> SetKind {
    SetKind::Box
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative dataset and output paths are taken relative to the config file
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.dataset, &mut cfg.output].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        self.window.resolve(self.horizon)?;
        if self.d1 == 0 {
            return bad("d1 must be >= 1".into());
        }
        match self.problem {
            ProblemKind::Quadratic => {
                if self.d1 != 1 {
                    return bad("the quadratic family is scalar (d1 = 1)".into());
                }
                match self.rule {
                    None => return bad("quadratic problems need `rule`".into()),
                    Some(QuadraticRuleKind::Constant) if self.a1.is_none() || self.a2.is_none() => {
                        return bad("rule = \"constant\" needs a1 and a2".into())
                    }
                    Some(QuadraticRuleKind::AltOuter) if self.amplitude.is_none() => {
                        return bad("rule = \"alt_outer\" needs amplitude".into())
                    }
                    _ => {}
                }
            }
            ProblemKind::Ho | ProblemKind::ElasticNet => {
                if self.dataset.is_none() || self.label_column.is_none() {
                    return bad("dataset problems need `dataset` and `label_column`".into());
                }
                if self.problem == ProblemKind::ElasticNet && !self.mu_smooth.is_some_and(|m| m > 0.0) {
                    return bad("elastic_net needs mu_smooth > 0".into());
                }
            }
            ProblemKind::Synthetic => {
                if !self.stages.is_some_and(|s| s >= 1 && s <= self.horizon) {
                    return bad("synthetic problems need 1 <= stages <= horizon".into());
                }
                if !self.d2.is_some_and(|d| d >= 1) {
                    return bad("synthetic problems need d2 >= 1".into());
                }
            }
        }
        if self.window_kind == WindowKindName::Exponential && !self.gamma.is_some_and(|g| g > 0.0 && g <= 1.0) {
            return bad("exponential weights need 0 < gamma <= 1".into());
        }
        if self.regime == Regime::Manual && (self.alpha.is_none() || self.beta.is_none() || self.k.is_none()) {
            return bad("regime = \"manual\" needs alpha, beta and k".into());
        }
        if self.k == Some(0) || self.k_max == Some(0) {
            return bad("k and k_max must be >= 1".into());
        }
        if self.alpha.is_some_and(|a| !(a >= 0.0) || !a.is_finite()) {
            return bad("alpha must be finite and >= 0".into());
        }
        if self.beta.is_some_and(|b| !(b > 0.0) || !b.is_finite()) {
            return bad("beta must be finite and > 0".into());
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return bad("oracle tolerances must be > 0".into());
        }
        self.feasible_set()?;
        Ok(())
    }

    pub fn feasible_set(&self) -> Result<FeasibleSet> {
        match self.set {
            SetKind::Box => FeasibleSet::cube(self.d1, self.lower, self.upper),
            SetKind::Ball => FeasibleSet::ball(
                vec![self.center; self.d1],
                self.radius.ok_or_else(|| Error::Config("set = \"ball\" needs radius".into()))?,
            ),
            SetKind::Unbounded => FeasibleSet::unbounded(self.d1),
        }
    }

    /// Explicit constants from the config, layered over `base` when given.
    pub fn constants(&self, base: Option<ProblemConstants>) -> Option<ProblemConstants> {
        let pick = |o: Option<f64>, b: Option<f64>| o.or(b);
        let c = ProblemConstants {
            ell_f0: pick(self.ell_f0, base.map(|b| b.ell_f0))?,
            ell_f1: pick(self.ell_f1, base.map(|b| b.ell_f1))?,
            ell_g1: pick(self.ell_g1, base.map(|b| b.ell_g1))?,
            ell_g2: pick(self.ell_g2, base.map(|b| b.ell_g2))?,
            mu_g: pick(self.mu_g, base.map(|b| b.mu_g))?,
            mu_f: pick(self.mu_f, base.and_then(|b| b.mu_f)),
            m_bound: base.and_then(|b| b.m_bound),
        };
        Some(c)
    }

    /// Names of the schedule values set explicitly.
    pub fn overrides(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, set) in [
            ("alpha", self.alpha.is_some()),
            ("beta", self.beta.is_some()),
            ("k", self.k.is_some()),
            ("k_max", self.k_max.is_some()),
        ] {
            if set {
                out.push(name);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = r#"
problem = "quadratic"
rule = "alt_sqrt"
horizon = 100
window = 10
regime = "strongly_convex"
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml_str(QUAD).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.window.resolve(100).unwrap(), 10);
        assert_eq!(cfg.feasible_set().unwrap(), FeasibleSet::cube(1, -1.0, 1.0).unwrap());
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let cfg = ExperimentConfig::from_toml_str(&QUAD.replace("horizon = 100", "horizon = 0")).unwrap();
        assert_eq!(cfg.validate().unwrap_err().category(), "invalid_config");
    }

    #[test]
    fn unknown_keys_and_bad_windows() {
        assert!(ExperimentConfig::from_toml_str(&format!("{QUAD}\nwhatever = 1")).is_err());
        let cfg = ExperimentConfig::from_toml_str(&QUAD.replace("window = 10", "window = \"T\"")).unwrap();
        assert_eq!(cfg.window.resolve(100).unwrap(), 100);
        let cfg = ExperimentConfig::from_toml_str(&QUAD.replace("window = 10", "window = \"W\"")).unwrap();
        assert!(cfg.validate().is_err());
        assert_eq!(
            WindowSpec::parse_list("1, 10,100,T").unwrap(),
            vec![
                WindowSpec::Size(1),
                WindowSpec::Size(10),
                WindowSpec::Size(100),
                WindowSpec::Label("T".into())
            ]
        );
        assert!(WindowSpec::parse_list("1,x").is_err());
    }

    #[test]
    fn manual_regime_needs_all_values() {
        let cfg = ExperimentConfig::from_toml_str(&QUAD.replace("strongly_convex", "manual")).unwrap();
        assert!(cfg.validate().is_err());
    }
}
