//! Online alternating gradient descent for online bilevel optimization.

pub mod constants;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fdcheck;
pub mod hypergrad;
pub mod inner;
pub mod linalg;
pub mod driver;
pub mod par;
pub mod problems;
pub mod regret;
pub mod round;
pub mod set;

pub use constants::{derive_constants, DerivedConstants, ProblemConstants};
pub use error::{Error, Result};
pub use hypergrad::{hypergradient, windowed_hypergradient, HypergradientHistory, WeightKind, WeightWindow};
pub use inner::{inner_gd, InnerSchedule, KRule};
pub use linalg::{Matrix, Vector};
pub use driver::{full_info_run, oagd_run, Oagd, StepSizeSchedule, Trace};
pub use par::Execution;
pub use regret::{compute_report, inner_oracle, outer_oracle, OracleOptions, RegretReport, ReportOptions};
pub use round::{DecisionPair, RoundFunctions, SharedRound, Stream};
pub use set::FeasibleSet;
