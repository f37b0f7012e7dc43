//! Concrete problem families.

pub mod quadratic;
pub mod regression;
pub mod synthetic;

pub use quadratic::{quadratic_constants, quadratic_stream, CoefficientRule, QuadraticRound};
pub use regression::{
    elastic_net_stream, elastic_net_stream_from_samples, ho_stream, ho_stream_from_samples,
    mean_squared_error, HORegressionRound, RidgeLayout, SmoothedElasticNetRound,
};
pub use synthetic::{synthesize, Stage, SyntheticStreamConfig, SyntheticStreams};
