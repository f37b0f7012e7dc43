//! Piecewise-stationary regression streams: labels follow a ground-truth
//! model that switches at stage boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub len: usize,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStreamConfig {
    pub horizon: usize,
    pub stages: Vec<Stage>,
    #[serde(default = "default_noise")]
    pub noise_max: f64,
    pub seed: u64,
    pub d1: usize,
    pub d2: usize,
}

fn default_noise() -> f64 {
    0.1
}

/// Paired train/validation samples plus the stage layout that generated them.
#[derive(Debug, Clone)]
pub struct SyntheticStreams {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub stages: Vec<Stage>,
}

impl SyntheticStreams {
    /// Ground-truth `(x*, y*)` active at round `t` (1-based).
    pub fn truth_at(&self, t: usize) -> Option<(&[f64], &[f64])> {
        let mut end = 0;
        for s in &self.stages {
            end += s.len;
            if t >= 1 && t <= end {
                return Some((&s.x_star, &s.y_star));
            }
        }
        None
    }
}

impl SyntheticStreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::InvalidParameter("dimensions must be >= 1".into()));
        }
        let total: usize = self.stages.iter().map(|s| s.len).sum();
        if total != self.horizon {
            return Err(Error::InvalidParameter(format!(
                "stage lengths sum to {total}, horizon is {}",
                self.horizon
            )));
        }
        for s in &self.stages {
            if s.x_star.len() != self.d1 {
                return Err(Error::DimensionMismatch {
                    what: "stage x*",
                    expected: self.d1,
                    got: s.x_star.len(),
                });
            }
            if s.y_star.len() != self.d2 {
                return Err(Error::DimensionMismatch {
                    what: "stage y*",
                    expected: self.d2,
                    got: s.y_star.len(),
                });
            }
        }
        if !(self.noise_max >= 0.0) {
            return Err(Error::InvalidParameter("noise_max must be >= 0".into()));
        }
        Ok(())
    }

    /// `S` equal-length stages with ground-truth models drawn from the seed.
    pub fn equal_stages(horizon: usize, stages: usize, d1: usize, d2: usize, seed: u64) -> Result<Self> {
        if stages == 0 || stages > horizon {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= stages <= horizon, got {stages}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_57a6e5);
        let base = horizon / stages;
        let list = (0..stages)
            .map(|s| Stage {
                len: if s + 1 == stages { horizon - base * (stages - 1) } else { base },
                x_star: (0..d1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                y_star: (0..d2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            })
            .collect();
        Ok(SyntheticStreamConfig {
            horizon,
            stages: list,
            noise_max: 0.1,
            seed,
            d1,
            d2,
        })
    }
}

/// Features `a_t ~ N(0, I)`, labels `b_t = a_tᵀ y*_s + ε_t` with `ε_t ~ U[0, noise_max]`.
pub fn synthesize(config: &SyntheticStreamConfig) -> Result<SyntheticStreams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |y_star: &Vector| {
        let a = Vector::from_fn(config.d2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = if config.noise_max > 0.0 {
            rng.gen_range(0.0..=config.noise_max)
        } else {
            0.0
        };
        Sample { b: a.dot(y_star) + eps, a }
    };
    let mut train = Vec::with_capacity(config.horizon);
    let mut val = Vec::with_capacity(config.horizon);
    for stage in &config.stages {
        let y_star = Vector::from_column_slice(&stage.y_star);
        for _ in 0..stage.len {
            train.push(draw(&y_star));
            val.push(draw(&y_star));
        }
    }
    Ok(SyntheticStreams {
        train,
        val,
        stages: config.stages.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn single_stage(noise: f64, horizon: usize) -> SyntheticStreamConfig {
        SyntheticStreamConfig {
            horizon,
            stages: vec![Stage {
                len: horizon,
                x_star: vec![0.0],
                y_star: vec![1.0, -2.0, 0.5],
            }],
            noise_max: noise,
            seed: 42,
            d1: 1,
            d2: 3,
        }
    }

    #[test]
    fn noiseless_labels_recover_truth() {
        let streams = synthesize(&single_stage(0.0, 12)).unwrap();
        // ridgeless least squares on the training rows
        let a = Matrix::from_fn(12, 3, |i, j| streams.train[i].a[j]);
        let b = Vector::from_iterator(12, streams.train.iter().map(|s| s.b));
        let normal = a.transpose() * &a;
        let rhs = a.transpose() * b;
        let y = normal.lu().solve(&rhs).unwrap();
        assert!((y - Vector::from_column_slice(&[1.0, -2.0, 0.5])).amax() < 1e-10);
    }

    #[test]
    fn deterministic_in_seed() {
        let c = single_stage(0.1, 50);
        let (a, b) = (synthesize(&c).unwrap(), synthesize(&c).unwrap());
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        let mut c2 = c.clone();
        c2.seed = 43;
        assert_ne!(synthesize(&c2).unwrap().train, a.train);
    }

    #[test]
    fn noise_is_within_support() {
        let c = single_stage(0.1, 200);
        let s = synthesize(&c).unwrap();
        let truth = Vector::from_column_slice(&[1.0, -2.0, 0.5]);
        for sample in s.train.iter().chain(&s.val) {
            let eps = sample.b - sample.a.dot(&truth);
            assert!((-1e-12..=0.1 + 1e-12).contains(&eps));
        }
    }

    #[test]
    fn stage_lengths_must_sum() {
        let mut c = single_stage(0.1, 10);
        c.horizon = 11;
        assert!(synthesize(&c).is_err());
        let eq = SyntheticStreamConfig::equal_stages(10, 3, 1, 2, 0).unwrap();
        assert_eq!(eq.stages.iter().map(|s| s.len).collect::<Vec<_>>(), vec![3, 3, 4]);
        let s = synthesize(&eq).unwrap();
        assert_eq!(s.truth_at(4).unwrap().1, &eq.stages[1].y_star[..]);
        assert!(s.truth_at(11).is_none());
    }
}
