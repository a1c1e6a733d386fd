//! Data generators, brute-force oracles, and the experiment harness.
//!
//! Reproducibility contract: all randomness comes from the ChaCha8
//! counter-based generator. A run is keyed by a base seed; replicate r draws
//! from stream r of that key (`set_stream`), so replicates are independent
//! and identical regardless of scheduling or worker count.

mod brute;
mod experiment;

pub use brute::{brute_force_glr, BruteStep};
pub use experiment::{
    exact_vertex_count_gaussian, monte_carlo_thresholds, run_experiment, ExperimentOutput,
    ExperimentRecord, ExperimentSpec, RECORD_HEADER,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectorError;
use crate::hull::HullError;
use crate::model::{Family, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum SimlabError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("worker pool failure: {0}")]
    Pool(String),
}

/// Deterministic generator for one replicate of a seeded run.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// One synthetic stream: which model, how long, and what change (if any) is
/// injected. The change splits its squared magnitude evenly over the first
/// `sparsity` coordinates, so the per-coordinate mean shift is ‖δ‖/√s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScenario {
    pub model: ModelSpec,
    pub n: u64,
    pub changepoint: Option<u64>,
    pub sparsity: usize,
    pub magnitude2: f64,
    pub seed: u64,
}

impl StreamScenario {
    pub fn no_change(model: ModelSpec, n: u64, seed: u64) -> Self {
        Self {
            model,
            n,
            changepoint: None,
            sparsity: 0,
            magnitude2: 0.0,
            seed,
        }
    }

    pub fn with_change(
        model: ModelSpec,
        n: u64,
        changepoint: u64,
        sparsity: usize,
        magnitude2: f64,
        seed: u64,
    ) -> Self {
        Self {
            model,
            n,
            changepoint: Some(changepoint),
            sparsity,
            magnitude2,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SimlabError> {
        if let Some(tau) = self.changepoint {
            if self.sparsity == 0 || self.sparsity > self.model.p() {
                return Err(SimlabError::InvalidScenario(format!(
                    "sparsity {} outside 1..={}",
                    self.sparsity,
                    self.model.p()
                )));
            }
            if tau >= self.n {
                return Err(SimlabError::InvalidScenario(format!(
                    "changepoint {tau} at or beyond n = {}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Per-coordinate post-change mean shift.
    pub fn per_coordinate_shift(&self) -> f64 {
        if self.sparsity == 0 {
            0.0
        } else {
            (self.magnitude2 / self.sparsity as f64).sqrt()
        }
    }
}

/// Draw the full stream of natural-statistic vectors for one replicate.
/// Gaussian coordinates draw from the ziggurat standard-normal sampler,
/// Poisson from the rand_distr integer sampler (pre-change mean 1).
pub fn generate(scenario: &StreamScenario, replicate: u64) -> Result<Vec<Vec<f64>>, SimlabError> {
    scenario.validate()?;
    let mut rng = replicate_rng(scenario.seed, replicate);
    let model = &scenario.model;
    let p = model.p();
    let shift = scenario.per_coordinate_shift();
    let mut out = Vec::with_capacity(scenario.n as usize);
    let mut raw = vec![0.0f64; p];
    for t in 0..scenario.n {
        let post = scenario.changepoint.is_some_and(|tau| t >= tau);
        for (coord, family) in model.coords().iter().enumerate() {
            let shifted = post && coord < scenario.sparsity;
            raw[coord] = match family {
                Family::GaussianMean => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + if shifted { shift } else { 0.0 }
                }
                Family::Poisson => {
                    let mean = 1.0 + if shifted { shift } else { 0.0 };
                    Poisson::new(mean)
                        .map_err(|e| SimlabError::InvalidScenario(e.to_string()))?
                        .sample(&mut rng)
                }
                other => {
                    return Err(SimlabError::InvalidScenario(format!(
                        "no generator for family {other:?}"
                    )))
                }
            };
        }
        out.push(model.to_natural(&raw)?);
    }
    Ok(out)
}
