//! Run configuration: the schema-validated document that selects the model,
//! engine, statistics, and pre-change regime. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::calibrate::ThresholdPlan;
use crate::detector::{DetectorError, Prechange, PruningParams, StatConfig, StatKind};
use crate::model::{Family, ModelSpec, DEFAULT_VAR_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyTag {
    GaussianMean,
    Poisson,
    Binomial,
    Exponential,
    ParetoI,
    GaussianMeanVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordConfig {
    pub family: FamilyTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_floor: Option<f64>,
}

impl CoordConfig {
    fn build(&self) -> Result<Family, DetectorError> {
        let family = match self.family {
            FamilyTag::GaussianMean => Family::GaussianMean,
            FamilyTag::Poisson => Family::Poisson,
            FamilyTag::Binomial => Family::Binomial {
                trials: self.trials.ok_or_else(|| {
                    DetectorError::Config("binomial coordinate needs `trials`".into())
                })?,
            },
            FamilyTag::Exponential => Family::Exponential,
            FamilyTag::ParetoI => Family::ParetoI {
                y_min: self.y_min.ok_or_else(|| {
                    DetectorError::Config("pareto coordinate needs `y_min`".into())
                })?,
            },
            FamilyTag::GaussianMeanVariance => Family::GaussianMeanVariance {
                var_floor: self.var_floor.unwrap_or(DEFAULT_VAR_FLOOR),
            },
        };
        Ok(family)
    }
}

/// Model block: one default family for all p coordinates, or a full
/// per-coordinate list under `coords`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyTag,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<CoordConfig>>,
}

impl ModelConfig {
    pub fn gaussian(p: usize) -> Self {
        Self {
            family: FamilyTag::GaussianMean,
            p,
            trials: None,
            y_min: None,
            var_floor: None,
            coords: None,
        }
    }

    pub fn build(&self) -> Result<ModelSpec, DetectorError> {
        let families = match &self.coords {
            Some(coords) => {
                if coords.len() != self.p {
                    return Err(DetectorError::Config(format!(
                        "coords has {} entries but p = {}",
                        coords.len(),
                        self.p
                    )));
                }
                coords.iter().map(CoordConfig::build).collect::<Result<_, _>>()?
            }
            None => {
                let default = CoordConfig {
                    family: self.family,
                    trials: self.trials,
                    y_min: self.y_min,
                    var_floor: self.var_floor,
                }
                .build()?;
                vec![default; self.p]
            }
        };
        ModelSpec::new(families).map_err(DetectorError::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    #[default]
    Exact,
    Dyadic,
    Approx,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineKind::Exact => "exact",
            EngineKind::Dyadic => "dyadic",
            EngineKind::Approx => "approx",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineParams {
    pub alpha: f64,
    pub beta: f64,
    /// Initial lazy-rebuild budget; defaults to the natural dimension + 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_size: Option<usize>,
    /// Dyadic engine only; defaults to the natural dimension + 5.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_min: Option<u32>,
    /// Approx engine only; defaults to 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_tilde: Option<usize>,
    /// Approx engine only: explicit 1-based coordinate subsets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<Vec<usize>>>,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 1.0,
            max_size: None,
            q_min: None,
            p_tilde: None,
            subsets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrechangeConfig {
    Unknown,
    Known { natural: Vec<f64> },
}

/// The full run document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub engine_params: EngineParams,
    pub statistics: Vec<StatKind>,
    pub prechange: PrechangeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_plan: Option<ThresholdPlan>,
    /// Default input path for the CLI; `-` or absent means stdin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn model_spec(&self) -> Result<ModelSpec, DetectorError> {
        self.model.build()
    }

    pub fn stat_config(&self) -> Result<StatConfig, DetectorError> {
        let model = self.model_spec()?;
        let prechange = match &self.prechange {
            PrechangeConfig::Unknown => Prechange::Unknown,
            PrechangeConfig::Known { natural } => Prechange::Known(natural.clone()),
        };
        let config = StatConfig {
            stats: self.statistics.clone(),
            prechange,
        };
        config.validate(&model)?;
        Ok(config)
    }

    pub fn pruning_params(&self) -> PruningParams {
        PruningParams {
            alpha: self.engine_params.alpha,
            beta: self.engine_params.beta,
            initial_max_size: self.engine_params.max_size,
        }
    }
}

/// Engine selected and constructed from a run configuration.
pub enum Engine {
    Exact(crate::detector::Detector),
    Dyadic(crate::dyadic::DyadicDetector),
    Approx(crate::projapprox::ApproxDetector),
}

impl Engine {
    pub fn step(&mut self, x: &[f64]) -> Result<crate::detector::StatisticReport, DetectorError> {
        match self {
            Engine::Exact(e) => e.step(x),
            Engine::Dyadic(e) => e.step(x),
            Engine::Approx(e) => e.step(x),
        }
    }

    pub fn n(&self) -> u64 {
        match self {
            Engine::Exact(e) => e.n(),
            Engine::Dyadic(e) => e.n(),
            Engine::Approx(e) => e.n(),
        }
    }

    pub fn candidate_count(&self) -> usize {
        match self {
            Engine::Exact(e) => e.candidate_count(),
            Engine::Dyadic(e) => e.candidate_count(),
            Engine::Approx(e) => e.candidate_count(),
        }
    }
}

pub fn build_engine(config: &RunConfig) -> Result<(ModelSpec, Engine), DetectorError> {
    let model = config.model_spec()?;
    let stat_config = config.stat_config()?;
    let engine = match config.engine {
        EngineKind::Exact => {
            for (name, set) in [
                ("q_min", config.engine_params.q_min.is_some()),
                ("p_tilde", config.engine_params.p_tilde.is_some()),
                ("subsets", config.engine_params.subsets.is_some()),
            ] {
                if set {
                    return Err(DetectorError::Config(format!(
                        "`{name}` does not apply to the exact engine"
                    )));
                }
            }
            Engine::Exact(crate::detector::Detector::new(
                model.clone(),
                stat_config,
                config.pruning_params(),
            )?)
        }
        EngineKind::Dyadic => {
            if config.engine_params.max_size.is_some()
                || config.engine_params.p_tilde.is_some()
                || config.engine_params.subsets.is_some()
            {
                return Err(DetectorError::Config(
                    "dyadic engine accepts only `q_min` of the engine params".into(),
                ));
            }
            Engine::Dyadic(crate::dyadic::DyadicDetector::new(
                model.clone(),
                stat_config,
                config.engine_params.q_min,
            )?)
        }
        EngineKind::Approx => {
            if config.engine_params.q_min.is_some() {
                return Err(DetectorError::Config(
                    "`q_min` does not apply to the approx engine".into(),
                ));
            }
            let dim = model.natural_dim();
            let plan = match (&config.engine_params.subsets, config.engine_params.p_tilde) {
                (Some(subsets), _) => {
                    let zero_based: Result<Vec<Vec<usize>>, DetectorError> = subsets
                        .iter()
                        .map(|s| {
                            s.iter()
                                .map(|&c| {
                                    if c == 0 {
                                        Err(DetectorError::Config(
                                            "subset coordinates are 1-based".into(),
                                        ))
                                    } else {
                                        Ok(c - 1)
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    crate::projapprox::ProjectionPlan {
                        subsets: zero_based?,
                    }
                }
                (None, p_tilde) => {
                    crate::projapprox::ProjectionPlan::default_plan(dim, p_tilde.unwrap_or(2).min(dim))?
                }
            };
            Engine::Approx(crate::projapprox::ApproxDetector::new(
                model.clone(),
                stat_config,
                plan,
                config.pruning_params(),
            )?)
        }
    };
    Ok((model, engine))
}
