//! Request/response types of the detection service HTTP API.
//!
//! Observation rows cross the wire as raw (untransformed) values with one
//! column per model coordinate; the service applies the natural-statistic
//! map. Step and stop records mirror the JSONL trace format the CLI writes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use mdfocus_core::calibrate::ThresholdPlan;
use mdfocus_core::config::{ModelConfig, PrechangeConfig, RunConfig};
use mdfocus_core::detector::{StatKind, StatisticReport};
use mdfocus_core::simlab::{ExperimentOutput, ExperimentSpec};

pub const API_VERSION: &str = "v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub config: RunConfig,
    /// Keep per-step records in observe responses.
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: Uuid,
    pub p: usize,
    pub natural_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveRequest {
    /// Raw observation rows, one per time step, p columns each.
    pub rows: Vec<Vec<f64>>,
}

/// One per-step trace line: `{n, stats: {id: {value, tau}}, candidates}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: u64,
    pub stats: BTreeMap<String, StatValue>,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    pub value: f64,
    pub tau: u64,
}

impl StepRecord {
    pub fn from_report(report: &StatisticReport) -> Self {
        Self {
            n: report.n,
            stats: report
                .results
                .iter()
                .map(|r| {
                    (
                        r.stat.id(),
                        StatValue {
                            value: r.value,
                            tau: r.tau,
                        },
                    )
                })
                .collect(),
            candidates: report.candidate_count,
        }
    }
}

/// Final detection record. `stopped: false` carries only `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub stopped: bool,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl StopRecord {
    pub fn end_of_stream(n: u64) -> Self {
        Self {
            stopped: false,
            n,
            stat: None,
            tau_hat: None,
            value: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObserveResponse {
    /// Per-step records; empty unless the session was created with `trace`.
    pub reports: Vec<StepRecord>,
    /// Present from the step a threshold fires onward; later rows are not
    /// consumed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRecord>,
    /// Rows actually consumed from this request.
    pub consumed: usize,
    pub n: u64,
    pub candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: Uuid,
    pub n: u64,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CalibrateRequest {
    /// Fixed thresholds for an average run length of at least `gamma`.
    AnalyticArl {
        statistics: Vec<StatKind>,
        p: usize,
        gamma: f64,
        /// Number of sparsity levels monitored; defaults to the number of
        /// ranked/dense statistics in the request.
        #[serde(default)]
        m: Option<usize>,
    },
    /// Time-varying thresholds controlling the false-alarm probability.
    AnalyticFa {
        statistics: Vec<StatKind>,
        p: usize,
        alpha: f64,
    },
    /// Empirical quantiles of no-change maxima.
    MonteCarlo {
        model: ModelConfig,
        statistics: Vec<StatKind>,
        prechange: PrechangeConfig,
        gamma: f64,
        replicates: usize,
        seed: u64,
        #[serde(default)]
        stream_len: Option<u64>,
        #[serde(default)]
        quantile: Option<f64>,
        #[serde(default)]
        workers: Option<usize>,
    },
}

pub type CalibrateResponse = ThresholdPlan;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRequest {
    pub p: Vec<usize>,
    pub n: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: u64,
    pub p: usize,
    pub expected_faces: f64,
    pub expected_vertices: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResponse {
    pub rows: Vec<OracleRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRequest {
    pub spec: ExperimentSpec,
    #[serde(default)]
    pub workers: Option<usize>,
}

pub type ExperimentResponse = ExperimentOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EDetectPreset {
    WinningRate,
    PlusMinus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EDetectRequest {
    pub preset: EDetectPreset,
    pub scores: Vec<f64>,
    /// Smallest prefix length to report; defaults to 2.
    #[serde(default)]
    pub from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EDetectRow {
    pub n: usize,
    pub hull_count: usize,
    pub candidates: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EDetectResponse {
    pub preset: EDetectPreset,
    pub rows: Vec<EDetectRow>,
}

/// Error body returned with non-2xx statuses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    /// Absolute observation index the error refers to, when row-specific.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<u64>,
}
