//! Detection service: sessions wrap one online engine each; calibration,
//! oracle tables, experiments, and e-detector scans are stateless calls.
//! Observation batches run on the blocking pool, one mutex per session, so
//! distinct streams are processed concurrently.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use uuid::Uuid;

use mdfocus_api::*;
use mdfocus_core::calibrate::{
    arl_threshold, false_alarm_threshold, FalseAlarmKind, PlanEntry, Provenance, ThresholdPlan,
    ThresholdRule,
};
use mdfocus_core::config::{build_engine, Engine, PrechangeConfig};
use mdfocus_core::detector::{decide, Decision, DetectorError, StatConfig, StatKind};
use mdfocus_core::edetector::{
    edetector_points, EDetectorSpec, PLUS_MINUS_M, WINNING_RATE_P0,
};
use mdfocus_core::expectation::expected_counts;
use mdfocus_core::hull::{hull_vertices, DEFAULT_TOL};
use mdfocus_core::model::{ModelError, ModelSpec};
use mdfocus_core::simlab::{monte_carlo_thresholds, run_experiment};
use mdfocus_core::Prechange;

pub struct Session {
    model: ModelSpec,
    engine: Engine,
    plan: Option<ThresholdPlan>,
    trace: bool,
    stop: Option<StopRecord>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>>,
}

pub fn app() -> Router {
    router(AppState::default())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_status))
        .route("/v1/sessions/{id}", delete(delete_session))
        .route("/v1/sessions/{id}/observe", post(observe))
        .route("/v1/calibrate", post(calibrate))
        .route("/v1/oracle", post(oracle))
        .route("/v1/experiments", post(experiments))
        .route("/v1/edetect", post(edetect))
        .with_state(state)
}

pub enum ServiceError {
    Config(String),
    Data { message: String, row: Option<u64> },
    NotFound(Uuid),
    Internal(String),
}

impl ServiceError {
    fn config(err: impl std::fmt::Display) -> Self {
        ServiceError::Config(err.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ServiceError::Config(error) => (StatusCode::BAD_REQUEST, ApiError { error, row: None }),
            ServiceError::Data { message, row } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                ApiError {
                    error: message,
                    row,
                },
            ),
            ServiceError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                ApiError {
                    error: format!("unknown session {id}"),
                    row: None,
                },
            ),
            ServiceError::Internal(error) => {
                (StatusCode::INTERNAL_SERVER_ERROR, ApiError { error, row: None })
            }
        };
        (status, Json(body)).into_response()
    }
}

async fn health() -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
    })
}

fn validate_plan(plan: &ThresholdPlan, stats: &[StatKind]) -> Result<(), ServiceError> {
    for stat in stats {
        if plan.rule_for(stat).is_none() {
            return Err(ServiceError::Config(format!(
                "threshold plan has no entry for statistic {}",
                stat.id()
            )));
        }
    }
    Ok(())
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<Json<SessionCreated>, ServiceError> {
    let (model, engine) = build_engine(&req.config).map_err(ServiceError::config)?;
    if let Some(plan) = &req.config.threshold_plan {
        validate_plan(plan, &req.config.statistics)?;
    }
    let session = Session {
        model,
        engine,
        plan: req.config.threshold_plan.clone(),
        trace: req.trace,
        stop: None,
    };
    let id = Uuid::new_v4();
    let created = SessionCreated {
        session_id: id,
        p: session.model.p(),
        natural_dim: session.model.natural_dim(),
    };
    state.sessions.write().insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(created))
}

fn lookup(state: &AppState, id: Uuid) -> Result<Arc<Mutex<Session>>, ServiceError> {
    state
        .sessions
        .read()
        .get(&id)
        .cloned()
        .ok_or(ServiceError::NotFound(id))
}

async fn observe(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    Json(req): Json<ObserveRequest>,
) -> Result<Json<ObserveResponse>, ServiceError> {
    let session = lookup(&state, id)?;
    let result = tokio::task::spawn_blocking(move || {
        let mut session = session.lock();
        let mut reports = Vec::new();
        let mut consumed = 0usize;
        for row in &req.rows {
            if session.stop.is_some() {
                break;
            }
            let absolute_row = session.engine.n();
            let natural = session.model.to_natural(row).map_err(|e| match e {
                ModelError::RejectedObservation { .. } | ModelError::DimensionMismatch { .. } => {
                    ServiceError::Data {
                        message: e.to_string(),
                        row: Some(absolute_row),
                    }
                }
                other => ServiceError::Internal(other.to_string()),
            })?;
            let report = session.engine.step(&natural).map_err(step_error)?;
            consumed += 1;
            if session.trace {
                reports.push(StepRecord::from_report(&report));
            }
            if let Some(plan) = &session.plan {
                match decide(&report, plan).map_err(step_error)? {
                    Decision::Stop {
                        stat,
                        tau_hat,
                        value,
                    } => {
                        session.stop = Some(StopRecord {
                            stopped: true,
                            n: report.n,
                            stat: Some(stat.id()),
                            tau_hat: Some(tau_hat),
                            value: Some(value),
                        });
                    }
                    Decision::Continue => {}
                }
            }
        }
        Ok(ObserveResponse {
            reports,
            stop: session.stop.clone(),
            consumed,
            n: session.engine.n(),
            candidates: session.engine.candidate_count(),
        })
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(result))
}

fn step_error(err: DetectorError) -> ServiceError {
    match err {
        DetectorError::Config(msg) => ServiceError::Config(msg),
        DetectorError::DimensionMismatch { .. } | DetectorError::NonFinite { .. } => {
            ServiceError::Data {
                message: err.to_string(),
                row: None,
            }
        }
        other => ServiceError::Internal(other.to_string()),
    }
}

async fn session_status(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
) -> Result<Json<SessionStatus>, ServiceError> {
    let session = lookup(&state, id)?;
    let session = session.lock();
    Ok(Json(SessionStatus {
        session_id: id,
        n: session.engine.n(),
        candidates: session.engine.candidate_count(),
        stop: session.stop.clone(),
    }))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
) -> Result<StatusCode, ServiceError> {
    state
        .sessions
        .write()
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or(ServiceError::NotFound(id))
}

/// Number of ranked-type levels in a statistic list (for the m term).
fn ranked_levels(stats: &[StatKind]) -> usize {
    stats
        .iter()
        .filter(|s| matches!(s, StatKind::Dense | StatKind::Ranked { .. }))
        .count()
}

async fn calibrate(
    Json(req): Json<CalibrateRequest>,
) -> Result<Json<CalibrateResponse>, ServiceError> {
    let plan = match req {
        CalibrateRequest::AnalyticArl {
            statistics,
            p,
            gamma,
            m,
        } => {
            if !(gamma > 1.0) {
                return Err(ServiceError::Config(format!("gamma must be > 1, got {gamma}")));
            }
            let m = m.unwrap_or_else(|| ranked_levels(&statistics).max(1));
            let entries = statistics
                .iter()
                .map(|&stat| {
                    let s = match stat {
                        StatKind::Dense => p,
                        StatKind::Ranked { s } => {
                            if s > p {
                                return Err(ServiceError::Config(format!(
                                    "ranked sparsity {s} exceeds p = {p}"
                                )));
                            }
                            s
                        }
                        other => {
                            return Err(ServiceError::Config(format!(
                                "analytic-arl supports dense/ranked statistics only, got {}",
                                other.id()
                            )))
                        }
                    };
                    Ok(PlanEntry {
                        stat,
                        rule: ThresholdRule::Fixed {
                            c: arl_threshold(s, p, gamma, m),
                        },
                    })
                })
                .collect::<Result<_, _>>()?;
            ThresholdPlan {
                provenance: Provenance::Arl { gamma },
                entries,
            }
        }
        CalibrateRequest::AnalyticFa {
            statistics,
            p,
            alpha,
        } => {
            let entries = statistics
                .iter()
                .map(|&stat| {
                    let kind = match stat {
                        StatKind::Dense => FalseAlarmKind::Dense,
                        StatKind::Ranked { s: 1 } => FalseAlarmKind::Rank1,
                        StatKind::Ranked { s } => FalseAlarmKind::RankS { s },
                        StatKind::Thresholded { a } => FalseAlarmKind::Thresholded { a },
                        StatKind::SumOfMax => {
                            return Err(ServiceError::Config(
                                "analytic-fa has no bound for sum_of_max".into(),
                            ))
                        }
                    };
                    // Evaluate once to surface domain errors now.
                    false_alarm_threshold(kind, p, 2.0, alpha).map_err(ServiceError::config)?;
                    Ok(PlanEntry {
                        stat,
                        rule: ThresholdRule::TimeVarying { kind, p, alpha },
                    })
                })
                .collect::<Result<_, _>>()?;
            ThresholdPlan {
                provenance: Provenance::FalseAlarm { alpha },
                entries,
            }
        }
        CalibrateRequest::MonteCarlo {
            model,
            statistics,
            prechange,
            gamma,
            replicates,
            seed,
            stream_len,
            quantile,
            workers,
        } => {
            let spec = model.build().map_err(ServiceError::config)?;
            let config = StatConfig {
                stats: statistics,
                prechange: match prechange {
                    PrechangeConfig::Unknown => Prechange::Unknown,
                    PrechangeConfig::Known { natural } => Prechange::Known(natural),
                },
            };
            config.validate(&spec).map_err(ServiceError::config)?;
            let workers = workers.unwrap_or_else(num_cpus_default);
            tokio::task::spawn_blocking(move || {
                monte_carlo_thresholds(
                    &spec,
                    &config,
                    gamma,
                    stream_len,
                    quantile,
                    replicates,
                    seed,
                    workers,
                )
            })
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))?
            .map_err(ServiceError::config)?
        }
    };
    Ok(Json(plan))
}

fn num_cpus_default() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

async fn oracle(Json(req): Json<OracleRequest>) -> Result<Json<OracleResponse>, ServiceError> {
    let mut rows = Vec::new();
    for &p in &req.p {
        for &n in &req.n {
            let (faces, vertices) = expected_counts(n, p).map_err(ServiceError::config)?;
            rows.push(OracleRow {
                n,
                p,
                expected_faces: faces,
                expected_vertices: vertices,
            });
        }
    }
    Ok(Json(OracleResponse { rows }))
}

async fn experiments(
    Json(req): Json<ExperimentRequest>,
) -> Result<Json<ExperimentResponse>, ServiceError> {
    let workers = req.workers.unwrap_or_else(num_cpus_default);
    let spec = req.spec;
    let output = tokio::task::spawn_blocking(move || run_experiment(&spec, workers))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(ServiceError::config)?;
    Ok(Json(output))
}

async fn edetect(Json(req): Json<EDetectRequest>) -> Result<Json<EDetectResponse>, ServiceError> {
    if req.scores.is_empty() {
        return Err(ServiceError::Data {
            message: "empty score stream".into(),
            row: None,
        });
    }
    let spec = match req.preset {
        EDetectPreset::WinningRate => EDetectorSpec::winning_rate(WINNING_RATE_P0),
        EDetectPreset::PlusMinus => EDetectorSpec::plus_minus(PLUS_MINUS_M),
    };
    let from = req.from.unwrap_or(2).max(2);
    let scores = req.scores;
    let rows = tokio::task::spawn_blocking(move || -> Result<Vec<EDetectRow>, ServiceError> {
        let mut rows = Vec::new();
        for n in from..=scores.len() {
            let points = edetector_points(&spec, &scores[..n]);
            let candidates = hull_vertices(&points, DEFAULT_TOL)
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            rows.push(EDetectRow {
                n,
                hull_count: candidates.len(),
                candidates,
            });
        }
        Ok(rows)
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(EDetectResponse {
        preset: req.preset,
        rows,
    }))
}

/// Bind-and-serve helper shared by the binary and the CLI's in-process mode.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, app()).await
}
