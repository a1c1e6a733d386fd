//! Thin blocking client for the detection service. One method per endpoint;
//! server-side error bodies surface as [`ClientError::Api`] with the HTTP
//! status and the row index when the server reported one.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

use mdfocus_api::*;
use mdfocus_core::calibrate::ThresholdPlan;
use mdfocus_core::config::RunConfig;
use mdfocus_core::simlab::{ExperimentOutput, ExperimentSpec};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("service error ({status}): {message}")]
    Api {
        status: u16,
        message: String,
        row: Option<u64>,
    },
}

impl ClientError {
    /// True for 4xx responses caused by bad data rows.
    pub fn is_data_error(&self) -> bool {
        matches!(self, ClientError::Api { status: 422, .. })
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self, ClientError::Api { status: 400, .. })
    }
}

pub struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            base: base_url.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}/{}", self.base, API_VERSION, path)
    }

    fn post_json<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let response = self
            .agent
            .post(&self.url(path))
            .send_json(body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::parse(response)
    }

    fn parse<T: DeserializeOwned>(
        mut response: ureq::http::Response<ureq::Body>,
    ) -> Result<T, ClientError> {
        let status = response.status().as_u16();
        if (200..300).contains(&status) {
            response
                .body_mut()
                .read_json()
                .map_err(|e| ClientError::Transport(format!("bad response body: {e}")))
        } else {
            let err: ApiError = response.body_mut().read_json().unwrap_or(ApiError {
                error: format!("http status {status}"),
                row: None,
            });
            Err(ClientError::Api {
                status,
                message: err.error,
                row: err.row,
            })
        }
    }

    pub fn health(&self) -> Result<HealthResponse, ClientError> {
        let response = self
            .agent
            .get(self.url("health"))
            .call()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::parse(response)
    }

    pub fn create_session(
        &self,
        config: &RunConfig,
        trace: bool,
    ) -> Result<SessionCreated, ClientError> {
        self.post_json(
            "sessions",
            &CreateSessionRequest {
                config: config.clone(),
                trace,
            },
        )
    }

    pub fn observe(
        &self,
        session: Uuid,
        rows: Vec<Vec<f64>>,
    ) -> Result<ObserveResponse, ClientError> {
        self.post_json(&format!("sessions/{session}/observe"), &ObserveRequest { rows })
    }

    pub fn session_status(&self, session: Uuid) -> Result<SessionStatus, ClientError> {
        let response = self
            .agent
            .get(self.url(&format!("sessions/{session}")))
            .call()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::parse(response)
    }

    pub fn delete_session(&self, session: Uuid) -> Result<(), ClientError> {
        let response = self
            .agent
            .delete(self.url(&format!("sessions/{session}")))
            .call()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(ClientError::Api {
                status,
                message: format!("delete failed with status {status}"),
                row: None,
            })
        }
    }

    pub fn calibrate(&self, request: &CalibrateRequest) -> Result<ThresholdPlan, ClientError> {
        self.post_json("calibrate", request)
    }

    pub fn oracle(&self, p: Vec<usize>, n: Vec<u64>) -> Result<OracleResponse, ClientError> {
        self.post_json("oracle", &OracleRequest { p, n })
    }

    pub fn run_experiment(
        &self,
        spec: &ExperimentSpec,
        workers: Option<usize>,
    ) -> Result<ExperimentOutput, ClientError> {
        self.post_json(
            "experiments",
            &ExperimentRequest {
                spec: spec.clone(),
                workers,
            },
        )
    }

    pub fn edetect(&self, request: &EDetectRequest) -> Result<EDetectResponse, ClientError> {
        self.post_json("edetect", request)
    }
}
