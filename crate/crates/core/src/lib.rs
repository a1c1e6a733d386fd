//! Online detection of a single changepoint in p-variate exponential-family
//! streams, built on the equivalence between likelihood-ratio maximizers and
//! convex-hull vertices of cumulative-sum points.

pub mod calibrate;
pub mod config;
pub mod detector;
pub mod dyadic;
pub mod edetector;
pub mod expectation;
pub mod simlab;
pub mod hull;
pub mod projapprox;
pub mod model;

pub use calibrate::{ThresholdPlan, ThresholdRule};
pub use config::{build_engine, Engine, EngineKind, RunConfig};
pub use detector::{
    decide, Candidate, CandidateStore, Decision, Detector, DetectorError, Prechange, PruningParams,
    StatConfig, StatKind, StatisticReport,
};
pub use expectation::expected_counts;
pub use dyadic::{chunk_bounds, DyadicDetector, DyadicStore};
pub use projapprox::{ApproxDetector, ProjectionPlan};
pub use hull::{hull_vertices, is_vertex, HullError, HullPoint, DEFAULT_TOL};
pub use model::{Family, ModelError, ModelSpec, SegmentSummary};
