//! Online single-changepoint engine: candidate maintenance over the convex
//! hull of cumulative-sum points, with generalized likelihood-ratio
//! statistics maximized over the retained candidates at every step.
//!
//! A candidate τ is kept as long as its lifted point (τ, Σ_{t≤τ} x_t) may be
//! a hull vertex of all such points; only those τ can maximize any of the
//! supported statistics, so pruning never changes a reported value. The hull
//! is recomputed lazily: only when the list outgrows `max_size`, which is
//! reset to ⌊α·|hull| + β⌋ after each rebuild.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::ThresholdPlan;
use crate::hull::{hull_vertices, HullError, HullPoint};
use crate::model::{ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input at coordinate {coord}")]
    NonFinite { coord: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("hull kernel failure: {0}")]
    Hull(#[from] HullError),
}

/// A putative changepoint and the cumulative natural-statistic sum up to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tau: u64,
    pub cum: Vec<f64>,
}

/// One statistic to evaluate at every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StatKind {
    /// Sum of per-coordinate evidences over all p coordinates.
    Dense,
    /// Sum of the s largest per-coordinate evidences.
    Ranked { s: usize },
    /// Sum of per-coordinate evidences at least a² (|evidence| ≥ a).
    Thresholded { a: f64 },
    /// Per-coordinate maxima over their own changepoints, summed.
    SumOfMax,
}

impl StatKind {
    pub fn id(&self) -> String {
        match self {
            StatKind::Dense => "dense".into(),
            StatKind::Ranked { s } => format!("ranked_{s}"),
            StatKind::Thresholded { a } => format!("thresholded_{a}"),
            StatKind::SumOfMax => "sum_of_max".into(),
        }
    }
}

/// Whether the pre-change natural parameter is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prechange {
    Known(Vec<f64>),
    Unknown,
}

/// Statistics to evaluate plus the pre-change regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatConfig {
    pub stats: Vec<StatKind>,
    pub prechange: Prechange,
}

impl StatConfig {
    pub fn validate(&self, model: &ModelSpec) -> Result<(), DetectorError> {
        if self.stats.is_empty() {
            return Err(DetectorError::Config("no statistics configured".into()));
        }
        let p = model.p();
        let mut ranked_seen = Vec::new();
        for stat in &self.stats {
            match *stat {
                StatKind::Ranked { s } => {
                    if s == 0 || s > p {
                        return Err(DetectorError::Config(format!(
                            "ranked sparsity {s} outside 1..={p}"
                        )));
                    }
                    if ranked_seen.contains(&s) {
                        return Err(DetectorError::Config(format!(
                            "duplicate ranked sparsity {s}"
                        )));
                    }
                    ranked_seen.push(s);
                }
                StatKind::Thresholded { a } => {
                    if !(a >= 0.0) {
                        return Err(DetectorError::Config(format!(
                            "threshold parameter a must be >= 0, got {a}"
                        )));
                    }
                }
                _ => {}
            }
            if model.has_mean_variance() && !matches!(stat, StatKind::Dense) {
                return Err(DetectorError::Config(
                    "mean+variance coordinates admit only the dense statistic".into(),
                ));
            }
        }
        if let Prechange::Known(eta) = &self.prechange {
            if eta.len() != model.natural_dim() {
                return Err(DetectorError::Config(format!(
                    "known pre-change parameter has length {}, expected {}",
                    eta.len(),
                    model.natural_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Per-statistic outcome of one step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatResult {
    pub stat: StatKind,
    pub value: f64,
    pub tau: u64,
    /// Per-coordinate squared evidences at the reported tau; for the
    /// sum-of-max statistic these are the per-coordinate maxima themselves.
    pub evidences: Vec<f64>,
}

/// Everything the engine reports after consuming one observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatisticReport {
    pub n: u64,
    pub results: Vec<StatResult>,
    pub candidate_count: usize,
}

/// Outcome of checking a report against a threshold plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    Stop {
        stat: StatKind,
        tau_hat: u64,
        value: f64,
    },
}

/// Stop at the first configured statistic whose value meets its threshold
/// (inclusive comparison); ties across statistics resolve by config order.
pub fn decide(report: &StatisticReport, plan: &ThresholdPlan) -> Result<Decision, DetectorError> {
    for result in &report.results {
        let rule = plan
            .rule_for(&result.stat)
            .ok_or_else(|| {
                DetectorError::Config(format!(
                    "threshold plan has no entry for statistic {}",
                    result.stat.id()
                ))
            })?;
        if result.value >= rule.value_at(report.n) {
            return Ok(Decision::Stop {
                stat: result.stat,
                tau_hat: result.tau,
                value: result.value,
            });
        }
    }
    Ok(Decision::Continue)
}

/// Sorted-prefix maxima of per-coordinate evidences: sorts once, then reads
/// off the best s-subset sum for every requested sparsity level.
pub fn ranked_values(evidences: &[f64], s_levels: &[usize]) -> Result<Vec<f64>, DetectorError> {
    let p = evidences.len();
    for &s in s_levels {
        if s == 0 || s > p {
            return Err(DetectorError::Config(format!(
                "ranked sparsity {s} outside 1..={p}"
            )));
        }
    }
    let mut sorted = evidences.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite evidences"));
    let mut prefix = Vec::with_capacity(p);
    let mut acc = 0.0;
    for v in &sorted {
        acc += v;
        prefix.push(acc);
    }
    Ok(s_levels.iter().map(|&s| prefix[s - 1]).collect())
}

/// Ordered candidate list with the lazy α/β rebuild schedule.
#[derive(Debug, Clone)]
pub struct CandidateStore {
    candidates: Vec<Candidate>,
    pub alpha: f64,
    pub beta: f64,
    pub max_size: usize,
    tol: f64,
}

/// What a rebuild retained and what it dropped, for soundness auditing.
#[derive(Debug, Clone)]
pub struct RebuildEvent {
    pub n: u64,
    pub retained: Vec<u64>,
    pub dropped: Vec<Candidate>,
}

impl CandidateStore {
    pub fn new(alpha: f64, beta: f64, initial_max_size: usize, tol: f64) -> Result<Self, DetectorError> {
        if !(alpha >= 1.0) {
            return Err(DetectorError::Config(format!("alpha must be >= 1, got {alpha}")));
        }
        if !(beta >= 0.0) {
            return Err(DetectorError::Config(format!("beta must be >= 0, got {beta}")));
        }
        if initial_max_size == 0 {
            return Err(DetectorError::Config("max_size must be >= 1".into()));
        }
        Ok(Self {
            candidates: Vec::new(),
            alpha,
            beta,
            max_size: initial_max_size,
            tol,
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn labels(&self) -> Vec<u64> {
        self.candidates.iter().map(|c| c.tau).collect()
    }

    /// Append a candidate; taus must arrive strictly increasing.
    pub fn push(&mut self, tau: u64, cum: Vec<f64>) {
        debug_assert!(self.candidates.last().map_or(true, |c| c.tau < tau));
        self.candidates.push(Candidate { tau, cum });
    }

    pub fn needs_rebuild(&self) -> bool {
        self.candidates.len() > self.max_size
    }

    /// Replace the list by the hull vertices of the lifted candidate points
    /// and reset `max_size`. Returns the retained/dropped split.
    pub fn rebuild(&mut self, n: u64) -> Result<RebuildEvent, DetectorError> {
        let points: Vec<HullPoint> = self
            .candidates
            .iter()
            .map(|c| {
                let mut coords = Vec::with_capacity(c.cum.len() + 1);
                coords.push(c.tau as f64);
                coords.extend_from_slice(&c.cum);
                HullPoint::new(c.tau, coords)
            })
            .collect();
        let keep = hull_vertices(&points, self.tol)?;
        let mut retained = Vec::with_capacity(keep.len());
        let mut dropped = Vec::new();
        let mut kept = Vec::with_capacity(keep.len());
        for cand in self.candidates.drain(..) {
            if keep.binary_search(&cand.tau).is_ok() {
                retained.push(cand.tau);
                kept.push(cand);
            } else {
                dropped.push(cand);
            }
        }
        self.candidates = kept;
        self.max_size = (self.alpha * self.candidates.len() as f64 + self.beta).floor() as usize;
        Ok(RebuildEvent { n, retained, dropped })
    }
}

/// Tuning for the candidate store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruningParams {
    pub alpha: f64,
    pub beta: f64,
    /// Defaults to natural dimension + 2 when absent.
    pub initial_max_size: Option<usize>,
}

impl Default for PruningParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 1.0,
            initial_max_size: None,
        }
    }
}

/// The exact online engine.
pub struct Detector {
    model: ModelSpec,
    config: StatConfig,
    store: CandidateStore,
    n: u64,
    running: Vec<f64>,
    evidence_buf: Vec<f64>,
    seg_buf: Vec<f64>,
    eval: StatEvaluator,
    rebuild_log: Option<Vec<RebuildEvent>>,
}

impl Detector {
    pub fn new(
        model: ModelSpec,
        config: StatConfig,
        params: PruningParams,
    ) -> Result<Self, DetectorError> {
        config.validate(&model)?;
        let initial = params.initial_max_size.unwrap_or(model.natural_dim() + 2);
        let store = CandidateStore::new(params.alpha, params.beta, initial, crate::hull::DEFAULT_TOL)?;
        let d = model.natural_dim();
        let p = model.p();
        let eval = StatEvaluator::new(&config, p);
        Ok(Self {
            model,
            config,
            store,
            n: 0,
            running: vec![0.0; d],
            evidence_buf: vec![0.0; p],
            seg_buf: vec![0.0; d],
            eval,
            rebuild_log: None,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn config(&self) -> &StatConfig {
        &self.config
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn candidate_count(&self) -> usize {
        self.store.len()
    }

    pub fn store(&self) -> &CandidateStore {
        &self.store
    }

    /// Keep rebuild events for auditing; drain with [`Detector::take_rebuild_events`].
    pub fn record_rebuilds(&mut self, on: bool) {
        self.rebuild_log = if on { Some(Vec::new()) } else { None };
    }

    pub fn take_rebuild_events(&mut self) -> Vec<RebuildEvent> {
        self.rebuild_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Consume one natural-statistic vector and report every configured
    /// statistic maximized over the retained candidates.
    pub fn step(&mut self, x: &[f64]) -> Result<StatisticReport, DetectorError> {
        let d = self.model.natural_dim();
        if x.len() != d {
            return Err(DetectorError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if let Some(coord) = x.iter().position(|v| !v.is_finite()) {
            return Err(DetectorError::NonFinite { coord });
        }

        self.store.push(self.n, self.running.clone());
        for (r, v) in self.running.iter_mut().zip(x) {
            *r += v;
        }
        self.n += 1;

        self.eval.begin_step();
        for ci in 0..self.store.len() {
            let cand = &self.store.candidates()[ci];
            let tau = cand.tau;
            let c2 = self.n - tau;
            for k in 0..d {
                self.seg_buf[k] = self.running[k] - cand.cum[k];
            }
            match &self.config.prechange {
                Prechange::Known(eta1) => {
                    self.model
                        .evidence_known(c2, &self.seg_buf, eta1, &mut self.evidence_buf)?;
                }
                Prechange::Unknown => {
                    if tau == 0 {
                        continue;
                    }
                    self.model
                        .evidence_unknown(tau, &cand.cum, c2, &self.seg_buf, &mut self.evidence_buf);
                }
            }
            self.eval.consume(tau, &self.evidence_buf);
        }
        let results = self.eval.finish(&self.config.stats);

        if self.store.needs_rebuild() {
            let event = self.store.rebuild(self.n)?;
            if let Some(log) = &mut self.rebuild_log {
                log.push(event);
            }
        }

        Ok(StatisticReport {
            n: self.n,
            results,
            candidate_count: self.store.len(),
        })
    }
}

/// Per-step maximization state shared by the exact, dyadic, and projection
/// engines: scans candidates in increasing tau order and keeps, for every
/// configured statistic, the running max with smallest-tau tie-breaking.
pub(crate) struct StatEvaluator {
    p: usize,
    ranked_levels: Vec<usize>,
    thresholds: Vec<f64>,
    want_dense: bool,
    want_sum_of_max: bool,
    // Running maxima (value, tau, evidences-at-argmax).
    dense: BestSlot,
    ranked: Vec<BestSlot>,
    thresholded: Vec<BestSlot>,
    per_coord_max: Vec<f64>,
    per_coord_tau: Vec<u64>,
    sorted_buf: Vec<f64>,
    any_candidate: bool,
}

struct BestSlot {
    value: f64,
    tau: u64,
    evidences: Vec<f64>,
}

impl BestSlot {
    fn new(p: usize) -> Self {
        Self {
            value: f64::NEG_INFINITY,
            tau: 0,
            evidences: vec![0.0; p],
        }
    }
    fn reset(&mut self) {
        self.value = f64::NEG_INFINITY;
        self.tau = 0;
    }
    fn offer(&mut self, value: f64, tau: u64, evidences: &[f64]) {
        if value > self.value {
            self.value = value;
            self.tau = tau;
            self.evidences.copy_from_slice(evidences);
        }
    }
}

impl StatEvaluator {
    pub(crate) fn new(config: &StatConfig, p: usize) -> Self {
        let ranked_levels: Vec<usize> = config
            .stats
            .iter()
            .filter_map(|s| match s {
                StatKind::Ranked { s } => Some(*s),
                _ => None,
            })
            .collect();
        let thresholds: Vec<f64> = config
            .stats
            .iter()
            .filter_map(|s| match s {
                StatKind::Thresholded { a } => Some(*a),
                _ => None,
            })
            .collect();
        Self {
            p,
            ranked: ranked_levels.iter().map(|_| BestSlot::new(p)).collect(),
            thresholded: thresholds.iter().map(|_| BestSlot::new(p)).collect(),
            ranked_levels,
            thresholds,
            want_dense: config.stats.contains(&StatKind::Dense),
            want_sum_of_max: config.stats.contains(&StatKind::SumOfMax),
            dense: BestSlot::new(p),
            per_coord_max: vec![f64::NEG_INFINITY; p],
            per_coord_tau: vec![0; p],
            sorted_buf: vec![0.0; p],
            any_candidate: false,
        }
    }

    pub(crate) fn begin_step(&mut self) {
        self.dense.reset();
        for slot in &mut self.ranked {
            slot.reset();
        }
        for slot in &mut self.thresholded {
            slot.reset();
        }
        self.per_coord_max.fill(f64::NEG_INFINITY);
        self.per_coord_tau.fill(0);
        self.any_candidate = false;
    }

    pub(crate) fn consume(&mut self, tau: u64, evidences: &[f64]) {
        self.any_candidate = true;
        if self.want_dense {
            let sum: f64 = evidences.iter().sum();
            self.dense.offer(sum, tau, evidences);
        }
        if !self.ranked_levels.is_empty() {
            self.sorted_buf.copy_from_slice(evidences);
            self.sorted_buf
                .sort_by(|a, b| b.partial_cmp(a).expect("finite evidences"));
            for (slot, &s) in self.ranked.iter_mut().zip(&self.ranked_levels) {
                let sum: f64 = self.sorted_buf[..s].iter().sum();
                slot.offer(sum, tau, evidences);
            }
        }
        for (slot, &a) in self.thresholded.iter_mut().zip(&self.thresholds) {
            let cut = a * a;
            let sum: f64 = evidences.iter().filter(|&&e| e >= cut).sum();
            slot.offer(sum, tau, evidences);
        }
        if self.want_sum_of_max {
            for (i, &e) in evidences.iter().enumerate() {
                if e > self.per_coord_max[i] {
                    self.per_coord_max[i] = e;
                    self.per_coord_tau[i] = tau;
                }
            }
        }
    }

    pub(crate) fn finish(&mut self, stats: &[StatKind]) -> Vec<StatResult> {
        let mut ranked_idx = 0;
        let mut thr_idx = 0;
        stats
            .iter()
            .map(|&stat| {
                let (value, tau, evidences) = match stat {
                    StatKind::Dense => self.slot_output(&self.dense),
                    StatKind::Ranked { .. } => {
                        let out = self.slot_output(&self.ranked[ranked_idx]);
                        ranked_idx += 1;
                        out
                    }
                    StatKind::Thresholded { .. } => {
                        let out = self.slot_output(&self.thresholded[thr_idx]);
                        thr_idx += 1;
                        out
                    }
                    StatKind::SumOfMax => {
                        if self.any_candidate {
                            let value = self.per_coord_max.iter().sum();
                            // Report the changepoint of the strongest coordinate.
                            let lead = (0..self.p)
                                .max_by(|&a, &b| {
                                    self.per_coord_max[a]
                                        .partial_cmp(&self.per_coord_max[b])
                                        .unwrap()
                                })
                                .unwrap_or(0);
                            (value, self.per_coord_tau[lead], self.per_coord_max.clone())
                        } else {
                            (0.0, 0, vec![0.0; self.p])
                        }
                    }
                };
                StatResult {
                    stat,
                    value,
                    tau,
                    evidences,
                }
            })
            .collect()
    }

    fn slot_output(&self, slot: &BestSlot) -> (f64, u64, Vec<f64>) {
        if slot.value == f64::NEG_INFINITY {
            // No admissible candidate yet (first step under unknown pre-change).
            (0.0, 0, vec![0.0; self.p])
        } else {
            (slot.value, slot.tau, slot.evidences.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{Provenance, ThresholdPlan};
    use crate::model::Family;

    fn known_gaussian(p: usize, stats: Vec<StatKind>) -> Detector {
        let model = ModelSpec::gaussian_mean(p);
        let config = StatConfig {
            stats,
            prechange: Prechange::Known(vec![0.0; p]),
        };
        Detector::new(model, config, PruningParams::default()).unwrap()
    }

    fn unknown_gaussian(p: usize, stats: Vec<StatKind>) -> Detector {
        let model = ModelSpec::gaussian_mean(p);
        let config = StatConfig {
            stats,
            prechange: Prechange::Unknown,
        };
        Detector::new(model, config, PruningParams::default()).unwrap()
    }

    #[test]
    fn zero_stream_has_zero_dense() {
        let mut det = known_gaussian(1, vec![StatKind::Dense]);
        for _ in 0..3 {
            let report = det.step(&[0.0]).unwrap();
            assert_eq!(report.results[0].value, 0.0);
        }
    }

    #[test]
    fn two_ones_known_mean_zero() {
        let mut det = known_gaussian(1, vec![StatKind::Dense]);
        det.step(&[1.0]).unwrap();
        let report = det.step(&[1.0]).unwrap();
        let dense = &report.results[0];
        assert!((dense.value - 2.0).abs() < 1e-12);
        assert_eq!(dense.tau, 0);
    }

    #[test]
    fn unknown_mean_two_step_example() {
        let mut det = unknown_gaussian(2, vec![StatKind::Dense, StatKind::Ranked { s: 1 }]);
        det.step(&[0.0, 0.0]).unwrap();
        let report = det.step(&[2.0, 0.0]).unwrap();
        let dense = &report.results[0];
        assert!((dense.value - 2.0).abs() < 1e-12, "value {}", dense.value);
        assert_eq!(dense.tau, 1);
        let ranked1 = &report.results[1];
        assert!((ranked1.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ranked_values_examples() {
        assert_eq!(ranked_values(&[4.0, 1.0], &[1, 2]).unwrap(), vec![4.0, 5.0]);
        assert_eq!(ranked_values(&[0.0, 0.0, 0.0], &[2]).unwrap(), vec![0.0]);
        assert!(ranked_values(&[1.0], &[2]).is_err());
    }

    #[test]
    fn ranked_values_match_subset_enumeration() {
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 10.0
        };
        let evidences: Vec<f64> = (0..10).map(|_| next()).collect();
        let levels: Vec<usize> = (1..=10).collect();
        let got = ranked_values(&evidences, &levels).unwrap();
        for (idx, &s) in levels.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..1024 {
                if mask.count_ones() as usize == s {
                    let sum: f64 = (0..10)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| evidences[i])
                        .sum();
                    best = best.max(sum);
                }
            }
            assert!((got[idx] - best).abs() < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn decide_examples() {
        let report = StatisticReport {
            n: 5,
            results: vec![StatResult {
                stat: StatKind::Dense,
                value: 0.0,
                tau: 0,
                evidences: vec![0.0],
            }],
            candidate_count: 1,
        };
        let plan = ThresholdPlan::fixed(vec![(StatKind::Dense, 1.0)], Provenance::User);
        assert_eq!(decide(&report, &plan).unwrap(), Decision::Continue);

        let report = StatisticReport {
            n: 5,
            results: vec![StatResult {
                stat: StatKind::Dense,
                value: 10.0,
                tau: 2,
                evidences: vec![10.0],
            }],
            candidate_count: 1,
        };
        let plan = ThresholdPlan::fixed(vec![(StatKind::Dense, 10.0)], Provenance::User);
        match decide(&report, &plan).unwrap() {
            Decision::Stop { tau_hat, value, .. } => {
                assert_eq!(tau_hat, 2);
                assert_eq!(value, 10.0);
            }
            other => panic!("expected stop, got {other:?}"),
        }
    }

    #[test]
    fn decide_resolves_ties_by_config_order() {
        let mk = |stat, value| StatResult {
            stat,
            value,
            tau: 1,
            evidences: vec![value],
        };
        let report = StatisticReport {
            n: 9,
            results: vec![
                mk(StatKind::Dense, 5.0),
                mk(StatKind::Ranked { s: 1 }, 12.0),
                mk(StatKind::SumOfMax, 12.0),
            ],
            candidate_count: 3,
        };
        let plan = ThresholdPlan::fixed(
            vec![
                (StatKind::Dense, 10.0),
                (StatKind::Ranked { s: 1 }, 11.0),
                (StatKind::SumOfMax, 11.0),
            ],
            Provenance::User,
        );
        match decide(&report, &plan).unwrap() {
            Decision::Stop { stat, .. } => assert_eq!(stat, StatKind::Ranked { s: 1 }),
            other => panic!("expected stop, got {other:?}"),
        }
    }

    #[test]
    fn decide_missing_threshold_is_config_error() {
        let report = StatisticReport {
            n: 2,
            results: vec![StatResult {
                stat: StatKind::SumOfMax,
                value: 1.0,
                tau: 0,
                evidences: vec![1.0],
            }],
            candidate_count: 1,
        };
        let plan = ThresholdPlan::fixed(vec![(StatKind::Dense, 1.0)], Provenance::User);
        assert!(decide(&report, &plan).is_err());
    }

    #[test]
    fn config_validation() {
        let model = ModelSpec::gaussian_mean(2);
        let bad = StatConfig {
            stats: vec![StatKind::Ranked { s: 3 }],
            prechange: Prechange::Unknown,
        };
        assert!(bad.validate(&model).is_err());

        let mv = ModelSpec::homogeneous(Family::GaussianMeanVariance { var_floor: 1.0 }, 1).unwrap();
        let sparse = StatConfig {
            stats: vec![StatKind::Ranked { s: 1 }],
            prechange: Prechange::Unknown,
        };
        assert!(sparse.validate(&mv).is_err());
        let dense = StatConfig {
            stats: vec![StatKind::Dense],
            prechange: Prechange::Unknown,
        };
        assert!(dense.validate(&mv).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        let mut det = known_gaussian(2, vec![StatKind::Dense]);
        assert!(matches!(
            det.step(&[1.0]),
            Err(DetectorError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            det.step(&[1.0, f64::NAN]),
            Err(DetectorError::NonFinite { coord: 1 })
        ));
    }

    /// Brute-force reference over all τ from full prefix sums.
    fn brute_dense(xs: &[Vec<f64>], prechange: &Prechange, model: &ModelSpec) -> Vec<(f64, u64)> {
        let p = model.p();
        let n = xs.len();
        let d = model.natural_dim();
        let mut prefix = vec![vec![0.0; d]];
        for x in xs {
            let mut next = prefix.last().unwrap().clone();
            for (a, b) in next.iter_mut().zip(x) {
                *a += b;
            }
            prefix.push(next);
        }
        let mut out = Vec::new();
        for end in 1..=n {
            let mut best = f64::NEG_INFINITY;
            let mut best_tau = 0u64;
            let lo = match prechange {
                Prechange::Known(_) => 0usize,
                Prechange::Unknown => 1,
            };
            for tau in lo..end {
                let c2 = (end - tau) as u64;
                let seg: Vec<f64> = (0..d).map(|k| prefix[end][k] - prefix[tau][k]).collect();
                let mut ev = vec![0.0; p];
                match prechange {
                    Prechange::Known(eta) => {
                        model.evidence_known(c2, &seg, eta, &mut ev).unwrap();
                    }
                    Prechange::Unknown => {
                        model.evidence_unknown(tau as u64, &prefix[tau], c2, &seg, &mut ev);
                    }
                }
                let sum: f64 = ev.iter().sum();
                if sum > best {
                    best = sum;
                    best_tau = tau as u64;
                }
            }
            if best == f64::NEG_INFINITY {
                best = 0.0;
            }
            out.push((best, best_tau));
        }
        out
    }

    #[test]
    fn dense_matches_brute_force_on_short_streams() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for prechange in [Prechange::Known(vec![0.0, 0.0]), Prechange::Unknown] {
            let model = ModelSpec::gaussian_mean(2);
            let config = StatConfig {
                stats: vec![StatKind::Dense],
                prechange: prechange.clone(),
            };
            let mut det = Detector::new(model.clone(), config, PruningParams::default()).unwrap();
            let xs: Vec<Vec<f64>> = (0..200)
                .map(|i| {
                    let shift = if i >= 150 { 1.2 } else { 0.0 };
                    vec![next() + shift, next()]
                })
                .collect();
            let oracle = brute_dense(&xs, &prechange, &det.model().clone());
            for (i, x) in xs.iter().enumerate() {
                let report = det.step(x).unwrap();
                let dense = &report.results[0];
                assert!(
                    (dense.value - oracle[i].0).abs() < 1e-9,
                    "step {i}: engine {} oracle {}",
                    dense.value,
                    oracle[i].0
                );
                assert_eq!(dense.tau, oracle[i].1, "step {i}");
            }
        }
    }

    #[test]
    fn statistic_orderings_hold_on_random_streams() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let stats = vec![
            StatKind::Dense,
            StatKind::Ranked { s: 1 },
            StatKind::Ranked { s: 2 },
            StatKind::Ranked { s: 3 },
            StatKind::Thresholded { a: 0.0 },
            StatKind::SumOfMax,
        ];
        let mut det = known_gaussian(3, stats);
        for _ in 0..120 {
            let x = [next(), next(), next()];
            let report = det.step(&x).unwrap();
            let by_id: std::collections::HashMap<String, f64> = report
                .results
                .iter()
                .map(|r| (r.stat.id(), r.value))
                .collect();
            let dense = by_id["dense"];
            assert!(by_id["ranked_1"] <= by_id["ranked_2"] + 1e-12);
            assert!(by_id["ranked_2"] <= by_id["ranked_3"] + 1e-12);
            assert!((by_id["ranked_3"] - dense).abs() < 1e-12);
            assert!((by_id["thresholded_0"] - dense).abs() < 1e-12);
            assert!(by_id["sum_of_max"] >= dense - 1e-12);
            for r in &report.results {
                assert!(r.value >= -1e-12);
                assert!(r.tau < report.n);
            }
        }
    }

    #[test]
    fn unknown_statistics_are_shift_invariant() {
        let mut state = 1234u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let xs: Vec<[f64; 2]> = (0..150).map(|_| [next(), next()]).collect();
        let shift = [3.7, -1.9];

        let mut base = unknown_gaussian(2, vec![StatKind::Dense]);
        let mut shifted = unknown_gaussian(2, vec![StatKind::Dense]);
        for x in &xs {
            let a = base.step(x).unwrap();
            let b = shifted.step(&[x[0] + shift[0], x[1] + shift[1]]).unwrap();
            assert!((a.results[0].value - b.results[0].value).abs() < 1e-9);
            assert_eq!(a.results[0].tau, b.results[0].tau);
        }

        // Positive scaling: argmax unchanged, value scales by the square.
        let mut base = unknown_gaussian(2, vec![StatKind::Dense]);
        let mut scaled = unknown_gaussian(2, vec![StatKind::Dense]);
        for x in &xs {
            let a = base.step(x).unwrap();
            let b = scaled.step(&[2.5 * x[0], 2.5 * x[1]]).unwrap();
            assert_eq!(a.results[0].tau, b.results[0].tau);
            assert!((b.results[0].value - 6.25 * a.results[0].value).abs() < 1e-8);
        }
    }

    #[test]
    fn store_size_respects_schedule() {
        let mut det = known_gaussian(1, vec![StatKind::Dense]);
        let mut state = 5u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..500 {
            det.step(&[next()]).unwrap();
            assert!(det.store().len() <= det.store().max_size + 1);
        }
    }

    #[test]
    fn rebuilds_never_drop_true_hull_vertices() {
        let mut det = known_gaussian(2, vec![StatKind::Dense]);
        det.record_rebuilds(true);
        let mut state = 77u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut all_points: Vec<HullPoint> = Vec::new();
        let mut cum = [0.0f64; 2];
        for step in 0..300 {
            all_points.push(HullPoint::new(
                step as u64,
                vec![step as f64, cum[0], cum[1]],
            ));
            let x = [next(), next()];
            cum[0] += x[0];
            cum[1] += x[1];
            det.step(&x).unwrap();
            for event in det.take_rebuild_events() {
                let exact = hull_vertices(&all_points, crate::hull::DEFAULT_TOL).unwrap();
                for tau in exact {
                    assert!(
                        event.retained.contains(&tau),
                        "rebuild at n={} dropped true vertex {tau}",
                        event.n
                    );
                }
            }
        }
    }
}
