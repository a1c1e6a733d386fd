//! Experiment harness: desk-scale Monte-Carlo measurements with a rayon
//! worker pool. Replicates are independent (one RNG stream each) and merged
//! at a single collection point, so results are identical for any worker
//! count. Run-time experiments time only `step()` calls, never generation
//! or I/O, and discard a warm-up prefix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::calibrate::{
    arl_threshold, dd_bound, DelayVariant, FalseAlarmKind, Provenance, ThresholdPlan, ThresholdRule,
};
use crate::detector::{
    decide, CandidateStore, Decision, Detector, Prechange, PruningParams, StatConfig, StatKind,
};
use crate::expectation::expected_counts;
use crate::hull::{hull_vertices, HullPoint, DEFAULT_TOL};
use crate::model::ModelSpec;

use super::{generate, SimlabError, StreamScenario};

pub const RECORD_HEADER: &str = "scenario,replicate,n,stat,value";

/// One CSV row of experiment output; summary rows leave `replicate` empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub replicate: Option<u64>,
    pub n: Option<u64>,
    pub stat: String,
    pub value: f64,
}

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.scenario,
            self.replicate.map_or(String::new(), |r| r.to_string()),
            self.n.map_or(String::new(), |n| n.to_string()),
            self.stat,
            self.value
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<ExperimentRecord>,
}

/// Desk-scale experiment families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Final hull-vertex counts of i.i.d. Gaussian runs vs the
    /// combinatorial expectation.
    Hullcount {
        p: Vec<usize>,
        n: Vec<u64>,
        replicates: usize,
        seed: u64,
    },
    /// OLS slope of log total step time against log n.
    RuntimeSlope {
        p: Vec<usize>,
        n: Vec<u64>,
        replicates: usize,
        seed: u64,
    },
    /// Empirical ever-stop frequency under time-varying false-alarm
    /// thresholds on no-change streams.
    Falsealarm {
        p: Vec<usize>,
        alpha: Vec<f64>,
        n: u64,
        replicates: usize,
        seed: u64,
    },
    /// Mean run length under a fixed ARL-calibrated threshold, censored at
    /// `cap`.
    Arl {
        p: usize,
        gamma: f64,
        cap: u64,
        replicates: usize,
        seed: u64,
    },
    /// Detection delays for a dense change against the analytic bounds.
    Add {
        p: usize,
        magnitude2: f64,
        sparsity: usize,
        tau_star: u64,
        gamma: f64,
        alpha: f64,
        cap: u64,
        replicates: usize,
        seed: u64,
    },
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, SimlabError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimlabError::Pool(e.to_string()))
}

pub fn run_experiment(
    spec: &ExperimentSpec,
    workers: usize,
) -> Result<ExperimentOutput, SimlabError> {
    let pool = pool(workers.max(1))?;
    pool.install(|| match spec {
        ExperimentSpec::Hullcount {
            p,
            n,
            replicates,
            seed,
        } => hullcount(p, n, *replicates, *seed),
        ExperimentSpec::RuntimeSlope {
            p,
            n,
            replicates,
            seed,
        } => runtime_slope(p, n, *replicates, *seed),
        ExperimentSpec::Falsealarm {
            p,
            alpha,
            n,
            replicates,
            seed,
        } => falsealarm(p, alpha, *n, *replicates, *seed),
        ExperimentSpec::Arl {
            p,
            gamma,
            cap,
            replicates,
            seed,
        } => arl(*p, *gamma, *cap, *replicates, *seed),
        ExperimentSpec::Add {
            p,
            magnitude2,
            sparsity,
            tau_star,
            gamma,
            alpha,
            cap,
            replicates,
            seed,
        } => add(
            *p, *magnitude2, *sparsity, *tau_star, *gamma, *alpha, *cap, *replicates, *seed,
        ),
    })
}

/// Exact hull-vertex count of the lifted candidate points {P(0), …, P(n−1)}
/// of one i.i.d. Gaussian replicate. The store is pruned lazily (sound:
/// retained candidates always cover the true vertex set), then one final
/// hull call over the retained points gives the exact count.
///
/// The counted set deliberately includes the origin P(0), matching the
/// candidate the detectors insert at the first step; the expectation
/// formulas agree with this convention up to O(1/(n−1)!) at the measured
/// sizes (resolved empirically in the acceptance suite).
pub fn exact_vertex_count_gaussian(
    p: usize,
    n: u64,
    seed: u64,
    replicate: u64,
) -> Result<usize, SimlabError> {
    let scenario = StreamScenario::no_change(ModelSpec::gaussian_mean(p), n, seed);
    let stream = generate(&scenario, replicate)?;
    let mut store = CandidateStore::new(2.0, 1.0, p + 2, DEFAULT_TOL)?;
    let mut running = vec![0.0f64; p];
    for (t, x) in stream.iter().enumerate() {
        store.push(t as u64, running.clone());
        for (r, v) in running.iter_mut().zip(x) {
            *r += v;
        }
        if store.needs_rebuild() {
            store.rebuild(t as u64 + 1)?;
        }
    }
    let points: Vec<HullPoint> = store
        .candidates()
        .iter()
        .map(|c| {
            let mut coords = vec![c.tau as f64];
            coords.extend_from_slice(&c.cum);
            HullPoint::new(c.tau, coords)
        })
        .collect();
    Ok(hull_vertices(&points, DEFAULT_TOL)?.len())
}

fn hullcount(
    ps: &[usize],
    ns: &[u64],
    replicates: usize,
    seed: u64,
) -> Result<ExperimentOutput, SimlabError> {
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &p in ps {
        for &n in ns {
            let scenario = format!("hullcount_p{p}_n{n}");
            let counts: Vec<usize> = (0..replicates as u64)
                .into_par_iter()
                .map(|rep| exact_vertex_count_gaussian(p, n, seed, rep))
                .collect::<Result<_, _>>()?;
            for (rep, &count) in counts.iter().enumerate() {
                records.push(ExperimentRecord {
                    scenario: scenario.clone(),
                    replicate: Some(rep as u64),
                    n: Some(n),
                    stat: "vertex_count".into(),
                    value: count as f64,
                });
            }
            let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
            let var = counts
                .iter()
                .map(|&c| (c as f64 - mean).powi(2))
                .sum::<f64>()
                / (counts.len().saturating_sub(1)).max(1) as f64;
            let stderr = (var / counts.len() as f64).sqrt();
            let (_, expected_v) = expected_counts(n, p)
                .map_err(|e| SimlabError::InvalidScenario(e.to_string()))?;
            for (stat, value) in [
                ("mean_vertex_count", mean),
                ("stderr", stderr),
                ("expected_vertices", expected_v),
            ] {
                summary.push(ExperimentRecord {
                    scenario: scenario.clone(),
                    replicate: None,
                    n: Some(n),
                    stat: stat.into(),
                    value,
                });
            }
        }
    }
    Ok(ExperimentOutput { records, summary })
}

const RUNTIME_WARMUP: u64 = 1000;

fn runtime_slope(
    ps: &[usize],
    ns: &[u64],
    replicates: usize,
    seed: u64,
) -> Result<ExperimentOutput, SimlabError> {
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &p in ps {
        let mut mean_times = Vec::new();
        for &n in ns {
            let scenario = format!("runtime_p{p}_n{n}");
            // Timing replicates run sequentially: concurrent replicates
            // would contend for cores and skew the wall-clock numbers.
            let mut times = Vec::with_capacity(replicates);
            for rep in 0..replicates as u64 {
                let stream = generate(
                    &StreamScenario::no_change(ModelSpec::gaussian_mean(p), n, seed),
                    rep,
                )?;
                let model = ModelSpec::gaussian_mean(p);
                let config = StatConfig {
                    stats: vec![StatKind::Dense],
                    prechange: Prechange::Known(vec![0.0; p]),
                };
                let mut det = Detector::new(model, config, PruningParams::default())?;
                let warmup = RUNTIME_WARMUP.min(n / 4) as usize;
                for x in &stream[..warmup] {
                    det.step(x)?;
                }
                let start = Instant::now();
                for x in &stream[warmup..] {
                    det.step(x)?;
                }
                times.push(start.elapsed().as_secs_f64());
            }
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            for (rep, &t) in times.iter().enumerate() {
                records.push(ExperimentRecord {
                    scenario: scenario.clone(),
                    replicate: Some(rep as u64),
                    n: Some(n),
                    stat: "step_time_sum_seconds".into(),
                    value: t,
                });
            }
            mean_times.push((n, mean));
        }
        let slope = log_log_slope(&mean_times);
        summary.push(ExperimentRecord {
            scenario: format!("runtime_p{p}"),
            replicate: None,
            n: None,
            stat: "log_log_slope".into(),
            value: slope,
        });
    }
    Ok(ExperimentOutput { records, summary })
}

/// OLS slope of ln(value) against ln(n).
pub(crate) fn log_log_slope(points: &[(u64, f64)]) -> f64 {
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(n, v)| ((n as f64).ln(), v.ln()))
        .collect();
    let m = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    sxy / sxx
}

/// First stop time of a detector run, or None if the stream ends first.
fn run_until_stop(
    model: ModelSpec,
    config: StatConfig,
    plan: &ThresholdPlan,
    stream: &[Vec<f64>],
) -> Result<Option<u64>, SimlabError> {
    let mut det = Detector::new(model, config, PruningParams::default())?;
    for x in stream {
        let report = det.step(x)?;
        if let Decision::Stop { .. } = decide(&report, plan)? {
            return Ok(Some(report.n));
        }
    }
    Ok(None)
}

fn falsealarm(
    ps: &[usize],
    alphas: &[f64],
    n: u64,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentOutput, SimlabError> {
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &p in ps {
        for &alpha in alphas {
            let scenario = format!("falsealarm_p{p}_alpha{alpha}");
            let plan = ThresholdPlan {
                provenance: Provenance::FalseAlarm { alpha },
                entries: vec![crate::calibrate::PlanEntry {
                    stat: StatKind::Dense,
                    rule: ThresholdRule::TimeVarying {
                        kind: FalseAlarmKind::Dense,
                        p,
                        alpha,
                    },
                }],
            };
            let stops: Vec<Option<u64>> = (0..replicates as u64)
                .into_par_iter()
                .map(|rep| {
                    let stream = generate(
                        &StreamScenario::no_change(ModelSpec::gaussian_mean(p), n, seed),
                        rep,
                    )?;
                    let config = StatConfig {
                        stats: vec![StatKind::Dense],
                        prechange: Prechange::Known(vec![0.0; p]),
                    };
                    run_until_stop(ModelSpec::gaussian_mean(p), config, &plan, &stream)
                })
                .collect::<Result<_, _>>()?;
            let mut stopped = 0usize;
            for (rep, stop) in stops.iter().enumerate() {
                records.push(ExperimentRecord {
                    scenario: scenario.clone(),
                    replicate: Some(rep as u64),
                    n: Some(n),
                    stat: "stopped".into(),
                    value: if stop.is_some() { 1.0 } else { 0.0 },
                });
                stopped += usize::from(stop.is_some());
            }
            let freq = stopped as f64 / replicates as f64;
            let stderr = (alpha * (1.0 - alpha) / replicates as f64).sqrt();
            for (stat, value) in [
                ("ever_stop_frequency", freq),
                ("alpha", alpha),
                ("binomial_stderr", stderr),
            ] {
                summary.push(ExperimentRecord {
                    scenario: scenario.clone(),
                    replicate: None,
                    n: Some(n),
                    stat: stat.into(),
                    value,
                });
            }
        }
    }
    Ok(ExperimentOutput { records, summary })
}

fn arl(
    p: usize,
    gamma: f64,
    cap: u64,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentOutput, SimlabError> {
    let scenario = format!("arl_p{p}_gamma{gamma}");
    let c = arl_threshold(p, p, gamma, 1);
    let plan = ThresholdPlan::fixed(vec![(StatKind::Dense, c)], Provenance::Arl { gamma });
    let stops: Vec<u64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let stream = generate(
                &StreamScenario::no_change(ModelSpec::gaussian_mean(p), cap, seed),
                rep,
            )?;
            let config = StatConfig {
                stats: vec![StatKind::Dense],
                prechange: Prechange::Known(vec![0.0; p]),
            };
            Ok(run_until_stop(ModelSpec::gaussian_mean(p), config, &plan, &stream)?.unwrap_or(cap))
        })
        .collect::<Result<_, SimlabError>>()?;
    let mut records = Vec::new();
    for (rep, &stop) in stops.iter().enumerate() {
        records.push(ExperimentRecord {
            scenario: scenario.clone(),
            replicate: Some(rep as u64),
            n: Some(stop),
            stat: "run_length_censored".into(),
            value: stop as f64,
        });
    }
    let mean = stops.iter().sum::<u64>() as f64 / stops.len() as f64;
    let summary = vec![
        ExperimentRecord {
            scenario: scenario.clone(),
            replicate: None,
            n: None,
            stat: "mean_run_length_censored".into(),
            value: mean,
        },
        ExperimentRecord {
            scenario,
            replicate: None,
            n: None,
            stat: "threshold".into(),
            value: c,
        },
    ];
    Ok(ExperimentOutput { records, summary })
}

#[allow(clippy::too_many_arguments)]
fn add(
    p: usize,
    magnitude2: f64,
    sparsity: usize,
    tau_star: u64,
    gamma: f64,
    alpha: f64,
    cap: u64,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentOutput, SimlabError> {
    let scenario = format!("add_p{p}_mag{magnitude2}_s{sparsity}");
    let c = arl_threshold(p, p, gamma, 1);
    let bound = dd_bound(c, p, magnitude2, alpha, DelayVariant::Centered)
        .map_err(|e| SimlabError::InvalidScenario(e.to_string()))?;
    let plan = ThresholdPlan::fixed(vec![(StatKind::Dense, c)], Provenance::Arl { gamma });
    let outcomes: Vec<(Option<u64>, bool)> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let stream = generate(
                &StreamScenario::with_change(
                    ModelSpec::gaussian_mean(p),
                    cap,
                    tau_star,
                    sparsity,
                    magnitude2,
                    seed,
                ),
                rep,
            )?;
            let config = StatConfig {
                stats: vec![StatKind::Dense],
                prechange: Prechange::Known(vec![0.0; p]),
            };
            let stop = run_until_stop(ModelSpec::gaussian_mean(p), config, &plan, &stream)?;
            let early = stop.is_some_and(|s| s <= tau_star);
            Ok((stop, early))
        })
        .collect::<Result<_, SimlabError>>()?;
    let mut records = Vec::new();
    let mut delays = Vec::new();
    let mut early = 0usize;
    for (rep, (stop, was_early)) in outcomes.iter().enumerate() {
        let delay = match (stop, was_early) {
            (Some(s), false) => {
                let d = (s - tau_star) as f64;
                delays.push(d);
                d
            }
            (Some(_), true) => {
                early += 1;
                f64::NAN
            }
            (None, _) => (cap - tau_star) as f64,
        };
        records.push(ExperimentRecord {
            scenario: scenario.clone(),
            replicate: Some(rep as u64),
            n: stop.as_ref().copied(),
            stat: "delay".into(),
            value: delay,
        });
    }
    let mean_delay = delays.iter().sum::<f64>() / delays.len().max(1) as f64;
    let within = delays.iter().filter(|&&d| d <= bound).count() as f64 / delays.len().max(1) as f64;
    let summary = vec![
        ("mean_delay", mean_delay),
        ("delay_bound", bound),
        ("fraction_within_bound", within),
        ("threshold", c),
        ("early_stops", early as f64),
    ]
    .into_iter()
    .map(|(stat, value)| ExperimentRecord {
        scenario: scenario.clone(),
        replicate: None,
        n: None,
        stat: stat.into(),
        value,
    })
    .collect();
    Ok(ExperimentOutput { records, summary })
}

/// Monte-Carlo threshold calibration for an ARL target: simulate no-change
/// streams, record each statistic's running maximum, and take the empirical
/// `quantile` (linear interpolation) of those maxima as its fixed threshold.
/// Defaults follow the run-length argument with N = 2γ and α = 1/2:
/// streams of length 2γ, median of the maxima.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_thresholds(
    model: &ModelSpec,
    config: &StatConfig,
    gamma: f64,
    stream_len: Option<u64>,
    quantile: Option<f64>,
    replicates: usize,
    seed: u64,
    workers: usize,
) -> Result<ThresholdPlan, SimlabError> {
    let stream_len = stream_len.unwrap_or((2.0 * gamma).ceil() as u64);
    let quantile = quantile.unwrap_or(0.5);
    if !(0.0..1.0).contains(&quantile) {
        return Err(SimlabError::InvalidScenario(format!(
            "quantile must be in [0, 1), got {quantile}"
        )));
    }
    let pool = pool(workers.max(1))?;
    let maxima: Vec<Vec<f64>> = pool.install(|| {
        (0..replicates as u64)
            .into_par_iter()
            .map(|rep| {
                let stream = generate(
                    &StreamScenario::no_change(model.clone(), stream_len, seed),
                    rep,
                )?;
                let mut det = Detector::new(model.clone(), config.clone(), PruningParams::default())?;
                let mut maxes = vec![f64::NEG_INFINITY; config.stats.len()];
                for x in &stream {
                    let report = det.step(x)?;
                    for (m, r) in maxes.iter_mut().zip(&report.results) {
                        *m = m.max(r.value);
                    }
                }
                Ok(maxes)
            })
            .collect::<Result<_, SimlabError>>()
    })?;
    let entries = config
        .stats
        .iter()
        .enumerate()
        .map(|(i, &stat)| {
            let mut values: Vec<f64> = maxima.iter().map(|m| m[i]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (stat, interpolated_quantile(&values, quantile))
        })
        .collect();
    Ok(ThresholdPlan::fixed(
        entries,
        Provenance::MonteCarlo {
            gamma,
            seed,
            replicates,
            stream_len,
            quantile,
        },
    ))
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m >= 1);
    let h = (m as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
