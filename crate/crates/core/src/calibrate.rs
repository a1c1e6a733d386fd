//! Analytic detection thresholds and delay bounds for the Gaussian case,
//! plus the threshold-plan document consumed by the decision rule.
//!
//! Fixed thresholds calibrate the average run length; time-varying ones
//! control the probability of ever raising a false alarm. All logarithms
//! are natural.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::StatKind;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("sparsity {s} exceeds dimension {p}")]
    SparsityTooLarge { s: usize, p: usize },
    #[error("centered delay bound requires threshold c > {p_or_s}, got {c}")]
    CenteredNeedsLargeThreshold { c: f64, p_or_s: usize },
    #[error("delay is unbounded for a zero-magnitude change")]
    InfiniteDelay,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFICIENTS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_7e-7,
];

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFICIENTS[0];
    for (i, &c) in LANCZOS_COEFFICIENTS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln C(p, s) via log-gamma.
pub fn ln_choose(p: usize, s: usize) -> f64 {
    debug_assert!(s <= p);
    ln_gamma(p as f64 + 1.0) - ln_gamma(s as f64 + 1.0) - ln_gamma((p - s) as f64 + 1.0)
}

/// Fixed threshold guaranteeing an average run length of at least `gamma`
/// for the sparsity-s statistic when `m` sparsity levels are monitored:
/// `c_s(γ) = s + 2ζ + 2√(sζ)` with `ζ = 4·lnγ + s·ln p + ln m + 5·ln 2`.
/// The `s·ln p` term is omitted at s = p.
pub fn arl_threshold(s: usize, p: usize, gamma: f64, m: usize) -> f64 {
    debug_assert!(s >= 1 && s <= p && gamma > 1.0 && m >= 1);
    let sparsity_term = if s < p { s as f64 * (p as f64).ln() } else { 0.0 };
    let zeta =
        4.0 * gamma.ln() + sparsity_term + (m as f64).ln() + 5.0 * std::f64::consts::LN_2;
    s as f64 + 2.0 * zeta + 2.0 * (s as f64 * zeta).sqrt()
}

/// Statistic kinds with a false-alarm threshold formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FalseAlarmKind {
    Rank1,
    RankS { s: usize },
    Dense,
    Thresholded { a: f64 },
}

/// Time-varying threshold `c_n(α)` controlling the probability of ever
/// stopping on a no-change stream at level α, with `x_n(α) = 4·ln n − ln α`.
pub fn false_alarm_threshold(
    kind: FalseAlarmKind,
    p: usize,
    n: f64,
    alpha: f64,
) -> Result<f64, CalibrateError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CalibrateError::InvalidArgument(format!(
            "alpha must be in (0, 1], got {alpha}"
        )));
    }
    let x = 4.0 * n.ln() - alpha.ln();
    let value = match kind {
        FalseAlarmKind::Rank1 => 2.0 * x + 2.0 * (2.0 * p as f64).ln(),
        FalseAlarmKind::RankS { s } => {
            if s > p {
                return Err(CalibrateError::SparsityTooLarge { s, p });
            }
            let l = ln_choose(p, s);
            2.0 * (x + l) + 2.0 * (s as f64 * (x + l)).sqrt() + s as f64
        }
        FalseAlarmKind::Dense => {
            2.0 * x + 2.0 * (p as f64 * x).sqrt() + p as f64
        }
        FalseAlarmKind::Thresholded { a } => 4.0 * x + 6.0 * p as f64 * (-a * a / 8.0).exp(),
    };
    Ok(value)
}

/// Upper bound on the average detection delay of the dense statistic with a
/// fixed threshold `c` and change magnitude `‖δ‖²`. `thresholded` replaces c
/// by `c + p·a²` for the thresholded statistic.
pub fn add_bound(
    c: f64,
    delta_norm2: f64,
    thresholded: Option<(usize, f64)>,
) -> Result<f64, CalibrateError> {
    if !(delta_norm2 > 0.0) {
        return Err(CalibrateError::InfiniteDelay);
    }
    let c_eff = c + thresholded.map_or(0.0, |(p, a)| p as f64 * a * a);
    Ok((c_eff + delta_norm2.sqrt() * (8.0 / std::f64::consts::PI).sqrt()) / delta_norm2 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayVariant {
    Basic,
    Centered,
}

/// Probabilistic detection-delay bound at confidence 1 − α for a fixed
/// threshold `c`. The centered variant subtracts the dimension (or the
/// sparsity s, when the caller passes `‖δ^{[s]}‖²` and s).
pub fn dd_bound(
    c: f64,
    p_or_s: usize,
    delta_norm2: f64,
    alpha: f64,
    variant: DelayVariant,
) -> Result<f64, CalibrateError> {
    if !(delta_norm2 > 0.0) {
        return Err(CalibrateError::InfiniteDelay);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CalibrateError::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let value = match variant {
        DelayVariant::Basic => (2.0 * c - 8.0 * (alpha / 2.0).ln()) / delta_norm2,
        DelayVariant::Centered => {
            let k = p_or_s as f64;
            if c <= k {
                return Err(CalibrateError::CenteredNeedsLargeThreshold { c, p_or_s });
            }
            (2.0 * (c - k) + 2.0 * (k * (3.0 / alpha).ln()).sqrt() - 8.0 * (alpha / 3.0).ln())
                / delta_norm2
        }
    };
    Ok(value)
}

/// A delay guarantee attached to a statistic, for experiment reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayBound {
    pub stat: StatKind,
    pub delta_norm2: f64,
    pub alpha: f64,
    pub bound: f64,
}

/// How a plan's thresholds were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Provenance {
    Arl {
        gamma: f64,
    },
    FalseAlarm {
        alpha: f64,
    },
    MonteCarlo {
        gamma: f64,
        seed: u64,
        replicates: usize,
        stream_len: u64,
        quantile: f64,
    },
    User,
}

/// Per-statistic detection threshold: a constant, or a false-alarm curve
/// evaluated at the current time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    Fixed {
        c: f64,
    },
    TimeVarying {
        #[serde(flatten)]
        kind: FalseAlarmKind,
        p: usize,
        alpha: f64,
    },
}

impl ThresholdRule {
    pub fn value_at(&self, n: u64) -> f64 {
        match self {
            ThresholdRule::Fixed { c } => *c,
            ThresholdRule::TimeVarying { kind, p, alpha } => {
                false_alarm_threshold(*kind, *p, (n.max(2)) as f64, *alpha)
                    .expect("plan validated at construction")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub stat: StatKind,
    pub rule: ThresholdRule,
}

/// Per-statistic thresholds plus how they were derived. This is the JSON
/// document the `calibrate` command emits and `detect` consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    pub provenance: Provenance,
    pub entries: Vec<PlanEntry>,
}

impl ThresholdPlan {
    pub fn fixed(entries: Vec<(StatKind, f64)>, provenance: Provenance) -> Self {
        Self {
            provenance,
            entries: entries
                .into_iter()
                .map(|(stat, c)| PlanEntry {
                    stat,
                    rule: ThresholdRule::Fixed { c },
                })
                .collect(),
        }
    }

    pub fn rule_for(&self, stat: &StatKind) -> Option<&ThresholdRule> {
        self.entries.iter().find(|e| e.stat == *stat).map(|e| &e.rule)
    }
}
