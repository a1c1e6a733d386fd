//! Quadratic-cost reference: exact statistic maxima by a full scan over
//! every changepoint at every step. This is the oracle the pruned engines
//! are compared against; it deliberately re-implements the per-step
//! maximization (sorting, thresholding, per-coordinate maxima) instead of
//! sharing the engines' evaluator.

use crate::detector::{Prechange, StatConfig, StatKind};
use crate::model::ModelSpec;

use super::SimlabError;

/// Per-statistic (value, argmax τ) for one step.
#[derive(Debug, Clone)]
pub struct BruteStep {
    pub n: u64,
    pub values: Vec<(StatKind, f64, u64)>,
}

/// Exact per-step statistics for the whole prefix, O(n²) overall.
pub fn brute_force_glr(
    stream: &[Vec<f64>],
    model: &ModelSpec,
    config: &StatConfig,
) -> Result<Vec<BruteStep>, SimlabError> {
    config.validate(model)?;
    let d = model.natural_dim();
    let p = model.p();
    let n = stream.len();

    let mut prefix = vec![vec![0.0f64; d]];
    for x in stream {
        let mut next = prefix.last().unwrap().clone();
        for (a, b) in next.iter_mut().zip(x) {
            *a += b;
        }
        prefix.push(next);
    }

    let mut out = Vec::with_capacity(n);
    let mut evidences = vec![0.0f64; p];
    let mut seg = vec![0.0f64; d];
    let mut sorted = vec![0.0f64; p];
    for end in 1..=n {
        let mut best: Vec<(f64, u64)> = vec![(f64::NEG_INFINITY, 0); config.stats.len()];
        let mut coord_max = vec![f64::NEG_INFINITY; p];
        let mut coord_tau = vec![0u64; p];
        let lo = match config.prechange {
            Prechange::Known(_) => 0usize,
            Prechange::Unknown => 1,
        };
        let mut any = false;
        for tau in lo..end {
            let c2 = (end - tau) as u64;
            for k in 0..d {
                seg[k] = prefix[end][k] - prefix[tau][k];
            }
            match &config.prechange {
                Prechange::Known(eta1) => {
                    model.evidence_known(c2, &seg, eta1, &mut evidences)?;
                }
                Prechange::Unknown => {
                    model.evidence_unknown(tau as u64, &prefix[tau], c2, &seg, &mut evidences);
                }
            }
            any = true;
            for (i, &e) in evidences.iter().enumerate() {
                if e > coord_max[i] {
                    coord_max[i] = e;
                    coord_tau[i] = tau as u64;
                }
            }
            for (slot, stat) in best.iter_mut().zip(&config.stats) {
                let value = match *stat {
                    StatKind::Dense => evidences.iter().sum(),
                    StatKind::Ranked { s } => {
                        sorted.copy_from_slice(&evidences);
                        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                        sorted[..s].iter().sum()
                    }
                    StatKind::Thresholded { a } => {
                        evidences.iter().filter(|&&e| e >= a * a).sum()
                    }
                    StatKind::SumOfMax => continue,
                };
                if value > slot.0 {
                    *slot = (value, tau as u64);
                }
            }
        }
        let values = config
            .stats
            .iter()
            .zip(&best)
            .map(|(&stat, &(value, tau))| match stat {
                StatKind::SumOfMax => {
                    if any {
                        let total: f64 = coord_max.iter().sum();
                        let lead = (0..p)
                            .max_by(|&a, &b| coord_max[a].partial_cmp(&coord_max[b]).unwrap())
                            .unwrap_or(0);
                        (stat, total, coord_tau[lead])
                    } else {
                        (stat, 0.0, 0)
                    }
                }
                _ => {
                    if value == f64::NEG_INFINITY {
                        (stat, 0.0, 0)
                    } else {
                        (stat, value, tau)
                    }
                }
            })
            .collect();
        out.push(BruteStep {
            n: end as u64,
            values,
        });
    }
    Ok(out)
}
