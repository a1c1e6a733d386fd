//! Projection approximation for high-dimensional streams: maintain hulls of
//! low-dimensional coordinate projections and take the union of their vertex
//! labels as the candidate set. Statistics are still evaluated on
//! full-dimension segment summaries, so reported values never exceed the
//! exact engine's (the candidate set is a subset of all changepoints).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{
    DetectorError, Prechange, PruningParams, StatConfig, StatEvaluator, StatisticReport,
};
use crate::hull::{hull_vertices, HullPoint};
use crate::model::ModelSpec;

/// Ordered coordinate subsets (zero-based indices into the natural-statistic
/// vector), each maintaining its own pruned candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionPlan {
    pub subsets: Vec<Vec<usize>>,
}

impl ProjectionPlan {
    /// Consecutive blocks of size `p_tilde`; the last block may be ragged.
    pub fn default_plan(dim: usize, p_tilde: usize) -> Result<Self, DetectorError> {
        if p_tilde == 0 || p_tilde > dim {
            return Err(DetectorError::Config(format!(
                "p_tilde must be in 1..={dim}, got {p_tilde}"
            )));
        }
        let subsets = (0..dim)
            .step_by(p_tilde)
            .map(|start| (start..(start + p_tilde).min(dim)).collect())
            .collect();
        Ok(Self { subsets })
    }

    pub fn validate(&self, dim: usize) -> Result<(), DetectorError> {
        if self.subsets.is_empty() {
            return Err(DetectorError::Config("projection plan has no subsets".into()));
        }
        let mut covered = vec![false; dim];
        for subset in &self.subsets {
            if subset.is_empty() {
                return Err(DetectorError::Config("empty projection subset".into()));
            }
            for &c in subset {
                if c >= dim {
                    return Err(DetectorError::Config(format!(
                        "projection coordinate {c} outside 0..{dim}"
                    )));
                }
                covered[c] = true;
            }
        }
        if let Some(missing) = covered.iter().position(|&c| !c) {
            return Err(DetectorError::Config(format!(
                "coordinate {missing} not covered by any projection subset"
            )));
        }
        Ok(())
    }

    pub fn max_subset_len(&self) -> usize {
        self.subsets.iter().map(Vec::len).max().unwrap_or(0)
    }
}

struct SubsetStore {
    coords: Vec<usize>,
    labels: Vec<u64>,
    max_size: usize,
}

/// Approximate engine: per-subset pruned stores over a shared label → full
/// cumulative-sum map.
pub struct ApproxDetector {
    model: ModelSpec,
    config: StatConfig,
    plan: ProjectionPlan,
    subsets: Vec<SubsetStore>,
    /// label → (full cumulative sums, number of subsets retaining it)
    cums: BTreeMap<u64, (Vec<f64>, u32)>,
    alpha: f64,
    beta: f64,
    n: u64,
    running: Vec<f64>,
    evidence_buf: Vec<f64>,
    seg_buf: Vec<f64>,
    eval: StatEvaluator,
    tol: f64,
}

impl ApproxDetector {
    pub fn new(
        model: ModelSpec,
        config: StatConfig,
        plan: ProjectionPlan,
        params: PruningParams,
    ) -> Result<Self, DetectorError> {
        config.validate(&model)?;
        let d = model.natural_dim();
        plan.validate(d)?;
        if !(params.alpha >= 1.0) {
            return Err(DetectorError::Config(format!(
                "alpha must be >= 1, got {}",
                params.alpha
            )));
        }
        if !(params.beta >= 0.0) {
            return Err(DetectorError::Config(format!(
                "beta must be >= 0, got {}",
                params.beta
            )));
        }
        // Every subset starts with the same budget: block width + 2.
        let init = params
            .initial_max_size
            .unwrap_or(plan.max_subset_len() + 2);
        let subsets = plan
            .subsets
            .iter()
            .map(|coords| SubsetStore {
                coords: coords.clone(),
                labels: Vec::new(),
                max_size: init,
            })
            .collect();
        let p = model.p();
        let eval = StatEvaluator::new(&config, p);
        Ok(Self {
            model,
            config,
            plan,
            subsets,
            cums: BTreeMap::new(),
            alpha: params.alpha,
            beta: params.beta,
            n: 0,
            running: vec![0.0; d],
            evidence_buf: vec![0.0; p],
            seg_buf: vec![0.0; d],
            eval,
            tol: crate::hull::DEFAULT_TOL,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Distinct labels currently stored across all subsets.
    pub fn candidate_count(&self) -> usize {
        self.cums.len()
    }

    /// Sum of per-subset list lengths (counts shared labels once per subset).
    pub fn total_subset_labels(&self) -> usize {
        self.subsets.iter().map(|s| s.labels.len()).sum()
    }

    pub fn plan(&self) -> &ProjectionPlan {
        &self.plan
    }

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

        let tau = self.n;
        self.cums
            .insert(tau, (self.running.clone(), self.subsets.len() as u32));
        for store in &mut self.subsets {
            store.labels.push(tau);
        }
        for (r, v) in self.running.iter_mut().zip(x) {
            *r += v;
        }
        self.n += 1;

        // Maximize over the union of subset candidates, full summaries.
        self.eval.begin_step();
        for (&tau, (cum, _)) in &self.cums {
            let c2 = self.n - tau;
            for k in 0..d {
                self.seg_buf[k] = self.running[k] - cum[k];
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
                        .evidence_unknown(tau, cum, c2, &self.seg_buf, &mut self.evidence_buf);
                }
            }
            self.eval.consume(tau, &self.evidence_buf);
        }
        let results = self.eval.finish(&self.config.stats);

        // Per-subset pruning on projected points.
        for si in 0..self.subsets.len() {
            if self.subsets[si].labels.len() <= self.subsets[si].max_size {
                continue;
            }
            let store = &self.subsets[si];
            let points: Vec<HullPoint> = store
                .labels
                .iter()
                .map(|&l| {
                    let cum = &self.cums[&l].0;
                    let mut coords = Vec::with_capacity(store.coords.len() + 1);
                    coords.push(l as f64);
                    coords.extend(store.coords.iter().map(|&c| cum[c]));
                    HullPoint::new(l, coords)
                })
                .collect();
            let keep = hull_vertices(&points, self.tol)?;
            let store = &mut self.subsets[si];
            let old = std::mem::take(&mut store.labels);
            for label in old {
                if keep.binary_search(&label).is_ok() {
                    store.labels.push(label);
                } else {
                    let entry = self.cums.get_mut(&label).expect("stored label has a sum");
                    entry.1 -= 1;
                    if entry.1 == 0 {
                        self.cums.remove(&label);
                    }
                }
            }
            store.max_size = (self.alpha * store.labels.len() as f64 + self.beta).floor() as usize;
        }

        Ok(StatisticReport {
            n: self.n,
            results,
            candidate_count: self.cums.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{Detector, StatKind};

    #[test]
    fn default_plan_blocks() {
        assert_eq!(
            ProjectionPlan::default_plan(4, 2).unwrap().subsets,
            vec![vec![0, 1], vec![2, 3]]
        );
        assert_eq!(
            ProjectionPlan::default_plan(5, 2).unwrap().subsets,
            vec![vec![0, 1], vec![2, 3], vec![4]]
        );
        assert_eq!(
            ProjectionPlan::default_plan(3, 3).unwrap().subsets,
            vec![vec![0, 1, 2]]
        );
        assert!(ProjectionPlan::default_plan(3, 4).is_err());
    }

    #[test]
    fn plan_validation_catches_gaps() {
        let plan = ProjectionPlan {
            subsets: vec![vec![0], vec![2]],
        };
        assert!(plan.validate(3).is_err());
        let plan = ProjectionPlan {
            subsets: vec![vec![0, 1], vec![2]],
        };
        assert!(plan.validate(3).is_ok());
    }

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    #[test]
    fn single_block_degenerates_to_exact() {
        let mut next = rng(404);
        for prechange in [Prechange::Known(vec![0.0; 3]), Prechange::Unknown] {
            let model = ModelSpec::gaussian_mean(3);
            let config = StatConfig {
                stats: vec![StatKind::Dense, StatKind::Ranked { s: 2 }],
                prechange,
            };
            let plan = ProjectionPlan::default_plan(3, 3).unwrap();
            let mut exact =
                Detector::new(model.clone(), config.clone(), PruningParams::default()).unwrap();
            let mut approx =
                ApproxDetector::new(model, config, plan, PruningParams::default()).unwrap();
            for i in 0..500 {
                let shift = if i >= 350 { 1.0 } else { 0.0 };
                let x = [next() + shift, next(), next()];
                let a = exact.step(&x).unwrap();
                let b = approx.step(&x).unwrap();
                for (ra, rb) in a.results.iter().zip(&b.results) {
                    assert!(
                        (ra.value - rb.value).abs() < 1e-9,
                        "step {i} stat {}",
                        ra.stat.id()
                    );
                    assert_eq!(ra.tau, rb.tau, "step {i}");
                }
            }
        }
    }

    #[test]
    fn approx_never_exceeds_exact() {
        let mut next = rng(777);
        let model = ModelSpec::gaussian_mean(4);
        let config = StatConfig {
            stats: vec![StatKind::Dense, StatKind::SumOfMax],
            prechange: Prechange::Unknown,
        };
        let plan = ProjectionPlan::default_plan(4, 2).unwrap();
        let mut exact = Detector::new(model.clone(), config.clone(), PruningParams::default()).unwrap();
        let mut approx = ApproxDetector::new(model, config, plan, PruningParams::default()).unwrap();
        for i in 0..500 {
            let shift = if i >= 300 { 0.7 } else { 0.0 };
            let x = [next() + shift, next() + shift, next(), next()];
            let a = exact.step(&x).unwrap();
            let b = approx.step(&x).unwrap();
            for (ra, rb) in a.results.iter().zip(&b.results) {
                assert!(
                    rb.value <= ra.value + 1e-9,
                    "step {i} stat {}: approx {} > exact {}",
                    ra.stat.id(),
                    rb.value,
                    ra.value
                );
            }
        }
    }

    #[test]
    fn zero_stream_is_zero() {
        let model = ModelSpec::gaussian_mean(4);
        let config = StatConfig {
            stats: vec![StatKind::Dense],
            prechange: Prechange::Known(vec![0.0; 4]),
        };
        let plan = ProjectionPlan::default_plan(4, 2).unwrap();
        let mut approx = ApproxDetector::new(model, config, plan, PruningParams::default()).unwrap();
        for _ in 0..50 {
            let r = approx.step(&[0.0; 4]).unwrap();
            assert_eq!(r.results[0].value, 0.0);
        }
    }

    #[test]
    fn refcounts_keep_shared_labels_alive() {
        let mut next = rng(2024);
        let model = ModelSpec::gaussian_mean(4);
        let config = StatConfig {
            stats: vec![StatKind::Dense],
            prechange: Prechange::Known(vec![0.0; 4]),
        };
        let plan = ProjectionPlan::default_plan(4, 2).unwrap();
        let mut approx = ApproxDetector::new(model, config, plan, PruningParams::default()).unwrap();
        for _ in 0..300 {
            approx.step(&[next(), next(), next(), next()]).unwrap();
            // The shared map holds exactly the union of subset labels.
            let mut union: Vec<u64> = approx
                .subsets
                .iter()
                .flat_map(|s| s.labels.iter().copied())
                .collect();
            union.sort_unstable();
            union.dedup();
            let stored: Vec<u64> = approx.cums.keys().copied().collect();
            assert_eq!(union, stored);
            // Budget: total stored labels <= sum of per-subset budgets.
            let budget: usize = approx.subsets.iter().map(|s| s.max_size + 1).sum();
            assert!(approx.total_subset_labels() <= budget);
        }
    }
}
