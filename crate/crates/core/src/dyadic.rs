//! Candidate maintenance with deterministic dyadic chunk hulls.
//!
//! Instead of the stochastic lazy-rebuild schedule, the candidate set is
//! kept as a union of convex-hull vertex sets over binary chunks of the
//! label axis, merged online whenever the just-inserted label is divisible
//! by a power of two. Statistic values are identical to the exact engine's;
//! only the pruning schedule differs, and it admits a quasi-linear expected
//! complexity bound.

use crate::detector::{
    Candidate, DetectorError, Prechange, PruningParams, StatConfig, StatEvaluator, StatisticReport,
};
use crate::hull::{hull_vertices, HullPoint};
use crate::model::ModelSpec;

/// Half-open-from-below label interval `(lo, hi]` of the dyadic chunk at
/// scale `q` for time `n`: the block of labels whose hull is stored once the
/// first `n - 1` labels have been processed. Derived from the binary
/// decomposition of `n - 1`; empty when bit `q` of `n - 1` is clear.
pub fn chunk_bounds(n: u64, q: u32) -> Result<std::ops::Range<u64>, DetectorError> {
    if n < 2 {
        return Err(DetectorError::Config(format!("chunk_bounds requires n >= 2, got {n}")));
    }
    let m = n - 1;
    let max_q = 63 - m.leading_zeros();
    if q > max_q {
        return Err(DetectorError::Config(format!(
            "scale q = {q} out of range 0..={max_q} for n = {n}"
        )));
    }
    let hi = (m >> q) << q;
    let lo = (m >> (q + 1)) << (q + 1);
    Ok(lo + 1..hi + 1)
}

/// Ordered candidate list pruned by dyadic chunk hulls.
#[derive(Debug, Clone)]
pub struct DyadicStore {
    pub q_min: u32,
    candidates: Vec<Candidate>,
    lift_dim: usize,
    tol: f64,
}

impl DyadicStore {
    pub fn new(q_min: u32, lift_dim: usize, tol: f64) -> Result<Self, DetectorError> {
        if q_min == 0 || q_min > 62 {
            return Err(DetectorError::Config(format!(
                "q_min must be in 1..=62, got {q_min}"
            )));
        }
        Ok(Self {
            q_min,
            candidates: Vec::new(),
            lift_dim,
            tol,
        })
    }

    /// Default scale: natural dimension plus five.
    pub fn default_q_min(natural_dim: usize) -> u32 {
        (natural_dim + 5) as u32
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

    /// Insert the next label and merge trailing chunks: while 2^q divides
    /// the label, the tail of labels above `label − 2^q` is replaced by the
    /// hull vertices of its points, for q = q_min, q_min+1, …
    ///
    /// Tails of at most `lift_dim + 1` points are kept as-is; they cannot
    /// enclose volume in the lifted space, so every point may be a vertex.
    pub fn insert_and_merge(&mut self, label: u64, cum: Vec<f64>) -> Result<(), DetectorError> {
        debug_assert!(self.candidates.last().map_or(true, |c| c.tau < label));
        self.candidates.push(Candidate { tau: label, cum });
        if label == 0 {
            return Ok(());
        }
        let mut q = self.q_min;
        while label % (1u64 << q) == 0 && label >= (1u64 << q) {
            let cut = label - (1u64 << q);
            let start = self.candidates.partition_point(|c| c.tau <= cut);
            let tail = &self.candidates[start..];
            if tail.len() > self.lift_dim + 1 {
                let points: Vec<HullPoint> = tail
                    .iter()
                    .map(|c| {
                        let mut coords = Vec::with_capacity(c.cum.len() + 1);
                        coords.push(c.tau as f64);
                        coords.extend_from_slice(&c.cum);
                        HullPoint::new(c.tau, coords)
                    })
                    .collect();
                let keep = hull_vertices(&points, self.tol)?;
                let mut kept: Vec<Candidate> = self
                    .candidates
                    .drain(start..)
                    .filter(|c| keep.binary_search(&c.tau).is_ok())
                    .collect();
                self.candidates.append(&mut kept);
            }
            q += 1;
        }
        Ok(())
    }
}

/// The dyadic online engine: same statistics as [`crate::Detector`], dyadic
/// candidate updates.
pub struct DyadicDetector {
    model: ModelSpec,
    config: StatConfig,
    store: DyadicStore,
    n: u64,
    running: Vec<f64>,
    evidence_buf: Vec<f64>,
    seg_buf: Vec<f64>,
    eval: StatEvaluator,
}

impl DyadicDetector {
    pub fn new(
        model: ModelSpec,
        config: StatConfig,
        q_min: Option<u32>,
    ) -> Result<Self, DetectorError> {
        config.validate(&model)?;
        let d = model.natural_dim();
        let q_min = q_min.unwrap_or_else(|| DyadicStore::default_q_min(d));
        let store = DyadicStore::new(q_min, d + 1, crate::hull::DEFAULT_TOL)?;
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
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn candidate_count(&self) -> usize {
        self.store.len()
    }

    pub fn store(&self) -> &DyadicStore {
        &self.store
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

        self.store.insert_and_merge(self.n, self.running.clone())?;
        for (r, v) in self.running.iter_mut().zip(x) {
            *r += v;
        }
        self.n += 1;

        self.eval.begin_step();
        for cand in self.store.candidates() {
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
        Ok(StatisticReport {
            n: self.n,
            results,
            candidate_count: self.store.len(),
        })
    }
}

/// Unused pruning parameters are rejected loudly rather than ignored.
pub fn check_dyadic_params(params: &PruningParams) -> Result<(), DetectorError> {
    if params.initial_max_size.is_some() {
        return Err(DetectorError::Config(
            "max_size does not apply to the dyadic engine".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{Detector, StatKind};

    #[test]
    fn chunk_bounds_worked_rows() {
        // Rows of the chunk table for n = 31, 24, 25.
        assert_eq!(chunk_bounds(31, 1).unwrap(), 29..31);
        assert_eq!(chunk_bounds(24, 4).unwrap(), 1..17);
        assert!(chunk_bounds(25, 2).unwrap().is_empty());
        // Full row n = 28: q=4 -> {1..16}, q=3 -> {17..24}, q=2 -> empty,
        // q=1 -> {25,26}, q=0 -> {27}.
        assert_eq!(chunk_bounds(28, 4).unwrap(), 1..17);
        assert_eq!(chunk_bounds(28, 3).unwrap(), 17..25);
        assert!(chunk_bounds(28, 2).unwrap().is_empty());
        assert_eq!(chunk_bounds(28, 1).unwrap(), 25..27);
        assert_eq!(chunk_bounds(28, 0).unwrap(), 27..28);
    }

    #[test]
    fn chunk_bounds_input_errors() {
        assert!(chunk_bounds(1, 0).is_err());
        assert!(chunk_bounds(24, 5).is_err()); // floor(log2(23)) = 4
        assert!(chunk_bounds(24, 4).is_ok());
    }

    #[test]
    fn chunks_partition_the_label_range() {
        // The chunks at q >= q_min plus the trailing block below 2^q_min
        // exactly partition {1, ..., n-1}.
        for q_min in 1u32..=8 {
            for n in 2u64..=4096 {
                let m = n - 1;
                let max_q = 63 - m.leading_zeros();
                let mut covered: Vec<std::ops::Range<u64>> = Vec::new();
                for q in q_min..=max_q {
                    if q <= max_q {
                        let r = chunk_bounds(n, q).unwrap();
                        if !r.is_empty() {
                            covered.push(r);
                        }
                    }
                }
                let trailing_lo = if q_min > max_q { 0 } else { (m >> q_min) << q_min };
                covered.push(trailing_lo + 1..m + 1);
                covered.sort_by_key(|r| r.start);
                let mut expect = 1u64;
                for r in covered {
                    assert_eq!(r.start, expect, "gap at n={n} q_min={q_min}");
                    expect = r.end;
                }
                assert_eq!(expect, n, "missing tail at n={n} q_min={q_min}");
            }
        }
    }

    #[test]
    fn no_merge_off_multiples() {
        // q_min = 2: inserting a label not divisible by 4 only appends.
        let mut store = DyadicStore::new(2, 2, crate::hull::DEFAULT_TOL).unwrap();
        let mut cum = 0.0;
        let mut state = 11u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for label in 0..7u64 {
            let before = store.len();
            store.insert_and_merge(label, vec![cum]).unwrap();
            cum += next();
            if label % 4 != 0 || label == 0 {
                assert_eq!(store.len(), before + 1, "label {label}");
            }
        }
    }

    #[test]
    fn collinear_chunks_keep_endpoints() {
        // Constant increments: every merged chunk reduces to its endpoints.
        let mut store = DyadicStore::new(2, 2, crate::hull::DEFAULT_TOL).unwrap();
        for label in 0..=16u64 {
            store.insert_and_merge(label, vec![label as f64 * 0.5]).unwrap();
        }
        // Label 16 triggered merges at q = 2, 3, 4: chunk {1..16} holds only
        // {1, 16}; labels 0 and 16 persist.
        let labels = store.labels();
        assert!(labels.contains(&0));
        assert!(labels.contains(&1));
        assert!(labels.contains(&16));
        assert!(!labels.contains(&8), "interior collinear label kept: {labels:?}");
    }

    /// Offline reference: recompute every chunk's content from scratch with
    /// the same recursive merge rule the online store applies (hull only
    /// when more than `lift_dim + 1` candidates survive at that stage).
    fn chunk_content(
        lo: u64,
        hi: u64,
        q: u32,
        q_min: u32,
        cums: &[Vec<f64>],
        lift_dim: usize,
    ) -> Vec<u64> {
        let mut candidates: Vec<u64> = if q == q_min {
            (lo..=hi).collect()
        } else {
            let mid = lo + (1u64 << (q - 1));
            let mut left = chunk_content(lo, mid - 1, q - 1, q_min, cums, lift_dim);
            let right = chunk_content(mid, hi, q - 1, q_min, cums, lift_dim);
            left.extend(right);
            left
        };
        if candidates.len() > lift_dim + 1 {
            let pts: Vec<HullPoint> = candidates
                .iter()
                .map(|&l| {
                    let mut c = vec![l as f64];
                    c.extend_from_slice(&cums[l as usize]);
                    HullPoint::new(l, c)
                })
                .collect();
            candidates = hull_vertices(&pts, crate::hull::DEFAULT_TOL).unwrap();
        }
        candidates.sort_unstable();
        candidates
    }

    fn offline_reference(cums: &[Vec<f64>], n_obs: u64, q_min: u32, lift_dim: usize) -> Vec<u64> {
        let m = n_obs - 1;
        let mut labels = vec![0u64];
        if m >= 1 {
            let max_q = 63 - m.leading_zeros();
            for q in q_min..=max_q.max(q_min) {
                if q > max_q {
                    continue;
                }
                let r = chunk_bounds(m + 1, q).unwrap();
                if !r.is_empty() {
                    labels.extend(chunk_content(r.start, r.end - 1, q, q_min, cums, lift_dim));
                }
            }
            let trailing_lo = if q_min > max_q { 0 } else { (m >> q_min) << q_min };
            for l in trailing_lo + 1..=m {
                labels.push(l);
            }
        }
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    #[test]
    fn online_store_matches_offline_recompute() {
        let mut state = 31415u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let q_min = 3u32;
        let lift_dim = 2usize;
        let mut store = DyadicStore::new(q_min, lift_dim, crate::hull::DEFAULT_TOL).unwrap();
        let mut cums: Vec<Vec<f64>> = Vec::new();
        let mut cum = 0.0f64;
        for label in 0..200u64 {
            cums.push(vec![cum]);
            store.insert_and_merge(label, vec![cum]).unwrap();
            cum += next();
            let mut got = store.labels();
            got.sort_unstable();
            let expect = offline_reference(&cums, label + 1, q_min, lift_dim);
            assert_eq!(got, expect, "after inserting label {label}");
        }
    }

    #[test]
    fn dyadic_matches_exact_engine_per_step() {
        let mut state = 271828u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for prechange in [Prechange::Known(vec![0.0, 0.0]), Prechange::Unknown] {
            let model = ModelSpec::gaussian_mean(2);
            let config = StatConfig {
                stats: vec![StatKind::Dense, StatKind::Ranked { s: 1 }, StatKind::SumOfMax],
                prechange,
            };
            let mut exact = Detector::new(model.clone(), config.clone(), PruningParams::default()).unwrap();
            let mut dyadic = DyadicDetector::new(model, config, Some(3)).unwrap();
            for i in 0..600 {
                let shift = if i >= 400 { 0.8 } else { 0.0 };
                let x = [next() + shift, next()];
                let a = exact.step(&x).unwrap();
                let b = dyadic.step(&x).unwrap();
                for (ra, rb) in a.results.iter().zip(&b.results) {
                    assert!(
                        (ra.value - rb.value).abs() < 1e-9,
                        "step {i} stat {}: exact {} dyadic {}",
                        ra.stat.id(),
                        ra.value,
                        rb.value
                    );
                    assert_eq!(ra.tau, rb.tau, "step {i} stat {}", ra.stat.id());
                }
            }
        }
    }

    #[test]
    fn zero_stream_is_all_zeros() {
        let model = ModelSpec::gaussian_mean(1);
        let config = StatConfig {
            stats: vec![StatKind::Dense],
            prechange: Prechange::Known(vec![0.0]),
        };
        let mut det = DyadicDetector::new(model, config, Some(2)).unwrap();
        for _ in 0..40 {
            let r = det.step(&[0.0]).unwrap();
            assert_eq!(r.results[0].value, 0.0);
        }
    }
}
