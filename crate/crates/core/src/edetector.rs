//! CUSUM e-detector maximization as a two-dimensional hull problem.
//!
//! For score map s and variance map v, the log of the CUSUM e-detector at
//! scale λ is `max_{τ<n} Σ_{t=τ+1..n} (λ·s(x_t) − ψ(λ)·v(x_t))`. Whatever λ
//! is, the maximizing τ lifts to a vertex of the hull of the running pairs
//! `(Σ v, ½·Σ s)`, so one hull computation covers an entire λ grid.

use std::sync::Arc;

use crate::hull::HullPoint;

/// Score/variance maps of a CUSUM e-detector. ψ is supplied by the caller
/// at evaluation time.
#[derive(Clone)]
pub struct EDetectorSpec {
    score: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    variance: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub name: &'static str,
}

impl std::fmt::Debug for EDetectorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EDetectorSpec").field("name", &self.name).finish()
    }
}

impl EDetectorSpec {
    /// Win-indicator score with reference rate p0: s(x) = 1{x>0} − p0, v ≡ 1.
    pub fn winning_rate(p0: f64) -> Self {
        Self {
            score: Arc::new(move |x| if x > 0.0 { 1.0 - p0 } else { -p0 }),
            variance: Arc::new(|_| 1.0),
            name: "winning-rate",
        }
    }

    /// Normalized score-margin detector: x' = (x + 80)/160,
    /// s(x) = x'/m − 1, v(x) = (x'/m − 1)².
    pub fn plus_minus(m: f64) -> Self {
        let normalize = move |x: f64| (x + 80.0) / 160.0 / m - 1.0;
        Self {
            score: Arc::new(normalize),
            variance: Arc::new(move |x| {
                let s = normalize(x);
                s * s
            }),
            name: "plus-minus",
        }
    }

    pub fn custom(
        score: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        variance: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Self {
        Self {
            score,
            variance,
            name: "custom",
        }
    }

    pub fn score(&self, x: f64) -> f64 {
        (self.score)(x)
    }

    pub fn variance(&self, x: f64) -> f64 {
        (self.variance)(x)
    }
}

/// Reference preset constants.
pub const WINNING_RATE_P0: f64 = 0.49;
pub const PLUS_MINUS_M: f64 = 0.494;

/// Lifted points `(Σ_{t≤τ} v, ½·Σ_{t≤τ} s)` for τ = 0..n−1, labelled by τ.
pub fn edetector_points(spec: &EDetectorSpec, stream: &[f64]) -> Vec<HullPoint> {
    let mut points = Vec::with_capacity(stream.len());
    let (mut v_sum, mut s_sum) = (0.0f64, 0.0f64);
    points.push(HullPoint::new(0, vec![0.0, 0.0]));
    for (idx, &x) in stream.iter().enumerate().take(stream.len() - 1) {
        v_sum += spec.variance(x);
        s_sum += spec.score(x);
        points.push(HullPoint::new(idx as u64 + 1, vec![v_sum, 0.5 * s_sum]));
    }
    points
}

/// `max_{τ<n} Σ_{t=τ+1..n} (λ·s_t − ψ·v_t)` by a full scan over τ.
pub fn cusum_log_value(spec: &EDetectorSpec, stream: &[f64], lambda: f64, psi: f64) -> f64 {
    cusum_scan(spec, stream, lambda, psi, None).0
}

/// Same maximum restricted to candidate τ values; also reports the argmax.
pub fn cusum_log_value_restricted(
    spec: &EDetectorSpec,
    stream: &[f64],
    lambda: f64,
    psi: f64,
    candidates: &[u64],
) -> (f64, u64) {
    cusum_scan(spec, stream, lambda, psi, Some(candidates))
}

/// Argmax τ of the full scan (smallest τ on ties).
pub fn cusum_argmax(spec: &EDetectorSpec, stream: &[f64], lambda: f64, psi: f64) -> u64 {
    cusum_scan(spec, stream, lambda, psi, None).1
}

fn cusum_scan(
    spec: &EDetectorSpec,
    stream: &[f64],
    lambda: f64,
    psi: f64,
    candidates: Option<&[u64]>,
) -> (f64, u64) {
    let n = stream.len();
    debug_assert!(n >= 1);
    let mut prefix = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    prefix.push(0.0);
    for &x in stream.iter().take(n - 1) {
        acc += lambda * spec.score(x) - psi * spec.variance(x);
        prefix.push(acc);
    }
    let total = acc
        + stream
            .last()
            .map(|&x| lambda * spec.score(x) - psi * spec.variance(x))
            .unwrap_or(0.0);

    let mut best = f64::NEG_INFINITY;
    let mut best_tau = 0u64;
    let mut consider = |tau: u64| {
        let value = total - prefix[tau as usize];
        if value > best {
            best = value;
            best_tau = tau;
        }
    };
    match candidates {
        Some(taus) => {
            for &tau in taus {
                debug_assert!((tau as usize) < n);
                consider(tau);
            }
        }
        None => {
            for tau in 0..n as u64 {
                consider(tau);
            }
        }
    }
    (best, best_tau)
}
