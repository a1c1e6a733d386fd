//! Exponential-family observation models.
//!
//! Each coordinate of a stream is governed by one family. Observations are
//! mapped to natural statistics, and segment log-likelihoods are evaluated
//! in closed form from `(count, sum-of-natural-statistics)` summaries. All
//! likelihood values are twice-log scale with additive data-only constants
//! dropped, so that differences of the reported values are exact
//! likelihood-ratio statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest per-coordinate mean estimate allowed before taking logs.
/// Keeps Exponential/Pareto statistics finite on degenerate integer data.
pub const MEAN_FLOOR: f64 = 1e-12;

/// Default variance floor for [`Family::GaussianMeanVariance`].
pub const DEFAULT_VAR_FLOOR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("observation dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("natural vector dimension mismatch: expected {expected}, got {got}")]
    NaturalDimensionMismatch { expected: usize, got: usize },
    #[error("observation rejected at coordinate {coord}: {reason}")]
    RejectedObservation { coord: usize, reason: String },
    #[error("segment summary is empty (count = 0)")]
    EmptySegment,
    #[error("natural parameter outside domain at coordinate {coord}: {reason}")]
    EtaOutOfDomain { coord: usize, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// One exponential-family member for a single coordinate of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// Gaussian with unit variance, change in the mean.
    GaussianMean,
    /// Poisson counts, change in the rate.
    Poisson,
    /// Binomial with a fixed number of trials, change in the success probability.
    Binomial { trials: u64 },
    /// Exponential, change in the rate.
    Exponential,
    /// Pareto type-I with known minimum, change in the shape.
    ParetoI { y_min: f64 },
    /// Gaussian with both mean and variance free; natural statistic is (y, y²).
    GaussianMeanVariance { var_floor: f64 },
}

impl Family {
    /// Width of this coordinate's natural statistic.
    pub fn natural_width(&self) -> usize {
        match self {
            Family::GaussianMeanVariance { .. } => 2,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Family::Binomial { trials } if trials == 0 => Err(ModelError::InvalidModel(
                "binomial trials must be >= 1".into(),
            )),
            Family::ParetoI { y_min } if !(y_min > 0.0) => Err(ModelError::InvalidModel(
                format!("pareto y_min must be > 0, got {y_min}"),
            )),
            Family::GaussianMeanVariance { var_floor } if !(var_floor > 0.0) => Err(
                ModelError::InvalidModel(format!("var_floor must be > 0, got {var_floor}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Which family governs each coordinate of a p-variate stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    coords: Vec<Family>,
}

impl ModelSpec {
    pub fn new(coords: Vec<Family>) -> Result<Self, ModelError> {
        if coords.is_empty() {
            return Err(ModelError::InvalidModel("dimension p must be >= 1".into()));
        }
        for family in &coords {
            family.validate()?;
        }
        Ok(Self { coords })
    }

    /// Homogeneous model: the same family on every coordinate.
    pub fn homogeneous(family: Family, p: usize) -> Result<Self, ModelError> {
        Self::new(vec![family; p])
    }

    pub fn gaussian_mean(p: usize) -> Self {
        Self::homogeneous(Family::GaussianMean, p).expect("p >= 1")
    }

    pub fn poisson(p: usize) -> Self {
        Self::homogeneous(Family::Poisson, p).expect("p >= 1")
    }

    /// Observation dimension p (one slot per coordinate family).
    pub fn p(&self) -> usize {
        self.coords.len()
    }

    /// Total natural-statistic dimension; equals p except for
    /// mean+variance coordinates which contribute width 2.
    pub fn natural_dim(&self) -> usize {
        self.coords.iter().map(Family::natural_width).sum()
    }

    pub fn coords(&self) -> &[Family] {
        &self.coords
    }

    /// True when any coordinate tracks mean and variance jointly; sparse
    /// statistics are restricted to mean-type evidence and are rejected
    /// for such models.
    pub fn has_mean_variance(&self) -> bool {
        self.coords
            .iter()
            .any(|f| matches!(f, Family::GaussianMeanVariance { .. }))
    }

    /// Offset of coordinate `i` inside the natural-statistic vector.
    pub fn natural_offset(&self, i: usize) -> usize {
        self.coords[..i].iter().map(Family::natural_width).sum()
    }

    /// Map a raw observation to its natural-statistic vector.
    pub fn to_natural(&self, y: &[f64]) -> Result<Vec<f64>, ModelError> {
        if y.len() != self.p() {
            return Err(ModelError::DimensionMismatch {
                expected: self.p(),
                got: y.len(),
            });
        }
        let mut out = Vec::with_capacity(self.natural_dim());
        for (coord, (&family, &v)) in self.coords.iter().zip(y).enumerate() {
            if !v.is_finite() {
                return Err(ModelError::RejectedObservation {
                    coord,
                    reason: format!("non-finite value {v}"),
                });
            }
            match family {
                Family::GaussianMean | Family::Poisson | Family::Exponential => out.push(v),
                Family::Binomial { trials } => {
                    let m = trials as f64;
                    if !(0.0..=m).contains(&v) {
                        return Err(ModelError::RejectedObservation {
                            coord,
                            reason: format!("binomial value {v} outside [0, {m}]"),
                        });
                    }
                    out.push(v);
                }
                Family::ParetoI { .. } => {
                    if v <= 0.0 {
                        return Err(ModelError::RejectedObservation {
                            coord,
                            reason: format!("pareto value {v} must be > 0"),
                        });
                    }
                    out.push(v.ln());
                }
                Family::GaussianMeanVariance { .. } => {
                    out.push(v);
                    out.push(v * v);
                }
            }
        }
        Ok(out)
    }

    /// Twice the maximized segment log-likelihood over the free parameter,
    /// with additive data-only constants dropped. Summed over coordinates.
    pub fn segment_maxloglik(&self, seg: &SegmentSummary) -> Result<f64, ModelError> {
        if seg.count == 0 {
            return Err(ModelError::EmptySegment);
        }
        self.check_natural_len(seg.sums.len())?;
        let mut total = 0.0;
        let mut off = 0;
        for &family in &self.coords {
            let w = family.natural_width();
            total += coord_maxloglik(family, seg.count, &seg.sums[off..off + w]);
            off += w;
        }
        Ok(total)
    }

    /// Twice the segment log-likelihood at a fixed natural parameter,
    /// `2⟨S, η⟩ − c·A'(η)`, with the same data-only constants dropped.
    pub fn segment_loglik_at(&self, seg: &SegmentSummary, eta: &[f64]) -> Result<f64, ModelError> {
        self.check_natural_len(seg.sums.len())?;
        if eta.len() != self.natural_dim() {
            return Err(ModelError::NaturalDimensionMismatch {
                expected: self.natural_dim(),
                got: eta.len(),
            });
        }
        let mut total = 0.0;
        let mut off = 0;
        for (coord, &family) in self.coords.iter().enumerate() {
            let w = family.natural_width();
            total += coord_loglik_at(
                family,
                seg.count,
                &seg.sums[off..off + w],
                &eta[off..off + w],
            )
            .map_err(|reason| ModelError::EtaOutOfDomain { coord, reason })?;
            off += w;
        }
        Ok(total)
    }

    /// Per-coordinate twice-log likelihood-ratio evidence for a change, with
    /// the pre-change natural parameter known. Writes one value per
    /// coordinate into `out`.
    ///
    /// Exact closed forms are used here (linear-in-count terms restored for
    /// Exponential/Pareto) so that the values are true GLR contributions.
    pub(crate) fn evidence_known(
        &self,
        count: u64,
        sums: &[f64],
        eta1: &[f64],
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        debug_assert_eq!(out.len(), self.p());
        let mut off = 0;
        for (coord, &family) in self.coords.iter().enumerate() {
            let w = family.natural_width();
            let s = &sums[off..off + w];
            let max = coord_maxloglik_exact(family, count, s);
            let at = coord_loglik_at(family, count, s, &eta1[off..off + w])
                .map_err(|reason| ModelError::EtaOutOfDomain { coord, reason })?;
            out[coord] = max - at;
            off += w;
        }
        Ok(())
    }

    /// Per-coordinate twice-log likelihood-ratio evidence for a change at the
    /// split `(c1, sums1) | (c2, sums2)` with the pre-change parameter
    /// unknown. The whole-segment summary is `(c1 + c2, sums1 + sums2)`.
    pub(crate) fn evidence_unknown(
        &self,
        c1: u64,
        sums1: &[f64],
        c2: u64,
        sums2: &[f64],
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.p());
        debug_assert!(c1 >= 1 && c2 >= 1);
        let mut off = 0;
        for (coord, &family) in self.coords.iter().enumerate() {
            let w = family.natural_width();
            let s1 = &sums1[off..off + w];
            let s2 = &sums2[off..off + w];
            let mut whole = [0.0f64; 2];
            for k in 0..w {
                whole[k] = s1[k] + s2[k];
            }
            // Dropped linear-in-count and data-sum terms cancel across the
            // split, so the lazy closed forms already give the exact ratio.
            out[coord] = coord_maxloglik(family, c1, s1) + coord_maxloglik(family, c2, s2)
                - coord_maxloglik(family, c1 + c2, &whole[..w]);
            off += w;
        }
    }

    fn check_natural_len(&self, got: usize) -> Result<(), ModelError> {
        if got != self.natural_dim() {
            return Err(ModelError::NaturalDimensionMismatch {
                expected: self.natural_dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Count and componentwise natural-statistic sum of a data segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSummary {
    pub count: u64,
    pub sums: Vec<f64>,
}

impl SegmentSummary {
    pub fn new(count: u64, sums: Vec<f64>) -> Self {
        Self { count, sums }
    }
}

/// x·ln(y) with the 0·ln 0 := 0 boundary convention.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Maximized twice-log-likelihood of one coordinate from (count, sums),
/// additive constants dropped per the reporting convention.
fn coord_maxloglik(family: Family, c: u64, sums: &[f64]) -> f64 {
    let cf = c as f64;
    match family {
        Family::GaussianMean => {
            let s = sums[0];
            s * s / cf
        }
        Family::Poisson => {
            let s = sums[0];
            2.0 * (xlogy(s, s / cf) - s)
        }
        Family::Binomial { trials } => {
            let s = sums[0];
            let total = trials as f64 * cf;
            2.0 * (xlogy(s, s) + xlogy(total - s, total - s) - xlogy(total, total))
        }
        Family::Exponential => {
            let mean = (sums[0] / cf).max(MEAN_FLOOR);
            -2.0 * cf * mean.ln()
        }
        Family::ParetoI { y_min } => {
            let excess = (sums[0] / cf - y_min.ln()).max(MEAN_FLOOR);
            -2.0 * cf * excess.ln()
        }
        Family::GaussianMeanVariance { var_floor } => {
            let m1 = sums[0] / cf;
            let m2 = sums[1] / cf;
            let var = (m2 - m1 * m1).max(var_floor);
            -cf * var.ln() - cf
        }
    }
}

/// As [`coord_maxloglik`] but restoring the linear-in-count and data-sum
/// terms dropped there, so that subtracting a plug-in evaluation of the same
/// segment yields the exact likelihood ratio.
fn coord_maxloglik_exact(family: Family, c: u64, sums: &[f64]) -> f64 {
    let cf = c as f64;
    match family {
        Family::Exponential => coord_maxloglik(family, c, sums) - 2.0 * cf,
        Family::ParetoI { .. } => coord_maxloglik(family, c, sums) - 2.0 * sums[0] - 2.0 * cf,
        _ => coord_maxloglik(family, c, sums),
    }
}

/// Plug-in twice-log-likelihood 2⟨s, η⟩ − c·A'(η) for one coordinate.
/// Returns Err(reason) when η is outside the family's natural domain.
fn coord_loglik_at(family: Family, c: u64, sums: &[f64], eta: &[f64]) -> Result<f64, String> {
    let cf = c as f64;
    let a_prime = match family {
        Family::GaussianMean => eta[0] * eta[0],
        Family::Poisson => 2.0 * eta[0].exp(),
        Family::Binomial { trials } => 2.0 * trials as f64 * eta[0].exp().ln_1p(),
        Family::Exponential => {
            if eta[0] >= 0.0 {
                return Err(format!("exponential requires eta < 0, got {}", eta[0]));
            }
            -2.0 * (-eta[0]).ln()
        }
        Family::ParetoI { y_min } => {
            if eta[0] >= -1.0 {
                return Err(format!("pareto requires eta < -1, got {}", eta[0]));
            }
            -2.0 * (-1.0 - eta[0]).ln() + 2.0 * (1.0 + eta[0]) * y_min.ln()
        }
        Family::GaussianMeanVariance { .. } => {
            let (ea, eb) = (eta[0], eta[1]);
            if eb >= 0.0 {
                return Err(format!(
                    "mean+variance requires second natural coordinate < 0, got {eb}"
                ));
            }
            // A'(η) in (mean, variance) terms is θ1²/θ2 + ln θ2 with
            // θ2 = −1/(2η_b), θ1 = −η_a/(2η_b).
            -ea * ea / (2.0 * eb) + (-1.0 / (2.0 * eb)).ln()
        }
    };
    let dot: f64 = sums.iter().zip(eta).map(|(s, e)| s * e).sum();
    Ok(2.0 * dot - cf * a_prime)
}

/// Natural parameter for a known pre-change raw parameter θ, coordinate-wise.
/// For Gaussian this is the mean itself; for Poisson ln θ; etc.
pub fn natural_from_theta(family: Family, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
    let bad = |reason: String| ModelError::InvalidModel(reason);
    match family {
        Family::GaussianMean => Ok(vec![theta[0]]),
        Family::Poisson => {
            if theta[0] <= 0.0 {
                return Err(bad(format!("poisson mean must be > 0, got {}", theta[0])));
            }
            Ok(vec![theta[0].ln()])
        }
        Family::Binomial { .. } => {
            let q = theta[0];
            if !(0.0 < q && q < 1.0) {
                return Err(bad(format!("binomial probability must be in (0,1), got {q}")));
            }
            Ok(vec![(q / (1.0 - q)).ln()])
        }
        Family::Exponential => {
            if theta[0] <= 0.0 {
                return Err(bad(format!("exponential rate must be > 0, got {}", theta[0])));
            }
            Ok(vec![-theta[0]])
        }
        Family::ParetoI { .. } => {
            if theta[0] <= 0.0 {
                return Err(bad(format!("pareto shape must be > 0, got {}", theta[0])));
            }
            Ok(vec![-theta[0] - 1.0])
        }
        Family::GaussianMeanVariance { .. } => {
            let (mean, var) = (theta[0], theta[1]);
            if var <= 0.0 {
                return Err(bad(format!("variance must be > 0, got {var}")));
            }
            Ok(vec![mean / var, -1.0 / (2.0 * var)])
        }
    }
}
