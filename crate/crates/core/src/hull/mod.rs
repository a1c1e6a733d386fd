//! Convex-hull vertex extraction in arbitrary dimension.
//!
//! The reference contract is the per-point linear-programming test: a point
//! is a vertex exactly when it cannot be written as a convex combination of
//! the remaining points with l1 slack above the tolerance. Inputs are first
//! normalized per dimension, reduced to their affine span, and deduplicated,
//! so the test is scale-robust and degenerate sets (collinear or otherwise
//! rank-deficient) are handled by working inside the span. Two-dimensional
//! spans take a monotone-chain fast path that agrees with the reference.

mod chain;
mod lp;

use thiserror::Error;

pub(crate) use lp::convex_combination_residual;

/// Default absolute tolerance on the LP slack after per-dimension
/// max-absolute-value normalization.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HullError {
    #[error("empty point set")]
    EmptyInput,
    #[error("non-finite coordinate on point with label {label}")]
    NonFinite { label: u64 },
    #[error("duplicate label {label}")]
    DuplicateLabel { label: u64 },
    #[error("points have mixed dimensions: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown label {label}")]
    UnknownLabel { label: u64 },
}

/// A labelled point in R^d. For detector-produced points the label is the
/// candidate changepoint and the first coordinate equals the label.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPoint {
    pub label: u64,
    pub coords: Vec<f64>,
}

impl HullPoint {
    pub fn new(label: u64, coords: Vec<f64>) -> Self {
        Self { label, coords }
    }
}

/// Labels of the convex-hull vertices of `points`, in increasing label
/// order. Points interior to faces or edges are excluded; coincident points
/// (within `tol` after normalization) are collapsed to their smallest label.
pub fn hull_vertices(points: &[HullPoint], tol: f64) -> Result<Vec<u64>, HullError> {
    let norm = NormalizedSet::build(points)?;
    let mut labels = norm.vertex_labels(tol);
    labels.sort_unstable();
    Ok(labels)
}

/// Membership certificate: true when `coords` is a convex combination of
/// `points` within `tol` (after the same per-dimension normalization the
/// vertex test uses). Containment in any subset certifies containment in
/// every superset, which is what pruning-soundness audits rely on.
pub fn contains_point(points: &[HullPoint], coords: &[f64], tol: f64) -> Result<bool, HullError> {
    if points.is_empty() {
        return Err(HullError::EmptyInput);
    }
    let dim = points[0].coords.len();
    if coords.len() != dim {
        return Err(HullError::DimensionMismatch {
            expected: dim,
            got: coords.len(),
        });
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(HullError::NonFinite { label: u64::MAX });
    }
    let mut scale = vec![0.0f64; dim];
    for p in points {
        if p.coords.len() != dim {
            return Err(HullError::DimensionMismatch {
                expected: dim,
                got: p.coords.len(),
            });
        }
        if p.coords.iter().any(|v| !v.is_finite()) {
            return Err(HullError::NonFinite { label: p.label });
        }
        for (s, v) in scale.iter_mut().zip(&p.coords) {
            *s = s.max(v.abs());
        }
    }
    for (s, v) in scale.iter_mut().zip(coords) {
        *s = s.max(v.abs());
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let normed: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.coords.iter().zip(&scale).map(|(v, s)| v / s).collect())
        .collect();
    let cols: Vec<&[f64]> = normed.iter().map(|c| c.as_slice()).collect();
    let target: Vec<f64> = coords.iter().zip(&scale).map(|(v, s)| v / s).collect();
    Ok(convex_combination_residual(&cols, &target, tol * 0.25) <= tol)
}

/// Single-point vertex certificate: true when a separating hyperplane with
/// margin above `tol` exists between the labelled point and the convex hull
/// of the remaining points.
pub fn is_vertex(points: &[HullPoint], label: u64, tol: f64) -> Result<bool, HullError> {
    let norm = NormalizedSet::build(points)?;
    let idx = points
        .iter()
        .position(|p| p.label == label)
        .ok_or(HullError::UnknownLabel { label })?;
    if points.len() == 1 {
        return Ok(true);
    }
    let target = norm.projected_point(idx);
    let cols: Vec<&[f64]> = (0..points.len())
        .filter(|&i| i != idx)
        .map(|i| norm.projected_point(i))
        .collect();
    let residual = convex_combination_residual(&cols, target, tol * 0.25);
    Ok(residual > tol)
}

/// Point set after per-dimension normalization and projection onto the
/// affine span of the inputs.
struct NormalizedSet<'a> {
    points: &'a [HullPoint],
    /// Projected coordinates, row-major, `rank` values per point.
    projected: Vec<f64>,
    rank: usize,
}

impl<'a> NormalizedSet<'a> {
    fn build(points: &'a [HullPoint]) -> Result<Self, HullError> {
        if points.is_empty() {
            return Err(HullError::EmptyInput);
        }
        let dim = points[0].coords.len();
        let mut seen = std::collections::HashSet::with_capacity(points.len());
        for p in points {
            if p.coords.len() != dim {
                return Err(HullError::DimensionMismatch {
                    expected: dim,
                    got: p.coords.len(),
                });
            }
            if p.coords.iter().any(|v| !v.is_finite()) {
                return Err(HullError::NonFinite { label: p.label });
            }
            if !seen.insert(p.label) {
                return Err(HullError::DuplicateLabel { label: p.label });
            }
        }

        let mut scale = vec![0.0f64; dim];
        for p in points {
            for (s, v) in scale.iter_mut().zip(&p.coords) {
                *s = s.max(v.abs());
            }
        }
        for s in &mut scale {
            if *s == 0.0 {
                *s = 1.0;
            }
        }

        let normalized = |i: usize, d: usize| points[i].coords[d] / scale[d];

        // Orthonormal basis of the affine span via modified Gram-Schmidt
        // with one re-orthogonalization pass.
        const RANK_TOL: f64 = 1e-9;
        let origin: Vec<f64> = (0..dim).map(|d| normalized(0, d)).collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 1..points.len() {
            if basis.len() == dim {
                break;
            }
            let mut v: Vec<f64> = (0..dim).map(|d| normalized(i, d) - origin[d]).collect();
            for _ in 0..2 {
                for b in &basis {
                    let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= dot * y;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > RANK_TOL {
                for x in &mut v {
                    *x /= norm;
                }
                basis.push(v);
            }
        }

        let rank = basis.len();
        let mut projected = vec![0.0f64; points.len() * rank];
        for i in 0..points.len() {
            for (k, b) in basis.iter().enumerate() {
                projected[i * rank + k] = (0..dim)
                    .map(|d| (normalized(i, d) - origin[d]) * b[d])
                    .sum();
            }
        }
        Ok(Self {
            points,
            projected,
            rank,
        })
    }

    fn projected_point(&self, i: usize) -> &[f64] {
        &self.projected[i * self.rank..(i + 1) * self.rank]
    }

    /// Deduplicate within `tol` (L∞ in projected space), keeping the
    /// smallest label of each coincident group. Returns representative
    /// point indices.
    fn dedup_representatives(&self, tol: f64) -> Vec<usize> {
        let n = self.points.len();
        if self.rank == 0 {
            let best = (0..n).min_by_key(|&i| self.points[i].label).unwrap();
            return vec![best];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.projected_point(a)
                .partial_cmp(self.projected_point(b))
                .expect("finite coordinates")
        });
        let mut group_of = vec![usize::MAX; n];
        let mut groups: Vec<u64> = Vec::new(); // smallest label per group
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let pi = self.projected_point(i);
            let mut back = pos;
            let mut assigned = false;
            while back > 0 {
                back -= 1;
                let j = order[back];
                let pj = self.projected_point(j);
                if pi[0] - pj[0] > tol {
                    break;
                }
                let close = pi
                    .iter()
                    .zip(pj)
                    .all(|(a, b)| (a - b).abs() <= tol);
                if close {
                    let g = group_of[j];
                    group_of[i] = g;
                    groups[g] = groups[g].min(self.points[i].label);
                    members[g].push(i);
                    assigned = true;
                    break;
                }
            }
            if !assigned {
                group_of[i] = groups.len();
                groups.push(self.points[i].label);
                members.push(vec![i]);
            }
        }
        members
            .iter()
            .zip(&groups)
            .map(|(m, &label)| {
                *m.iter()
                    .find(|&&i| self.points[i].label == label)
                    .expect("group label belongs to a member")
            })
            .collect()
    }

    fn vertex_labels(&self, tol: f64) -> Vec<u64> {
        let reps = self.dedup_representatives(tol);
        let label = |i: usize| self.points[i].label;
        match self.rank {
            0 => reps.iter().map(|&i| label(i)).collect(),
            1 => {
                if reps.len() == 1 {
                    return vec![label(reps[0])];
                }
                let lo = *reps
                    .iter()
                    .min_by(|&&a, &&b| {
                        self.projected_point(a)[0]
                            .partial_cmp(&self.projected_point(b)[0])
                            .unwrap()
                    })
                    .unwrap();
                let hi = *reps
                    .iter()
                    .max_by(|&&a, &&b| {
                        self.projected_point(a)[0]
                            .partial_cmp(&self.projected_point(b)[0])
                            .unwrap()
                    })
                    .unwrap();
                vec![label(lo), label(hi)]
            }
            2 => {
                let pts: Vec<[f64; 2]> = reps
                    .iter()
                    .map(|&i| {
                        let p = self.projected_point(i);
                        [p[0], p[1]]
                    })
                    .collect();
                chain::strict_hull_indices_2d(&pts, tol)
                    .into_iter()
                    .map(|k| label(reps[k]))
                    .collect()
            }
            _ => {
                let mut out = Vec::new();
                for (pos, &i) in reps.iter().enumerate() {
                    let target = self.projected_point(i);
                    let cols: Vec<&[f64]> = reps
                        .iter()
                        .enumerate()
                        .filter(|&(q, _)| q != pos)
                        .map(|(_, &j)| self.projected_point(j))
                        .collect();
                    let residual = convex_combination_residual(&cols, target, tol * 0.25);
                    if residual > tol {
                        out.push(label(i));
                    }
                }
                out
            }
        }
    }
}
