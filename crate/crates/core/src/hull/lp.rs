//! Phase-1 simplex feasibility test for convex-combination systems.

/// Minimal l1 residual of `Σ λ_i · col_i = target, Σ λ_i = 1, λ ≥ 0`,
/// computed by a phase-1 simplex over the artificial variables with Bland's
/// anti-cycling rule. A residual of zero means the target point is a convex
/// combination of the columns.
///
/// `columns` is column-major: `columns[i]` is one candidate point, all of
/// dimension `target.len()`. Coordinates are expected to be normalized to
/// order one so the residual is comparable against an absolute tolerance.
pub(crate) fn convex_combination_residual(
    columns: &[&[f64]],
    target: &[f64],
    early_exit_below: f64,
) -> f64 {
    let k = target.len();
    let rows = k + 1;
    let n = columns.len();
    if n == 0 {
        return 1.0 + target.iter().map(|v| v.abs()).sum::<f64>();
    }
    let width = n + rows + 1; // structural | artificial | rhs
    let mut t = vec![0.0f64; rows * width];

    for (r, row) in t.chunks_mut(width).enumerate() {
        let b = if r < k { target[r] } else { 1.0 };
        let flip = if b < 0.0 { -1.0 } else { 1.0 };
        for (j, col) in columns.iter().enumerate() {
            let a = if r < k { col[r] } else { 1.0 };
            row[j] = flip * a;
        }
        row[n + r] = 1.0;
        row[width - 1] = flip * b;
    }

    // Reduced costs for minimizing the artificial sum with the artificial
    // basis: structural columns get the column sum, artificials zero.
    let mut z = vec![0.0f64; width];
    for row in t.chunks(width) {
        for (zj, v) in z.iter_mut().zip(row) {
            *zj += v;
        }
    }
    for zj in z[n..n + rows].iter_mut() {
        *zj = 0.0;
    }
    let mut basis: Vec<usize> = (n..n + rows).collect();

    const EPS_REDUCED: f64 = 1e-10;
    const EPS_PIVOT: f64 = 1e-11;
    let max_iters = 1000 * (rows + 2);

    for _ in 0..max_iters {
        if z[width - 1] <= early_exit_below {
            return z[width - 1].max(0.0);
        }
        // Bland: smallest improving column index.
        let Some(enter) = (0..n + rows).find(|&j| z[j] > EPS_REDUCED) else {
            return z[width - 1].max(0.0);
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let a = t[r * width + enter];
            if a > EPS_PIVOT {
                let ratio = t[r * width + width - 1] / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-14
                            || (ratio <= lratio + 1e-14 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((pr, _)) = leave else {
            // Phase-1 objective is bounded below by zero, so an unbounded
            // direction can only be a numerical artifact; report the current
            // value.
            return z[width - 1].max(0.0);
        };

        let pivot = t[pr * width + enter];
        let (prow_start, prow_end) = (pr * width, pr * width + width);
        for v in &mut t[prow_start..prow_end] {
            *v /= pivot;
        }
        for r in 0..rows {
            if r == pr {
                continue;
            }
            let factor = t[r * width + enter];
            if factor != 0.0 {
                for j in 0..width {
                    t[r * width + j] -= factor * t[prow_start + j];
                }
            }
        }
        let zfactor = z[enter];
        if zfactor != 0.0 {
            for j in 0..width {
                z[j] -= zfactor * t[prow_start + j];
            }
        }
        basis[pr] = enter;
    }
    debug_assert!(false, "simplex iteration cap reached");
    z[width - 1].max(0.0)
}
