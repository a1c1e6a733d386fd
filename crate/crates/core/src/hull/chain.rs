//! Andrew monotone-chain fast path for two-dimensional point sets.

/// Indices of strict hull vertices of 2-d points, in input order.
/// Collinear points interior to an edge are excluded.
pub(crate) fn strict_hull_indices_2d(points: &[[f64; 2]], eps: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .expect("finite coordinates")
    });

    let cross = |o: usize, a: usize, b: usize| -> f64 {
        let (po, pa, pb) = (points[o], points[a], points[b]);
        (pa[0] - po[0]) * (pb[1] - po[1]) - (pa[1] - po[1]) * (pb[0] - po[0])
    };

    let mut lower: Vec<usize> = Vec::new();
    for &i in &order {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= eps {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in order.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= eps {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_keeps_endpoints() {
        let pts = [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]];
        let mut got = strict_hull_indices_2d(&pts, 1e-9);
        got.sort_unstable();
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn square_with_center_and_edge_midpoint() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.5, 0.5],
            [0.5, 0.0],
        ];
        let mut got = strict_hull_indices_2d(&pts, 1e-9);
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }
}
