//! Exact maximum-weight bipartite matching.
//!
//! The optimum value comes from a Kuhn-Munkres (shortest augmenting path)
//! solver on the square-padded matrix. Among optimal matchings the
//! lexicographically smallest sorted pair list is then chosen by fixing rows
//! in order, each to the smallest column that keeps the optimum reachable.

/// Two matching totals closer than this are treated as equal.
pub const TIE_EPS: f64 = 1e-9;

/// Maximum total weight over matchings of `rows` x `cols`, using only
/// positive entries of `weights[row][col]`.
pub fn max_weight_value(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let n = rows.len().max(cols.len());
    // cost[i][j] = -w, padding with 0
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows.len() && j < cols.len() {
            let w = weights[rows[i]][cols[j]];
            if w > 0.0 {
                -w
            } else {
                0.0
            }
        } else {
            0.0
        }
    };
    let assignment = hungarian_min(n, cost);
    assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows.len() && j < cols.len())
        .map(|(i, &j)| weights[rows[i]][cols[j]])
        .filter(|&w| w > 0.0)
        .sum()
}

/// Minimum-cost perfect assignment on an `n` x `n` matrix; returns the column of each row.
fn hungarian_min(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based potentials, column 0 is a sentinel
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Optimal matching as `(row, col)` pairs sorted by row; only positive-weight pairs.
///
/// Ties between optimal matchings (within [`TIE_EPS`]) resolve to the
/// lexicographically smallest pair list.
pub fn max_weight_matching(weights: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Vec<(usize, usize)> {
    let all_rows: Vec<usize> = (0..n_rows).collect();
    let mut free_cols: Vec<usize> = (0..n_cols).collect();
    let best = max_weight_value(weights, &all_rows, &free_cols);
    let mut fixed_total = 0.0;
    let mut pairs = Vec::new();
    for i in 0..n_rows {
        let rest = &all_rows[i + 1..];
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            let w = weights[i][j];
            if w <= 0.0 {
                continue;
            }
            let mut cols = free_cols.clone();
            cols.remove(pos);
            let total = fixed_total + w + max_weight_value(weights, rest, &cols);
            if total >= best - TIE_EPS {
                chosen = Some((pos, j, w));
                break;
            }
        }
        if let Some((pos, j, w)) = chosen {
            free_cols.remove(pos);
            fixed_total += w;
            pairs.push((i, j));
        }
    }
    pairs
}
