//! Gated rectangular linear assignment.
//!
//! [`solve`] returns, among all maximum-cardinality matchings that only use
//! pairs with `cost <= gate`, one of minimum total cost. Non-finite entries are
//! always forbidden. The core is a shortest-augmenting-path solver with dual
//! potentials (Jonker-Volgenant family); forbidden pairs are replaced by a
//! penalty large enough that using one fewer of them always wins, and are
//! stripped from the result.

use crate::matrix::CostMatrix;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentResult {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl AssignmentResult {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(i, j)| cost[(i, j)]).sum()
    }

    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.0 == row).map(|m| m.1)
    }
}

fn allowed(c: f64, gate: f64) -> bool {
    c.is_finite() && c <= gate
}

/// Optimal gated assignment. `gate = f64::INFINITY` disables gating.
pub fn solve(cost: &CostMatrix, gate: f64) -> AssignmentResult {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows == 0 || cols == 0 {
        return AssignmentResult {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &c in cost.as_slice() {
        if allowed(c, gate) {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    if lo > hi {
        return AssignmentResult {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }
    let k = rows.min(cols) as f64;
    let penalty = hi + k * (hi - lo) + hi.abs() + 1.0;

    let transposed = rows > cols;
    let (nr, nc) = if transposed { (cols, rows) } else { (rows, cols) };
    let mut work = Vec::with_capacity(nr * nc);
    for i in 0..nr {
        for j in 0..nc {
            let c = if transposed { cost[(j, i)] } else { cost[(i, j)] };
            work.push(if allowed(c, gate) { c } else { penalty });
        }
    }

    let col_for_row = shortest_augmenting_path(nr, nc, &work);

    let mut matches = Vec::with_capacity(nr);
    for (i, &j) in col_for_row.iter().enumerate() {
        let (r, c) = if transposed { (j, i) } else { (i, j) };
        if allowed(cost[(r, c)], gate) {
            matches.push((r, c));
        }
    }
    matches.sort_unstable();

    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    AssignmentResult {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Full assignment of every row of an `nr x nc` (`nr <= nc`) finite cost matrix.
fn shortest_augmenting_path(nr: usize, nc: usize, cost: &[f64]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut shortest = vec![f64::INFINITY; nc];
    let mut path = vec![NONE; nc];
    let mut col4row = vec![NONE; nr];
    let mut row4col = vec![NONE; nc];
    let mut visited_rows = vec![false; nr];
    let mut visited_cols = vec![false; nc];
    let mut remaining = vec![0usize; nc];

    for cur_row in 0..nr {
        // Dijkstra over reduced costs from `cur_row` to the nearest free column.
        let mut min_val = 0.0;
        let mut num_remaining = nc;
        for (it, slot) in remaining.iter_mut().enumerate() {
            *slot = nc - it - 1;
        }
        visited_rows.iter_mut().for_each(|x| *x = false);
        visited_cols.iter_mut().for_each(|x| *x = false);
        shortest.iter_mut().for_each(|x| *x = f64::INFINITY);

        let mut sink = NONE;
        let mut i = cur_row;
        while sink == NONE {
            let mut index = NONE;
            let mut lowest = f64::INFINITY;
            visited_rows[i] = true;
            for it in 0..num_remaining {
                let j = remaining[it];
                let r = min_val + cost[i * nc + j] - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            debug_assert!(min_val.is_finite(), "finite costs always admit an augmenting path");
            let j = remaining[index];
            if row4col[j] == NONE {
                sink = j;
            } else {
                i = row4col[j];
            }
            visited_cols[j] = true;
            num_remaining -= 1;
            remaining[index] = remaining[num_remaining];
        }

        u[cur_row] += min_val;
        for r in 0..nr {
            if visited_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..nc {
            if visited_cols[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}
