//! Minimum-cost bipartite assignment (Hungarian algorithm, shortest
//! augmenting path formulation). Used for track/detection association and for
//! the per-window matching inside the HOTA computation.

/// Dense row-major cost matrix.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, costs: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.costs[r * cols + c] = f(r, c);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.costs[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.costs[r * self.cols + c] = v;
    }
}

/// Solve the min-cost assignment. Returns, for each row, the column it was
/// assigned to. When `rows <= cols` every row is assigned; otherwise every
/// column is, and the surplus rows come back as `None`.
pub fn solve(matrix: &CostMatrix) -> Vec<Option<usize>> {
    if matrix.rows == 0 || matrix.cols == 0 {
        return vec![None; matrix.rows];
    }
    if matrix.rows <= matrix.cols {
        solve_wide(matrix)
    } else {
        // Transpose so the augmenting loop always runs over the short side.
        let t = CostMatrix::from_fn(matrix.cols, matrix.rows, |r, c| matrix.get(c, r));
        let col_to_row = solve_wide(&t);
        let mut out = vec![None; matrix.rows];
        for (col, row) in col_to_row.iter().enumerate() {
            if let Some(row) = row {
                out[*row] = Some(col);
            }
        }
        out
    }
}

/// Shortest augmenting path for `rows <= cols`; assigns every row.
fn solve_wide(m: &CostMatrix) -> Vec<Option<usize>> {
    let (n, w) = (m.rows, m.cols);
    // 1-based potentials; p[j] = row matched to column j (0 = free).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; w + 1];
    let mut p = vec![0usize; w + 1];
    let mut way = vec![0usize; w + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; w + 1];
        let mut used = vec![false; w + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=w {
                if used[j] {
                    continue;
                }
                let cur = m.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=w {
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

    let mut out = vec![None; n];
    for j in 1..=w {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Total cost of an assignment produced by [`solve`].
pub fn total_cost(matrix: &CostMatrix, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| matrix.get(r, c)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injective row->column maps.
    fn brute_force(m: &CostMatrix) -> f64 {
        fn rec(m: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == m.rows.min(m.cols) {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            for c in 0..m.cols {
                if !used[c] {
                    used[c] = true;
                    rec(m, row + 1, used, acc + m.get(row, c), best);
                    used[c] = false;
                }
            }
        }
        // For rows > cols the optimum picks which rows stay unassigned; brute
        // force that by trying all row subsets of size `cols`.
        if m.rows <= m.cols {
            let mut best = f64::INFINITY;
            rec(m, 0, &mut vec![false; m.cols], 0.0, &mut best);
            best
        } else {
            let t = CostMatrix::from_fn(m.cols, m.rows, |r, c| m.get(c, r));
            brute_force(&t)
        }
    }

    #[test]
    fn picks_global_optimum_over_greedy() {
        // Greedy would pair (0,0)=1 then (1,1)=9 for 10; optimal total is 2.
        let m = CostMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => 1.0,
            (0, 1) => 1.0,
            (1, 0) => 9.0,
            (1, 1) => 9.0,
            _ => unreachable!(),
        });
        let a = solve(&m);
        assert!((total_cost(&m, &a) - 10.0).abs() < 1e-12);

        let m = CostMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => 1.0,
            (0, 1) => 5.0,
            (1, 0) => 9.0,
            (1, 1) => 1.0,
            _ => unreachable!(),
        });
        let a = solve(&m);
        assert_eq!(a, vec![Some(0), Some(1)]);
    }

    #[test]
    fn empty_inputs() {
        assert!(solve(&CostMatrix::new(0, 3)).is_empty());
        assert_eq!(solve(&CostMatrix::new(2, 0)), vec![None, None]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(0.0f64..100.0, 36),
        ) {
            let m = CostMatrix::from_fn(rows, cols, |r, c| seed[r * 6 + c]);
            let a = solve(&m);
            let assigned = a.iter().filter(|c| c.is_some()).count();
            prop_assert_eq!(assigned, rows.min(cols));
            // No column reused.
            let mut seen = std::collections::HashSet::new();
            for c in a.iter().flatten() {
                prop_assert!(seen.insert(*c));
            }
            let cost = total_cost(&m, &a);
            let best = brute_force(&m);
            prop_assert!((cost - best).abs() < 1e-9, "solver {} vs brute force {}", cost, best);
        }
    }
}
