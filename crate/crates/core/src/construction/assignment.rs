//! Optimal rectangular linear assignment (Hungarian method with potentials).

/// Assigns every row of an `n × m` cost matrix (`n ≤ m`) to a distinct
/// column, minimizing the total cost. Returns the column chosen per row.
///
/// Panics if a row is shorter than the first row or `n > m`.
pub fn solve(costs: &[Vec<f64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    let m = costs[0].len();
    assert!(n <= m, "assignment needs rows <= columns ({n} > {m})");
    assert!(costs.iter().all(|r| r.len() == m), "ragged cost matrix");

    // 1-based; index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut result = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}

/// Row-ordered sum of the chosen entries.
pub fn total_cost(costs: &[Vec<f64>], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| costs[i][j]).sum()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injective row→column maps.
    pub(crate) fn brute_force(costs: &[Vec<f64>]) -> (f64, Vec<usize>) {
        fn rec(costs: &[Vec<f64>], row: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
            if row == costs.len() {
                let c = total_cost(costs, cur);
                if c < best.0 {
                    *best = (c, cur.clone());
                }
                return;
            }
            for j in 0..costs[0].len() {
                if !used[j] {
                    used[j] = true;
                    cur.push(j);
                    rec(costs, row + 1, used, cur, best);
                    cur.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (f64::INFINITY, Vec::new());
        rec(costs, 0, &mut vec![false; costs[0].len()], &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn two_by_three_example() {
        let costs = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 1.0]];
        let (bf_cost, bf) = brute_force(&costs);
        assert_eq!(bf, vec![0, 2]);
        assert_eq!(bf_cost, 2.0);
        let a = solve(&costs);
        assert_eq!(a, vec![0, 2]);
        assert_eq!(total_cost(&costs, &a), 2.0);
    }

    #[test]
    fn contested_column_is_resolved_optimally() {
        // Both rows prefer column 0; greedy in row order costs 1 + 10.
        let costs = vec![vec![1.0, 2.0], vec![1.5, 10.0]];
        let a = solve(&costs);
        assert_eq!(a, vec![1, 0]);
        assert_eq!(total_cost(&costs, &a), brute_force(&costs).0);
    }

    #[test]
    fn single_row_picks_minimum() {
        let costs = vec![vec![0.4, -0.2, 0.9]];
        assert_eq!(solve(&costs), vec![1]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            n in 1usize..=5,
            extra in 0usize..=3,
            seed in proptest::collection::vec(-3.0f64..3.0, 64),
        ) {
            let m = n + extra;
            let costs: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| seed[(i * m + j) % 64] + 0.01 * (i * 7 + j) as f64).collect()).collect();
            let a = solve(&costs);
            let mut seen = std::collections::HashSet::new();
            prop_assert!(a.iter().all(|j| seen.insert(*j)));
            prop_assert_eq!(total_cost(&costs, &a), brute_force(&costs).0);
        }
    }
}
