//! Minimum-cost perfect matching on a square cost matrix.
//!
//! Shortest-augmenting-path formulation of the Hungarian method with row and
//! column potentials, O(n^3) overall: each of the n phases grows one
//! augmenting path in O(n^2).

use super::MetricError;

/// Returns `(row_to_col, total_cost)` minimizing the sum of selected costs.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64), MetricError> {
    let n = cost.len();
    if n == 0 {
        return Err(MetricError::EmptyInput);
    }
    for row in cost {
        if row.len() != n {
            return Err(MetricError::DimMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if row.iter().any(|c| !c.is_finite()) {
            return Err(MetricError::NonFinite);
        }
    }

    // 1-indexed; column 0 is the virtual start of each augmenting path.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
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
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
        // Unwind the augmenting path.
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
        row_to_col[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|r| cost[r][row_to_col[r]]).sum();
    Ok((row_to_col, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over all n! permutations.
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for c in 0..cost.len() {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
        best
    }

    #[test]
    fn hand_case_three_by_three() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let (assign, total) = solve_assignment(&cost).unwrap();
        assert_eq!(total, 5.0);
        assert_eq!(assign, vec![1, 0, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..80 {
            let n = 1 + case % 6;
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random::<f64>() * 10.0).collect())
                .collect();
            let (assign, total) = solve_assignment(&cost).unwrap();
            // Valid permutation.
            let mut seen = vec![false; n];
            for &c in &assign {
                assert!(!seen[c]);
                seen[c] = true;
            }
            let expected = brute_force(&cost);
            assert!(
                (total - expected).abs() <= 1e-9,
                "n={n}: got {total}, brute force {expected}"
            );
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_assignment(&[]).is_err());
        assert!(solve_assignment(&[vec![1.0, 2.0]]).is_err());
        assert!(solve_assignment(&[vec![f64::NAN]]).is_err());
    }
}
