//! Exact transportation simplex for small dense problems.
//!
//! Starts from the north-west corner basis (a spanning tree with
//! `n + m - 1` cells, degenerate zeros included) and pivots on the most
//! negative reduced cost until none remains. Degenerate streaks switch the
//! entering rule to lowest-index-first to rule out cycling.

use std::collections::VecDeque;

/// Solves `min Σ c_ij x_ij` subject to row sums `supply` and column sums
/// `demand`. Returns the row-major plan. `demand` is rescaled to the total
/// of `supply` before solving.
pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    assert_eq!(cost.len(), n * m);
    let total_a: f64 = supply.iter().sum();
    let total_b: f64 = demand.iter().sum();
    let demand: Vec<f64> = demand.iter().map(|b| b * total_a / total_b).collect();

    let mut x = vec![0.0; n * m];
    let mut basic = vec![false; n * m];

    // north-west corner
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (supply[0], demand[0]);
    loop {
        let q = ra.min(rb).max(0.0);
        x[i * m + j] = q;
        basic[i * m + j] = true;
        ra -= q;
        rb -= q;
        if i + 1 == n && j + 1 == m {
            break;
        }
        if (ra <= rb && i + 1 < n) || j + 1 == m {
            i += 1;
            ra = supply[i];
        } else {
            j += 1;
            rb = demand[j];
        }
    }

    let scale = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-13 * scale.max(1e-300);
    let max_iter = 50 * n * m + 100;
    let mut degenerate_streak = 0usize;

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    for _ in 0..max_iter {
        potentials(n, m, cost, &basic, &mut u, &mut v);

        let bland = degenerate_streak > n + m;
        let mut entering: Option<(usize, f64)> = None;
        for r in 0..n {
            for c in 0..m {
                let k = r * m + c;
                if basic[k] {
                    continue;
                }
                let d = cost[k] - u[r] - v[c];
                if d < -eps {
                    match entering {
                        None => entering = Some((k, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((k, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            if bland && entering.is_some() {
                break;
            }
        }
        let Some((enter, _)) = entering else {
            break;
        };
        let (er, ec) = (enter / m, enter % m);

        // Tree path from row `er` to column `ec`; cells alternate -,+,-,...
        let path = tree_path(n, m, &basic, er, ec);
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (idx, &k) in path.iter().enumerate() {
            if idx % 2 == 0 && (x[k] < theta || (x[k] == theta && k < leave)) {
                theta = x[k];
                leave = k;
            }
        }
        if theta <= 0.0 {
            degenerate_streak += 1;
        } else {
            degenerate_streak = 0;
        }
        x[enter] += theta;
        for (idx, &k) in path.iter().enumerate() {
            if idx % 2 == 0 {
                x[k] -= theta;
            } else {
                x[k] += theta;
            }
        }
        x[leave] = 0.0;
        basic[leave] = false;
        basic[enter] = true;
    }
    for q in &mut x {
        if *q < 0.0 {
            *q = 0.0;
        }
    }
    x
}

fn potentials(n: usize, m: usize, cost: &[f64], basic: &[bool], u: &mut [f64], v: &mut [f64]) {
    let mut row_done = vec![false; n];
    let mut col_done = vec![false; m];
    let mut queue = VecDeque::new();
    u[0] = 0.0;
    row_done[0] = true;
    queue.push_back((true, 0usize));
    while let Some((is_row, idx)) = queue.pop_front() {
        if is_row {
            for c in 0..m {
                if basic[idx * m + c] && !col_done[c] {
                    v[c] = cost[idx * m + c] - u[idx];
                    col_done[c] = true;
                    queue.push_back((false, c));
                }
            }
        } else {
            for r in 0..n {
                if basic[r * m + idx] && !row_done[r] {
                    u[r] = cost[r * m + idx] - v[idx];
                    row_done[r] = true;
                    queue.push_back((true, r));
                }
            }
        }
    }
}

/// Cells on the basis-tree path from row `start_row` to column `end_col`,
/// ordered from the row end.
fn tree_path(n: usize, m: usize, basic: &[bool], start_row: usize, end_col: usize) -> Vec<usize> {
    // nodes: rows 0..n, columns n..n+m
    let total = n + m;
    let mut parent = vec![usize::MAX; total];
    let mut seen = vec![false; total];
    let mut queue = VecDeque::new();
    seen[start_row] = true;
    queue.push_back(start_row);
    let target = n + end_col;
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        if node < n {
            for c in 0..m {
                let nb = n + c;
                if basic[node * m + c] && !seen[nb] {
                    seen[nb] = true;
                    parent[nb] = node;
                    queue.push_back(nb);
                }
            }
        } else {
            let c = node - n;
            for r in 0..n {
                if basic[r * m + c] && !seen[r] {
                    seen[r] = true;
                    parent[r] = node;
                    queue.push_back(r);
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = target;
    while node != start_row {
        let p = parent[node];
        let (r, c) = if node < n { (node, p - n) } else { (p, node - n) };
        cells.push(r * m + c);
        node = p;
    }
    cells.reverse();
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_cost(plan: &[f64], cost: &[f64]) -> f64 {
        plan.iter().zip(cost).map(|(x, c)| x * c).sum()
    }

    #[test]
    fn fixes_a_bad_initial_corner() {
        // NW corner picks the diagonal, which is the worst assignment here.
        let cost = [10.0, 0.0, 0.0, 10.0];
        let plan = solve(&[0.5, 0.5], &[0.5, 0.5], &cost);
        assert_eq!(plan, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn matches_permutation_enumeration() {
        // 4x4 uniform assignment: the optimum is a permutation matrix.
        let cost = [
            4.0, 1.0, 3.0, 2.0, //
            2.0, 0.0, 5.0, 3.0, //
            3.0, 2.0, 2.0, 1.0, //
            1.0, 4.0, 3.0, 6.0,
        ];
        let w = [0.25; 4];
        let plan = solve(&w, &w, &cost);
        let mut best = f64::INFINITY;
        let mut perm = [0, 1, 2, 3];
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = (0..4).map(|i| 0.25 * cost[i * 4 + p[i]]).sum();
            best = best.min(c);
        });
        assert!((plan_cost(&plan, &cost) - best).abs() < 1e-14);
    }

    fn permute(a: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
        if k == a.len() {
            f(a);
            return;
        }
        for i in k..a.len() {
            a.swap(k, i);
            permute(a, k + 1, f);
            a.swap(k, i);
        }
    }

    #[test]
    fn rectangular_marginals_hold() {
        let supply = [0.1, 0.4, 0.5];
        let demand = [0.3, 0.3, 0.2, 0.2];
        let cost: Vec<f64> = (0..12).map(|k| ((k * 7) % 5) as f64 + 0.1 * k as f64).collect();
        let plan = solve(&supply, &demand, &cost);
        for i in 0..3 {
            let s: f64 = plan[i * 4..i * 4 + 4].iter().sum();
            assert!((s - supply[i]).abs() < 1e-12);
        }
        for j in 0..4 {
            let s: f64 = (0..3).map(|i| plan[i * 4 + j]).sum();
            assert!((s - demand[j]).abs() < 1e-12);
        }
    }
}
