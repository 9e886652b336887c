//! Transportation simplex (MODI) on a dense cost matrix with a spanning-tree basis.

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    /// Row-major flows, `rows × cols`.
    pub plan: Vec<f64>,
    pub cost: f64,
    /// Dual potentials with u_i + v_j ≤ c_ij and equality on the basis.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

impl TransportSolution {
    /// Σ a_i u_i + Σ b_j v_j
    pub fn dual_objective(&self, supply: &[f64], demand: &[f64]) -> f64 {
        supply.iter().zip(&self.u).map(|(a, u)| a * u).sum::<f64>() + demand.iter().zip(&self.v).map(|(b, v)| b * v).sum::<f64>()
    }
}

struct Basis {
    rows: usize,
    cols: usize,
    cells: Vec<(usize, usize)>,
}

impl Basis {
    /// Tree adjacency over nodes 0..rows (rows) and rows..rows+cols (columns).
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.rows + j, k));
            adj[self.rows + j].push((i, k));
        }
        adj
    }
}

/// Parent pointers (node, cell) and depths from a traversal rooted at row 0.
fn traverse(adj: &[Vec<(usize, usize)>]) -> Result<(Vec<Option<(usize, usize)>>, Vec<usize>, Vec<usize>)> {
    let n = adj.len();
    let mut parent = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    depth[0] = 0;
    let mut stack = vec![0];
    while let Some(x) = stack.pop() {
        order.push(x);
        for &(y, k) in &adj[x] {
            if depth[y] == usize::MAX {
                depth[y] = depth[x] + 1;
                parent[y] = Some((x, k));
                stack.push(y);
            }
        }
    }
    if order.len() != n {
        return Err(LabError::Lp("basis is not a spanning tree".into()));
    }
    Ok((parent, depth, order))
}

/// Minimizes Σ c_ij x_ij subject to row sums `supply`, column sums `demand`, x ≥ 0.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(LabError::Lp(format!("bad problem shape {m}x{n} with {} costs", cost.len())));
    }
    if supply.iter().chain(demand).any(|x| !(x.is_finite() && *x >= 0.0)) || cost.iter().any(|c| !c.is_finite()) {
        return Err(LabError::Lp("non-finite or negative data".into()));
    }
    let (sa, sb) = (supply.iter().sum::<f64>(), demand.iter().sum::<f64>());
    if (sa - sb).abs() > 1e-10 * sa.max(sb).max(1.0) {
        return Err(LabError::MassMismatch(sa, sb));
    }
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    // absorb rounding so both sides balance exactly
    b[n - 1] = (b[n - 1] + sa - sb).max(0.0);

    // northwest corner: a staircase of m + n − 1 cells
    let mut plan = vec![0.0; m * n];
    let mut cells = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let q = a[i].min(b[j]);
        plan[i * n + j] = q;
        a[i] -= q;
        b[j] -= q;
        cells.push((i, j));
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (a[i] <= b[j] && i < m - 1) || j == n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    let mut basis = Basis { rows: m, cols: n, cells };
    let scale = cost.iter().fold(0.0f64, |s, c| s.max(c.abs())).max(1e-300);
    let eps = 1e-13 * scale;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut degenerate_run = 0usize;
    for iter in 0..max_iter {
        let adj = basis.adjacency();
        let (parent, depth, order) = traverse(&adj)?;
        // potentials from the tree: u_i + v_j = c_ij on basic cells
        let mut pot = vec![0.0; m + n];
        for &x in order.iter().skip(1) {
            let (p, k) = parent[x].expect("non-root nodes have parents");
            let (ci, cj) = basis.cells[k];
            let c = cost[ci * n + cj];
            pot[x] = c - pot[p];
        }
        u.copy_from_slice(&pot[..m]);
        v.copy_from_slice(&pot[m..]);

        // entering cell: most negative reduced cost, or the first one during degenerate runs
        let bland = degenerate_run > m + n;
        let mut enter = None;
        let mut best = -eps;
        'search: for r in 0..m {
            for c in 0..n {
                let red = cost[r * n + c] - u[r] - v[c];
                if red < best {
                    enter = Some((r, c));
                    best = red;
                    if bland {
                        break 'search;
                    }
                }
            }
        }
        let Some((ei, ej)) = enter else {
            let total = plan.iter().zip(cost).map(|(x, c)| x * c).sum();
            return Ok(TransportSolution { plan, cost: total, u, v, iterations: iter });
        };

        // cycle: tree path from column ej to row ei
        let (mut x, mut y) = (m + ej, ei);
        let mut from_x = Vec::new();
        let mut from_y = Vec::new();
        while x != y {
            if depth[x] >= depth[y] {
                let (p, k) = parent[x].expect("path climbs to a common ancestor");
                from_x.push(k);
                x = p;
            } else {
                let (p, k) = parent[y].expect("path climbs to a common ancestor");
                from_y.push(k);
                y = p;
            }
        }
        from_y.reverse();
        let path: Vec<usize> = from_x.into_iter().chain(from_y).collect();
        // path alternates starting with a minus cell next to the entering column
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (ci, cj) = basis.cells[k];
                let f = plan[ci * n + cj];
                if f < theta || (f == theta && k < leave) {
                    theta = f;
                    leave = k;
                }
            }
        }
        degenerate_run = if theta <= 0.0 { degenerate_run + 1 } else { 0 };
        for (pos, &k) in path.iter().enumerate() {
            let (ci, cj) = basis.cells[k];
            let cell = &mut plan[ci * n + cj];
            if pos % 2 == 0 {
                *cell -= theta;
            } else {
                *cell += theta;
            }
        }
        plan[ei * n + ej] += theta;
        let (li, lj) = basis.cells[leave];
        plan[li * n + lj] = 0.0;
        basis.cells[leave] = (ei, ej);
    }
    Err(LabError::Lp("transportation simplex did not terminate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_optimum() {
        let supply = [20.0, 30.0, 25.0];
        let demand = [10.0, 10.0, 35.0, 20.0];
        let cost = [
            8.0, 6.0, 10.0, 9.0, //
            9.0, 12.0, 13.0, 7.0, //
            14.0, 9.0, 16.0, 5.0,
        ];
        let s = solve_transport(&supply, &demand, &cost).unwrap();
        let dual = s.dual_objective(&supply, &demand);
        assert!((s.cost - dual).abs() < 1e-9);
        for i in 0..3 {
            let row: f64 = s.plan[i * 4..(i + 1) * 4].iter().sum();
            assert!((row - supply[i]).abs() < 1e-12);
            for j in 0..4 {
                assert!(cost[i * 4 + j] - s.u[i] - s.v[j] > -1e-9);
            }
        }
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(matches!(solve_transport(&[1.0], &[0.5], &[0.0]), Err(LabError::MassMismatch(..))));
    }
}
