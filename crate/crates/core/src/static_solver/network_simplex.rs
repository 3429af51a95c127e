//! Network simplex on the bipartite transportation graph.
//!
//! The basis is a spanning tree of `n + m − 1` cells. The solver keeps its
//! basis between calls, so re-solving with new costs over the same marginals
//! starts from the previous optimal vertex (which stays primal feasible).
//! Entering cells are chosen by Dantzig's rule; after a long run of
//! degenerate pivots the solver switches to Bland's smallest-index rule,
//! which cannot cycle.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct TransportSimplex {
    supply: Vec<f64>,
    demand: Vec<f64>,
    /// Basic cells `(i, j)`.
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// `slot_of[i * m + j]` is the basis slot of cell `(i, j)`.
    slot_of: Vec<usize>,
    pub pivots: usize,
}

impl TransportSimplex {
    pub fn new(supply: &[f64], demand: &[f64]) -> Result<Self> {
        let n = supply.len();
        let m = demand.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidMeasure("empty marginal".into()));
        }
        let sa: f64 = supply.iter().sum();
        let sb: f64 = demand.iter().sum();
        if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
            return Err(Error::InvalidMeasure(format!(
                "unbalanced marginals: total supply {sa}, total demand {sb}"
            )));
        }
        let mut s = Self {
            supply: supply.to_vec(),
            demand: demand.to_vec(),
            cells: Vec::with_capacity(n + m - 1),
            flow: Vec::with_capacity(n + m - 1),
            slot_of: vec![NONE; n * m],
            pivots: 0,
        };
        s.northwest_corner();
        Ok(s)
    }

    fn n(&self) -> usize {
        self.supply.len()
    }

    fn m(&self) -> usize {
        self.demand.len()
    }

    fn northwest_corner(&mut self) {
        let (n, m) = (self.n(), self.m());
        let mut a = self.supply.clone();
        let mut b = self.demand.clone();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]).max(0.0);
            self.push_cell(i, j, x);
            a[i] -= x;
            b[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 {
                i += 1;
            } else if a[i] <= b[j] {
                // ties advance the row only; the column gets a zero-flow basic cell
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(self.cells.len(), n + m - 1);
    }

    fn push_cell(&mut self, i: usize, j: usize, x: f64) {
        let m = self.m();
        self.slot_of[i * m + j] = self.cells.len();
        self.cells.push((i, j));
        self.flow.push(x);
    }

    /// Solves `min Σ c_ij x_ij` for a row-major `n×m` cost. Returns the
    /// optimal value and the dense plan.
    pub fn solve(&mut self, cost: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (n, m) = (self.n(), self.m());
        if cost.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "cost has {} entries, expected {}",
                cost.len(),
                n * m
            )));
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("transport cost"));
        }
        let cmax = cost.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * cmax.max(1e-300);
        let nodes = n + m;
        let max_pivots = 50 * (nodes * nodes).max(1000);
        let bland_after = 10 * nodes;

        let mut tree = Tree::new(nodes);
        let mut degenerate_run = 0usize;
        let mut pivots = 0usize;
        loop {
            tree.build(&self.cells, n, cost, m);
            let entering = if degenerate_run < bland_after {
                self.dantzig(cost, &tree.pot, tol)
            } else {
                self.bland(cost, &tree.pot, tol)
            };
            let Some((ei, ej)) = entering else { break };
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Solver(format!(
                    "network simplex exceeded {max_pivots} pivots"
                )));
            }
            let theta = self.pivot(&tree, ei, ej, degenerate_run >= bland_after);
            if theta <= 0.0 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
        }
        self.pivots += pivots;

        let mut plan = vec![0.0; n * m];
        let mut value = 0.0;
        for (slot, &(i, j)) in self.cells.iter().enumerate() {
            let x = self.flow[slot];
            plan[i * m + j] = x;
            value += x * cost[i * m + j];
        }
        Ok((value, plan))
    }

    fn dantzig(&self, cost: &[f64], pot: &[f64], tol: f64) -> Option<(usize, usize)> {
        let (n, m) = (self.n(), self.m());
        let mut best = -tol;
        let mut arg = None;
        for i in 0..n {
            let u = pot[i];
            let row = &cost[i * m..(i + 1) * m];
            for (j, c) in row.iter().enumerate() {
                let r = c - u - pot[n + j];
                if r < best && self.slot_of[i * m + j] == NONE {
                    best = r;
                    arg = Some((i, j));
                }
            }
        }
        arg
    }

    fn bland(&self, cost: &[f64], pot: &[f64], tol: f64) -> Option<(usize, usize)> {
        let (n, m) = (self.n(), self.m());
        for i in 0..n {
            for j in 0..m {
                if self.slot_of[i * m + j] == NONE && cost[i * m + j] - pot[i] - pot[n + j] < -tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Pushes flow around the cycle closed by `(ei, ej)` and swaps the
    /// blocking cell out of the basis. Returns the step length.
    fn pivot(&mut self, tree: &Tree, ei: usize, ej: usize, smallest_index: bool) -> f64 {
        let (n, m) = (self.n(), self.m());
        // Walk from the column node and the row node up to their common ancestor.
        let mut a = ei;
        let mut b = n + ej;
        let mut up_from_col = Vec::new();
        let mut up_from_row = Vec::new();
        while tree.depth[b] > tree.depth[a] {
            up_from_col.push(tree.parent_slot[b]);
            b = tree.parent[b];
        }
        while tree.depth[a] > tree.depth[b] {
            up_from_row.push(tree.parent_slot[a]);
            a = tree.parent[a];
        }
        while a != b {
            up_from_col.push(tree.parent_slot[b]);
            b = tree.parent[b];
            up_from_row.push(tree.parent_slot[a]);
            a = tree.parent[a];
        }
        // Cycle order after the entering cell: column side upward, then row side downward.
        let cycle: Vec<usize> = up_from_col
            .iter()
            .copied()
            .chain(up_from_row.iter().rev().copied())
            .collect();

        let mut theta = f64::INFINITY;
        let mut leave = NONE;
        for (k, &slot) in cycle.iter().enumerate() {
            if k % 2 != 0 {
                continue;
            }
            let x = self.flow[slot];
            let better = if x < theta {
                true
            } else if x == theta {
                if smallest_index {
                    let (ci, cj) = self.cells[slot];
                    let (li, lj) = self.cells[leave];
                    ci * m + cj < li * m + lj
                } else {
                    true
                }
            } else {
                false
            };
            if better {
                theta = x;
                leave = slot;
            }
        }
        let theta = theta.max(0.0);
        for (k, &slot) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                self.flow[slot] = (self.flow[slot] - theta).max(0.0);
            } else {
                self.flow[slot] += theta;
            }
        }
        let (li, lj) = self.cells[leave];
        self.slot_of[li * m + lj] = NONE;
        self.cells[leave] = (ei, ej);
        self.flow[leave] = theta;
        self.slot_of[ei * m + ej] = leave;
        theta
    }
}

/// Rooted spanning tree with node potentials (`u` for rows, `v` for columns).
struct Tree {
    adjacency: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_slot: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    stack: Vec<usize>,
}

impl Tree {
    fn new(nodes: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); nodes],
            parent: vec![NONE; nodes],
            parent_slot: vec![NONE; nodes],
            depth: vec![0; nodes],
            pot: vec![0.0; nodes],
            stack: Vec::with_capacity(nodes),
        }
    }

    fn build(&mut self, cells: &[(usize, usize)], n: usize, cost: &[f64], m: usize) {
        for a in &mut self.adjacency {
            a.clear();
        }
        for (slot, &(i, j)) in cells.iter().enumerate() {
            self.adjacency[i].push(slot);
            self.adjacency[n + j].push(slot);
        }
        self.parent.fill(NONE);
        self.parent_slot.fill(NONE);
        self.stack.clear();
        self.stack.push(0);
        self.parent[0] = 0;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        while let Some(node) = self.stack.pop() {
            for k in 0..self.adjacency[node].len() {
                let slot = self.adjacency[node][k];
                let (i, j) = cells[slot];
                let other = if node < n { n + j } else { i };
                if self.parent[other] != NONE {
                    continue;
                }
                self.parent[other] = node;
                self.parent_slot[other] = slot;
                self.depth[other] = self.depth[node] + 1;
                // u_i + v_j = c_ij on basic cells
                self.pot[other] = cost[i * m + j] - self.pot[node];
                self.stack.push(other);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_permutation(cost: &[f64], n: usize) -> f64 {
        fn rec(k: usize, n: usize, used: &mut Vec<bool>, acc: f64, cost: &[f64], best: &mut f64) {
            if k == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(k + 1, n, used, acc + cost[k * n + j], cost, best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(0, n, &mut vec![false; n], 0.0, cost, &mut best);
        best / n as f64
    }

    #[test]
    fn matches_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = 6;
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 10.0).collect();
            let w = vec![1.0 / n as f64; n];
            let mut s = TransportSimplex::new(&w, &w).unwrap();
            let (v, plan) = s.solve(&cost).unwrap();
            assert!((v - brute_force_permutation(&cost, n)).abs() < 1e-12);
            for i in 0..n {
                let r: f64 = plan[i * n..(i + 1) * n].iter().sum();
                assert!((r - w[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, m) = (7, 5);
        let mut a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
        let mut b: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.1).collect();
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        a.iter_mut().for_each(|x| *x /= sa);
        b.iter_mut().for_each(|x| *x /= sb);
        let mut warm = TransportSimplex::new(&a, &b).unwrap();
        for _ in 0..10 {
            let cost: Vec<f64> = (0..n * m).map(|_| rng.random::<f64>()).collect();
            let (v1, _) = warm.solve(&cost).unwrap();
            let (v2, _) = TransportSimplex::new(&a, &b).unwrap().solve(&cost).unwrap();
            assert!((v1 - v2).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_uniform_instance_terminates() {
        // all-equal costs: every vertex is optimal, pivots must not cycle
        let n = 8;
        let w = vec![1.0 / n as f64; n];
        let mut s = TransportSimplex::new(&w, &w).unwrap();
        let (v, _) = s.solve(&vec![2.0; n * n]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(TransportSimplex::new(&[0.5, 0.5], &[0.7, 0.7]).is_err());
    }
}
