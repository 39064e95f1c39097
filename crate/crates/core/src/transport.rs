//! Exact solver for the balanced transportation problem: the primal network
//! simplex on the bipartite supply/demand graph (the classical u-v method).
//!
//! The basis is kept as a spanning tree of `ns + nt - 1` cells, degenerate
//! zero-flow cells included. Entering cells are priced with Dantzig's rule;
//! after a run of degenerate pivots the solver switches to Bland's
//! smallest-index rule until flow moves again.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Cell {
    i: usize,
    j: usize,
    flow: f64,
}

/// One cell of an optimal basic solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shipment {
    pub from: usize,
    pub to: usize,
    pub amount: f64,
}

const DEGENERATE_RUN: usize = 50;

/// Minimizes `sum cost[i][j] * flow[i][j]` subject to row sums `supply` and
/// column sums `demand`. `cost` is row-major `supply.len() x demand.len()`.
/// Both margins must be positive with equal totals (to rounding).
pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Vec<Shipment>> {
    let (ns, nt) = (supply.len(), demand.len());
    if ns == 0 || nt == 0 {
        return Err(Error::domain("transport problem needs sources and sinks"));
    }
    Error::check_dim(ns * nt, cost.len())?;

    let mut basis = northwest_corner(supply, demand);
    let n_nodes = ns + nt;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (id, c) in basis.iter().enumerate() {
        adj[c.i].push(id);
        adj[ns + c.j].push(id);
    }

    let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * scale;
    let max_pivots = 50 * ns * nt + 1000;

    let mut u = vec![0.0; ns];
    let mut v = vec![0.0; nt];
    let mut seen = vec![false; n_nodes];
    let mut parent: Vec<Option<usize>> = vec![None; n_nodes];
    let mut queue = Vec::with_capacity(n_nodes);
    let mut degenerate = 0usize;

    for _ in 0..max_pivots {
        potentials(&basis, &adj, ns, cost, nt, &mut u, &mut v, &mut seen, &mut queue);

        let entering = if degenerate < DEGENERATE_RUN {
            let mut best = None;
            let mut best_r = -tol;
            for i in 0..ns {
                let row = &cost[i * nt..(i + 1) * nt];
                for j in 0..nt {
                    let r = row[j] - u[i] - v[j];
                    if r < best_r {
                        best_r = r;
                        best = Some((i, j));
                    }
                }
            }
            best
        } else {
            (0..ns)
                .flat_map(|i| (0..nt).map(move |j| (i, j)))
                .find(|&(i, j)| cost[i * nt + j] - u[i] - v[j] < -tol)
        };
        let Some((ei, ej)) = entering else {
            return Ok(basis
                .iter()
                .map(|c| Shipment {
                    from: c.i,
                    to: c.j,
                    amount: c.flow,
                })
                .collect());
        };

        let path = tree_path(&basis, &adj, ns, ei, ns + ej, &mut seen, &mut parent, &mut queue);

        // path[0] touches the entering row; odd positions (0-based even) lose flow
        let mut leave_pos = 0;
        for (k, &id) in path.iter().enumerate().step_by(2) {
            let (c, l) = (basis[id], basis[path[leave_pos]]);
            if c.flow < l.flow || (c.flow == l.flow && (c.i, c.j) < (l.i, l.j)) {
                leave_pos = k;
            }
        }
        let theta = basis[path[leave_pos]].flow;
        for (k, &id) in path.iter().enumerate() {
            let c = &mut basis[id];
            if k % 2 == 0 {
                c.flow = (c.flow - theta).max(0.0);
            } else {
                c.flow += theta;
            }
        }
        degenerate = if theta > 0.0 { 0 } else { degenerate + 1 };

        let leave = path[leave_pos];
        let old = basis[leave];
        adj[old.i].retain(|&x| x != leave);
        adj[ns + old.j].retain(|&x| x != leave);
        basis[leave] = Cell {
            i: ei,
            j: ej,
            flow: theta,
        };
        adj[ei].push(leave);
        adj[ns + ej].push(leave);
    }
    Err(Error::domain("transport simplex exceeded its pivot budget"))
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Vec<Cell> {
    let (ns, nt) = (supply.len(), demand.len());
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let mut cells = Vec::with_capacity(ns + nt - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let f = if i == ns - 1 && j == nt - 1 {
            // last cell absorbs rounding differences between the margins
            a[i].max(b[j]).max(0.0)
        } else {
            a[i].min(b[j]).max(0.0)
        };
        cells.push(Cell { i, j, flow: f });
        a[i] -= f;
        b[j] -= f;
        if i == ns - 1 && j == nt - 1 {
            break;
        }
        if i == ns - 1 {
            j += 1;
        } else if j == nt - 1 || a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    cells
}

#[allow(clippy::too_many_arguments)]
fn potentials(
    basis: &[Cell],
    adj: &[Vec<usize>],
    ns: usize,
    cost: &[f64],
    nt: usize,
    u: &mut [f64],
    v: &mut [f64],
    seen: &mut [bool],
    queue: &mut Vec<usize>,
) {
    seen.iter_mut().for_each(|s| *s = false);
    queue.clear();
    queue.push(0);
    seen[0] = true;
    u[0] = 0.0;
    let mut head = 0;
    while head < queue.len() {
        let node = queue[head];
        head += 1;
        for &id in &adj[node] {
            let c = basis[id];
            let other = if node < ns { ns + c.j } else { c.i };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            let cij = cost[c.i * nt + c.j];
            if node < ns {
                v[c.j] = cij - u[c.i];
            } else {
                u[c.i] = cij - v[c.j];
            }
            queue.push(other);
        }
    }
}

/// Basis cells on the tree path from node `from` to node `to`, ordered
/// starting at `from`.
#[allow(clippy::too_many_arguments)]
fn tree_path(
    basis: &[Cell],
    adj: &[Vec<usize>],
    ns: usize,
    from: usize,
    to: usize,
    seen: &mut [bool],
    parent: &mut [Option<usize>],
    queue: &mut Vec<usize>,
) -> Vec<usize> {
    seen.iter_mut().for_each(|s| *s = false);
    queue.clear();
    queue.push(from);
    seen[from] = true;
    parent[from] = None;
    let mut head = 0;
    while head < queue.len() {
        let node = queue[head];
        head += 1;
        if node == to {
            break;
        }
        for &id in &adj[node] {
            let c = basis[id];
            let other = if node < ns { ns + c.j } else { c.i };
            if !seen[other] {
                seen[other] = true;
                parent[other] = Some(id);
                queue.push(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while let Some(id) = parent[node] {
        path.push(id);
        let c = basis[id];
        node = if node < ns { ns + c.j } else { c.i };
    }
    path.reverse();
    path
}
