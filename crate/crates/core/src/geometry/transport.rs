//! Min-cost flow with real-valued supplies (successive shortest paths with
//! Dijkstra on reduced costs). Backs the exact transport distance on grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

use super::flow::ProbabilityVector;
use super::grid::TorusGrid;

/// Largest grid handled by [`d1_distance_lp`].
pub const LP_CELL_CAP: usize = 4096;

const EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Uncapacitated min-cost flow network; reverse arcs carry the residuals.
#[derive(Debug, Clone)]
pub struct MinCostFlow {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self { arcs: Vec::new(), out: vec![Vec::new(); nodes] }
    }

    /// Adds an arc with unbounded capacity and nonnegative cost.
    pub fn add_arc(&mut self, from: usize, to: usize, cost: f64) {
        debug_assert!(cost >= 0.0);
        self.out[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap: f64::INFINITY, cost });
        self.out[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0.0, cost: -cost });
    }

    /// Minimum total cost to move `supply` (positive = source, negative =
    /// sink, summing to zero) through the network.
    pub fn solve(mut self, supply: &[f64]) -> f64 {
        let n = self.out.len();
        let mut excess = supply.to_vec();
        let mut potential = vec![0.0; n];
        let mut total = 0.0;
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        let mut done = vec![false; n];

        loop {
            let has_source = excess.iter().any(|&e| e > EPS);
            let has_sink = excess.iter().any(|&e| e < -EPS);
            if !(has_source && has_sink) {
                break;
            }
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            via.iter_mut().for_each(|v| *v = usize::MAX);
            done.iter_mut().for_each(|d| *d = false);
            let mut heap = BinaryHeap::new();
            for (v, &e) in excess.iter().enumerate() {
                if e > EPS {
                    dist[v] = 0.0;
                    heap.push(Entry(0.0, v));
                }
            }
            let mut target = None;
            while let Some(Entry(d, v)) = heap.pop() {
                if done[v] {
                    continue;
                }
                done[v] = true;
                if excess[v] < -EPS {
                    target = Some(v);
                    break;
                }
                for &a in &self.out[v] {
                    let arc = &self.arcs[a];
                    if arc.cap <= EPS {
                        continue;
                    }
                    let reduced = (arc.cost + potential[v] - potential[arc.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        via[arc.to] = a;
                        heap.push(Entry(nd, arc.to));
                    }
                }
            }
            let Some(t) = target else { break };
            let reach = dist[t];
            for v in 0..n {
                potential[v] += dist[v].min(reach);
            }

            // Walk back to the source, find the bottleneck, then push.
            let mut amount = -excess[t];
            let mut v = t;
            while via[v] != usize::MAX {
                let a = via[v];
                amount = amount.min(self.arcs[a].cap);
                v = self.arcs[a ^ 1].to;
            }
            let source = v;
            amount = amount.min(excess[source]);
            let mut v = t;
            while via[v] != usize::MAX {
                let a = via[v];
                self.arcs[a].cap -= amount;
                self.arcs[a ^ 1].cap += amount;
                total += amount * self.arcs[a].cost;
                v = self.arcs[a ^ 1].to;
            }
            excess[source] -= amount;
            excess[t] += amount;
        }
        total
    }
}

/// Exact transport distance under the wrapped-L1 ground cost, solved as a
/// min-cost flow on the nearest-neighbour torus graph (each edge costs `h`).
/// Works for both one- and two-dimensional grids.
pub fn d1_distance_lp(mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<f64> {
    let grid = *mu.grid();
    grid.check_same(nu.grid())?;
    let cells = grid.cells();
    if cells > LP_CELL_CAP {
        return Err(Error::Capacity { cells, cap: LP_CELL_CAP });
    }
    Ok(grid_transport(&grid, mu.as_slice(), nu.as_slice()))
}

pub(crate) fn grid_transport(grid: &TorusGrid, mu: &[f64], nu: &[f64]) -> f64 {
    let vol = grid.cell_volume();
    let mut net = MinCostFlow::new(grid.cells());
    let h = grid.h();
    for c in 0..grid.cells() {
        for axis in 0..grid.dim() {
            let next = grid.shift(c, axis, 1);
            net.add_arc(c, next, h);
            net.add_arc(next, c, h);
        }
    }
    let supply: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| (a - b) * vol).collect();
    net.solve(&supply).max(0.0)
}
