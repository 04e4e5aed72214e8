// SPDX-License-Identifier: MIT OR Apache-2.0

//! Approximate shortest Hamiltonian path and threshold pruning.
//!
//! The path is grown greedily in Kruskal fashion: edges are visited in
//! nondecreasing weight order and accepted when they join two different
//! fragments and neither endpoint already has degree two. On a complete graph
//! this always terminates with a single Hamiltonian path.

use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::{Clustering, Threshold};
use crate::error::{CsasError, Result};
use crate::series::SeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Vertex order `j_1, ..., j_K` and the `K - 1` consecutive edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPath {
    order: Vec<usize>,
    edge_weights: Vec<f64>,
}

impl HamiltonianPath {
    pub fn new(order: Vec<usize>, edge_weights: Vec<f64>) -> Result<Self> {
        let k = order.len();
        if k == 0 {
            return Err(CsasError::TooFewRegions { needed: 1, found: 0 });
        }
        if edge_weights.len() + 1 != k {
            return Err(CsasError::LengthMismatch {
                expected: k - 1,
                found: edge_weights.len(),
            });
        }
        let mut seen = vec![false; k];
        for &j in &order {
            if j >= k || seen[j] {
                return Err(CsasError::InvalidParameter {
                    name: "order",
                    reason: "not a permutation of 0..K",
                });
            }
            seen[j] = true;
        }
        if let Some(index) = edge_weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(CsasError::NonFinite { what: "edge weight", index });
        }
        Ok(Self { order, edge_weights })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `x_s = d(Z_{j_s}, Z_{j_{s+1}})`.
    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    pub fn num_vertices(&self) -> usize {
        self.order.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.edge_weights.iter().sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = WeightedEdge> + '_ {
        self.order
            .windows(2)
            .zip(&self.edge_weights)
            .map(|(p, &w)| WeightedEdge { u: p[0], v: p[1], w })
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Greedy path over the curve distances of `panel`.
pub fn build_hamiltonian_path(panel: &SeriesPanel) -> Result<HamiltonianPath> {
    let edges = panel
        .pairwise_distances()
        .into_iter()
        .map(|(u, v, w)| WeightedEdge { u, v, w })
        .collect();
    hamiltonian_path_from_edges(panel.num_regions(), edges)
}

/// Greedy path over an explicit complete edge list on `k` vertices.
///
/// Ties in weight are broken by `(u, v)` after normalising each edge so that
/// `u < v`.
pub fn hamiltonian_path_from_edges(k: usize, mut edges: Vec<WeightedEdge>) -> Result<HamiltonianPath> {
    if k < 2 {
        return Err(CsasError::TooFewRegions { needed: 2, found: k });
    }
    for e in edges.iter_mut() {
        if e.u > e.v {
            core::mem::swap(&mut e.u, &mut e.v);
        }
    }
    if let Some(index) = edges.iter().position(|e| !(e.w.is_finite() && e.w >= 0.0)) {
        return Err(CsasError::NonFinite { what: "edge weight", index });
    }
    edges.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.u.cmp(&b.u)).then(a.v.cmp(&b.v)));

    let mut sets = DisjointSets::new(k);
    let mut degree = vec![0u8; k];
    let mut adjacency: Vec<[Option<(usize, f64)>; 2]> = vec![[None, None]; k];
    let mut accepted = 0;
    for e in &edges {
        if accepted == k - 1 {
            break;
        }
        if e.u == e.v || degree[e.u] >= 2 || degree[e.v] >= 2 {
            continue;
        }
        if !sets.union(e.u, e.v) {
            continue;
        }
        adjacency[e.u][degree[e.u] as usize] = Some((e.v, e.w));
        adjacency[e.v][degree[e.v] as usize] = Some((e.u, e.w));
        degree[e.u] += 1;
        degree[e.v] += 1;
        accepted += 1;
    }
    if accepted != k - 1 {
        return Err(CsasError::InvalidParameter {
            name: "edges",
            reason: "edge list does not cover a complete graph",
        });
    }

    // Walk from the lowest-numbered endpoint.
    let start = (0..k).find(|&j| degree[j] == 1).unwrap_or(0);
    let mut order = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k - 1);
    let mut prev = usize::MAX;
    let mut cur = start;
    order.push(cur);
    while order.len() < k {
        let (next, w) = adjacency[cur]
            .iter()
            .flatten()
            .copied()
            .find(|&(n, _)| n != prev)
            .expect("accepted edges form a single path");
        weights.push(w);
        order.push(next);
        prev = cur;
        cur = next;
    }
    HamiltonianPath::new(order, weights)
}

/// Keeps path edges with weight `<= theta`; connected components become
/// clusters.
pub fn prune_and_components(path: &HamiltonianPath, theta: f64) -> Result<Clustering> {
    if !(theta >= 0.0) {
        return Err(CsasError::InvalidParameter {
            name: "theta",
            reason: "threshold must be a non-negative number",
        });
    }
    Ok(components_at(path, theta))
}

pub(crate) fn components_at(path: &HamiltonianPath, theta: f64) -> Clustering {
    let k = path.num_vertices();
    let mut component = vec![0usize; k];
    let mut current = 0usize;
    component[path.order[0]] = current;
    for (s, &w) in path.edge_weights.iter().enumerate() {
        if w > theta {
            current += 1;
        }
        component[path.order[s + 1]] = current;
    }
    Clustering::from_labels(&component, Threshold::Value(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::CurveSeries;
    use alloc::format;

    fn constant_panel(levels: &[f64]) -> SeriesPanel {
        SeriesPanel::new(
            levels
                .iter()
                .enumerate()
                .map(|(i, &c)| CurveSeries::new(format!("r{i}"), vec![c; 5]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_vertices() {
        let p = build_hamiltonian_path(&constant_panel(&[0.0, 3.0])).unwrap();
        assert_eq!(p.order(), &[0, 1]);
        assert_eq!(p.edge_weights(), &[3.0]);
    }

    #[test]
    fn three_levels_path_is_sorted() {
        let p = build_hamiltonian_path(&constant_panel(&[10.0, 0.0, 1.0])).unwrap();
        let order = p.order();
        assert!(order == [0, 2, 1] || order == [1, 2, 0], "{order:?}");
        assert_eq!(p.total_weight(), 10.0);
    }

    #[test]
    fn too_few_vertices() {
        assert!(build_hamiltonian_path(&constant_panel(&[1.0])).is_err());
    }

    #[test]
    fn prune_examples() {
        let path = HamiltonianPath::new(vec![0, 1, 2, 3], vec![0.1, 5.0, 0.2]).unwrap();
        let c = prune_and_components(&path, 1.0).unwrap();
        assert_eq!(c.num_clusters(), 2);
        assert_eq!(c.assignment(), &[1, 1, 2, 2]);
        assert_eq!(prune_and_components(&path, 5.0).unwrap().num_clusters(), 1);
        assert_eq!(prune_and_components(&path, 0.05).unwrap().num_clusters(), 4);
        assert!(prune_and_components(&path, -1.0).is_err());
    }

    #[test]
    fn invalid_paths_rejected() {
        assert!(HamiltonianPath::new(vec![0, 0], vec![1.0]).is_err());
        assert!(HamiltonianPath::new(vec![0, 1], vec![]).is_err());
        assert!(HamiltonianPath::new(vec![0, 1], vec![-1.0]).is_err());
    }

    #[test]
    fn ties_are_deterministic() {
        let p = build_hamiltonian_path(&constant_panel(&[0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.order(), &[2, 0, 1, 3]);
    }
}
