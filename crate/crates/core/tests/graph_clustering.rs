// SPDX-License-Identifier: MIT OR Apache-2.0

use csas_core::clustering::{bic_threshold_select, purity, strict_purity, Clustering, Threshold};
use csas_core::graph::{build_hamiltonian_path, prune_and_components, HamiltonianPath};
use csas_core::series::{curve_distance, CurveSeries, SeriesPanel};
use proptest::prelude::*;

fn panel_from(values: &[Vec<f64>]) -> SeriesPanel {
    SeriesPanel::new(
        values
            .iter()
            .enumerate()
            .map(|(i, v)| CurveSeries::new(format!("r{i}"), v.clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

fn random_panel() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=8, 1usize..=5).prop_flat_map(|(k, t)| {
        prop::collection::vec(prop::collection::vec(0.0f64..10.0, t), k)
    })
}

fn dist(values: &[Vec<f64>], u: usize, v: usize) -> f64 {
    curve_distance(&values[u], &values[v]).unwrap()
}

/// Shortest Hamiltonian path weight by trying every permutation.
fn exhaustive_shp(values: &[Vec<f64>]) -> f64 {
    fn go(values: &[Vec<f64>], order: &mut Vec<usize>, used: &mut [bool], acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        if order.len() == values.len() {
            *best = acc;
            return;
        }
        for j in 0..values.len() {
            if used[j] {
                continue;
            }
            let step = order.last().map_or(0.0, |&p| dist(values, p, j));
            used[j] = true;
            order.push(j);
            go(values, order, used, acc + step, best);
            order.pop();
            used[j] = false;
        }
    }
    let mut best = f64::INFINITY;
    go(values, &mut Vec::new(), &mut vec![false; values.len()], 0.0, &mut best);
    best
}

/// Components of the graph keeping path edges with weight `<= theta`, by
/// repeated label relaxation.
fn brute_components(path: &HamiltonianPath, theta: f64) -> Vec<usize> {
    let k = path.num_vertices();
    let mut label: Vec<usize> = (0..k).collect();
    loop {
        let mut changed = false;
        for e in path.edges() {
            if e.w <= theta {
                let m = label[e.u].min(label[e.v]);
                if label[e.u] != m || label[e.v] != m {
                    label[e.u] = m;
                    label[e.v] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            return label;
        }
    }
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn path_is_hamiltonian_and_no_shorter_than_optimum(values in random_panel()) {
        let panel = panel_from(&values);
        let path = build_hamiltonian_path(&panel).unwrap();
        let k = values.len();
        let mut seen = vec![false; k];
        for &j in path.order() {
            prop_assert!(!seen[j]);
            seen[j] = true;
        }
        prop_assert_eq!(path.edge_weights().len(), k - 1);
        for (e, w) in path.edges().zip(path.edge_weights()) {
            prop_assert!((dist(&values, e.u, e.v) - w).abs() < 1e-12);
        }
        prop_assert!(path.total_weight() >= exhaustive_shp(&values) - 1e-9);
    }

    #[test]
    fn pruning_matches_brute_force(values in random_panel()) {
        let path = build_hamiltonian_path(&panel_from(&values)).unwrap();
        let eps = 1e-9;
        for &w in path.edge_weights() {
            for theta in [w - eps, w, w + eps] {
                if theta < 0.0 {
                    continue;
                }
                let fast = prune_and_components(&path, theta).unwrap();
                prop_assert!(same_partition(fast.assignment(), &brute_components(&path, theta)));
            }
        }
    }

    #[test]
    fn pruning_is_monotone_in_theta(values in random_panel(), a in 0.0f64..12.0, b in 0.0f64..12.0) {
        let path = build_hamiltonian_path(&panel_from(&values)).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let fine = prune_and_components(&path, lo).unwrap();
        let coarse = prune_and_components(&path, hi).unwrap();
        prop_assert!(fine.refines(&coarse));
        prop_assert!(fine.num_clusters() >= coarse.num_clusters());
    }

    #[test]
    fn purity_bounds(labels in prop::collection::vec(0usize..4, 1..20), other in prop::collection::vec(0usize..4, 1..20)) {
        let n = labels.len().min(other.len());
        let found = Clustering::from_labels(&labels[..n], Threshold::GroundTruth);
        let truth = Clustering::from_labels(&other[..n], Threshold::GroundTruth);
        let p = purity(&found, &truth).unwrap();
        let s = strict_purity(&found, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(s <= p && s > -1.0);
        prop_assert!((purity(&truth, &truth).unwrap() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn selection_trace_is_reproducible() {
    let values: Vec<Vec<f64>> = (0..12)
        .map(|j| (0..20).map(|t| ((j % 3) as f64) * 2.0 + 0.01 * ((j * 7 + t * 3) % 5) as f64).collect())
        .collect();
    let path = build_hamiltonian_path(&panel_from(&values)).unwrap();
    let a = bic_threshold_select(&path).unwrap();
    let b = bic_threshold_select(&path).unwrap();
    assert_eq!(a, b);
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert_eq!(x.bic.map(f64::to_bits), y.bic.map(f64::to_bits));
    }
    assert_eq!(a.clustering.num_clusters(), 3);
}

#[test]
fn separated_classes_are_recovered_below_half_the_gap() {
    // Class means 0, 3, 6 (RMS gap 3), tiny within-class spread, θ = 1 < gap / 2.
    let values: Vec<Vec<f64>> = (0..15)
        .map(|j| {
            let level = 3.0 * (j % 3) as f64;
            (0..30).map(|t| level + 1e-3 * (((j * 31 + t * 17) % 11) as f64 - 5.0)).collect()
        })
        .collect();
    let truth = Clustering::from_labels(&(0..15).map(|j| j % 3).collect::<Vec<_>>(), Threshold::GroundTruth);
    let path = build_hamiltonian_path(&panel_from(&values)).unwrap();
    let found = prune_and_components(&path, 1.0).unwrap();
    assert_eq!(strict_purity(&found, &truth).unwrap(), 1.0);
    let selected = bic_threshold_select(&path).unwrap().clustering;
    assert_eq!(strict_purity(&selected, &truth).unwrap(), 1.0);
}
