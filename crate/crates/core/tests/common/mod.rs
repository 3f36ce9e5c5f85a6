#![allow(dead_code)]

use gsmooth_core::{Edge, SignalBatch, SpectralGraph, WeightedGraph};
use rand::Rng;
use rand_distr::StandardNormal;

/// Connected graph: a random spanning tree plus extra edges with
/// probability `p`, weights uniform in [0.1, 2).
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, p: f64) -> SpectralGraph {
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        seen.insert((j, i));
        edges.push(Edge {
            src: j,
            dst: i,
            weight: rng.random_range(0.1..2.0),
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            if !seen.contains(&(i, j)) && rng.random_bool(p) {
                edges.push(Edge {
                    src: i,
                    dst: j,
                    weight: rng.random_range(0.1..2.0),
                });
            }
        }
    }
    SpectralGraph::new(WeightedGraph::new(n, edges).unwrap()).unwrap()
}

pub fn gaussian_batch(rng: &mut impl Rng, m: usize, n: usize) -> SignalBatch {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    SignalBatch::from_rows(&rows).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Prints one result line and returns `pass` so callers can assert on it.
pub fn report(criterion: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {criterion:>2} {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
