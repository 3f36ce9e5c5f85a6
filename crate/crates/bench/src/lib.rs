//! Fixtures shared by the benchmarks.

use gsmooth_core::{Edge, SignalBatch, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Path backbone plus random chords with probability `p`, so the graph is
/// always connected.
pub fn sparse_graph(n: usize, p: f64, seed: u64) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<Edge> = (1..n)
        .map(|i| Edge {
            src: i - 1,
            dst: i,
            weight: rng.random_range(0.1..1.0),
        })
        .collect();
    for i in 0..n {
        for j in i + 2..n {
            if rng.random_bool(p) {
                edges.push(Edge {
                    src: i,
                    dst: j,
                    weight: rng.random_range(0.1..1.0),
                });
            }
        }
    }
    WeightedGraph::new(n, edges).expect("valid by construction")
}

pub fn gaussian_batch(m: usize, n: usize, seed: u64) -> SignalBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    SignalBatch::from_rows(&rows).expect("non-empty")
}
