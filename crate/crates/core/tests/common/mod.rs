//! Instance families shared by the integration tests.
#![allow(dead_code)]

use hitcut::graph::{BipartiteInstance, Color};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected random graph on 4..=8 nodes with a random red/blue coloring.
/// Edge density is drawn per instance; draws repeat until the graph is
/// connected and both colors occur.
pub fn small_instance(seed: u64) -> BipartiteInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(4..=8);
        let p = rng.random_range(0.3..0.7);
        let colors: Vec<Color> = (0..n)
            .map(|_| if rng.random_bool(0.6) { Color::Red } else { Color::Blue })
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        if let Ok(inst) = BipartiteInstance::new(n, &edges, colors) {
            return inst;
        }
    }
}

/// The 50-instance set used by the small-graph guarantees.
pub fn small_instances() -> Vec<BipartiteInstance> {
    (0..50).map(|i| small_instance(1000 + i)).collect()
}
