#![allow(dead_code)]

use fastflux::decomp::{decompose, Decomposition};
use fastflux::netmodel::{parse_network, Network};
use fastflux::Tolerances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAST_TRIANGLE: &str = include_str!("../../../../networks/fast_triangle.net");
pub const DAMPED_CYCLE: &str = include_str!("../../../../networks/damped_cycle.net");

pub fn load(text: &str) -> (Network, Decomposition) {
    let net = parse_network(text).unwrap();
    let d = decompose(&net, &Tolerances::default()).unwrap();
    (net, d)
}

/// Random strongly connected network: a Hamiltonian cycle plus extra edges,
/// with random speeds and rates in `[0.5, 2]`.
pub fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let n = rng.gen_range(3..=7);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        edges.insert((order[i], order[(i + 1) % n], rng.gen_bool(0.5)));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.insert((a, b, rng.gen_bool(0.5)));
        }
    }
    let mut text = format!("nodes: {}\n", (1..=n).map(|i| format!("n{i}")).collect::<Vec<_>>().join(" "));
    for (a, b, fast) in edges {
        let rate: f64 = rng.gen_range(0.5..2.0);
        let speed = if fast { "fast" } else { "slow" };
        text.push_str(&format!("n{} -> n{} rate={rate} speed={speed}\n", a + 1, b + 1));
    }
    parse_network(&text).unwrap()
}

/// First random network from `seed` that the decomposition accepts.
pub fn admissible_network(seed: u64) -> (Network, Decomposition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let net = random_network(&mut rng);
        if let Ok(d) = decompose(&net, &Tolerances::default()) {
            return (net, d);
        }
    }
}
