mod common;

use common::random_network;
use fastflux::netmodel::{
    assemble_rates, divergence, generator_negativity_bound, network_from_json, network_to_json, parse_network,
    stationary_distribution, tensor, GeneratorMatrix,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Sum of weighted directed cycles: zero row and zero column sums.
fn cycle_generator(rng: &mut ChaCha8Rng, n: usize) -> GeneratorMatrix {
    let mut a = DMatrix::zeros(n, n);
    for _ in 0..rng.gen_range(1..=4) {
        let mut nodes: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            nodes.swap(i, rng.gen_range(0..=i));
        }
        let len = rng.gen_range(2..=n);
        let w: f64 = rng.gen_range(0.1..3.0);
        for i in 0..len {
            let (x, y) = (nodes[i], nodes[(i + 1) % len]);
            a[(x, y)] += w;
            a[(x, x)] -= w;
        }
    }
    GeneratorMatrix::new(a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_law_is_balanced(seed in any::<u64>(), log_eps in -6.0f64..0.0) {
        let net = random_network(&mut ChaCha8Rng::seed_from_u64(seed));
        let eps = 10f64.powf(log_eps);
        let pi = stationary_distribution(&net, eps).unwrap();
        prop_assert!(pi.pi.iter().all(|p| *p > 0.0));
        prop_assert!((pi.pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let rates = assemble_rates(&net, eps).values;
        let flux = tensor(&net, &rates, &pi.pi);
        let div = divergence(&net, &flux).unwrap();
        let scale = flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in div {
            prop_assert!(v.abs() <= 1e-10 * scale, "divergence {v} at flux scale {scale}");
        }
    }

    #[test]
    fn balanced_generators_are_dissipative(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cycle_generator(&mut rng, n);
        prop_assert!(a.is_dissipative());
        for _ in 0..1000 {
            let v = random_vector(&mut rng, n);
            prop_assert!(v.dot(&(a.matrix() * &v)) <= 1e-12);
        }
    }

    #[test]
    fn negativity_bound_holds_on_column_space(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let general = GeneratorMatrix::from_rates(&net, &assemble_rates(&net, 0.1).values);
        let mut balanced = cycle_generator(&mut rng, n).matrix().clone();
        // a spanning cycle makes the support connected, so the bound exists
        for x in 0..n {
            balanced[(x, (x + 1) % n)] += 0.5;
            balanced[(x, x)] -= 0.5;
        }
        let balanced = GeneratorMatrix::new(balanced).unwrap();
        prop_assert!(generator_negativity_bound(&balanced).is_ok());
        for a in [general, balanced] {
            let Ok(lambda) = generator_negativity_bound(&a) else { continue };
            prop_assert!(lambda < 0.0);
            let m = a.matrix();
            let svd = m.clone().svd(true, false);
            let u = svd.u.unwrap();
            let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * m.amax()).collect();
            let basis = u.select_columns(keep.iter());
            for _ in 0..1000 {
                let v = &basis * (basis.transpose() * random_vector(&mut rng, m.nrows()));
                prop_assert!(v.dot(&(m * &v)) <= (lambda + 1e-9) * v.norm_squared());
            }
        }
    }

    #[test]
    fn text_and_json_round_trip(seed in any::<u64>()) {
        let net = random_network(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&parse_network(&net.to_string()).unwrap(), &net);
        prop_assert_eq!(&network_from_json(&network_to_json(&net)).unwrap(), &net);
    }
}
