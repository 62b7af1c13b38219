mod common;

use common::{grad_check, random_batch, random_weights};
use lungmtl::mtl::{MtlNet, Weighting};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HEADS: [usize; 3] = [2, 2, 3];

fn net(seed: u64) -> (MtlNet, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = MtlNet::new(6, &[8, 6, 5, 4], &HEADS, &mut rng).unwrap();
    net.log_vars = Array1::from_shape_fn(3, |_| rng.random_range(-0.8..0.8));
    (net, rng)
}

#[test]
fn backprop_matches_finite_differences_in_every_mode() {
    for seed in 0..5u64 {
        let (net, mut rng) = net(seed);
        let (x, y) = random_batch(&mut rng, 12, 6, &HEADS);
        let w = random_weights(&mut rng, 3);
        let uniform = lungmtl::mtl::TaskWeights::uniform(3);
        for (name, weighting) in [
            ("mean", Weighting::Fixed(&uniform)),
            ("random", Weighting::Fixed(&w)),
            ("uncertainty", Weighting::Uncertainty),
        ] {
            let r = grad_check(&net, &x, &y, weighting, 1e-4, 1e-6);
            assert!(r.checked > r.skipped * 4, "{name} seed {seed}: too many kinks");
            assert!(r.max_rel < 1e-4, "{name} seed {seed}: max rel error {:e}", r.max_rel);
        }
    }
}

#[test]
fn log_variance_gradient_is_zero_for_fixed_weights() {
    let (net, mut rng) = net(9);
    let (x, y) = random_batch(&mut rng, 8, 6, &HEADS);
    let w = random_weights(&mut rng, 3);
    let (_, _, g) = net.backward(&x.view(), &y, Weighting::Fixed(&w)).unwrap();
    assert!(g.log_vars.iter().all(|&v| v == 0.0));
    let (_, _, g) = net.backward(&x.view(), &y, Weighting::Uncertainty).unwrap();
    assert!(g.log_vars.iter().any(|&v| v != 0.0));
}
