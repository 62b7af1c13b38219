mod common;

use common::{edge_spec, segment_phantom};
use lungmtl::phantom::PhantomSpec;

#[test]
fn refinement_recovers_edge_opacities() {
    for seed in 0..4 {
        let o = segment_phantom(&edge_spec(), 3, 100 + seed);
        assert!(o.refined_dice > o.classical_dice, "seed {seed}: {} vs {}", o.refined_dice, o.classical_dice);
        assert!(o.refined_dice >= 0.95, "seed {seed}: {}", o.refined_dice);
        assert!(o.ggo_recovery >= 0.8, "seed {seed}: recovery {}", o.ggo_recovery);
    }
}

#[test]
fn dense_edge_blob_is_recovered() {
    let spec = PhantomSpec {
        ggo_hu: [-150.0, -150.0],
        ..edge_spec()
    };
    let o = segment_phantom(&spec, 1, 7);
    assert!(o.ggo_recovery >= 0.8, "recovery {}", o.ggo_recovery);
}

#[test]
fn refinement_does_not_hurt_clean_lungs() {
    for seed in 0..3 {
        let o = segment_phantom(&PhantomSpec::default(), 0, 200 + seed);
        assert!(o.refined_dice >= o.classical_dice - 0.005, "seed {seed}: {} vs {}", o.refined_dice, o.classical_dice);
    }
}
