mod common;

use common::{shift_oracle, welch_oracle};
use lungmtl::analysis::{welch_anova, zscore};
use lungmtl::metrics::ConfusionCounts;
use lungmtl::mtl::{sample_task_weights, RandomWeightConfig};
use lungmtl::radiomics::{extract_all, TextureConfig, FIRST_ORDER_FEATURES, GLCM_FEATURES, GLRLM_FEATURES, GLSZM_FEATURES};
use lungmtl::seg::morpho_close;
use lungmtl::shift3d::{apply_shift, shift3d, Shift3DConfig};
use lungmtl::volume::{Mask3D, Unit, Volume3D};
use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor() -> impl Strategy<Value = Array3<i32>> {
    (1usize..7, 1usize..7, 1usize..7).prop_flat_map(|(a, b, c)| {
        proptest::collection::vec(-50i32..50, a * b * c).prop_map(move |v| Array3::from_shape_vec((a, b, c), v).unwrap())
    })
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shift_matches_the_index_oracle(t in tensor(), frac in 0.0f64..=1.0, padding: bool, seed: u64) {
        let cfg = Shift3DConfig { max_shift_fraction: frac, padding, padding_value: 0.0, apply_probability: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, ev) = shift3d(&t, &cfg, 999, &mut rng).unwrap();
        prop_assert_eq!(out.shape(), t.shape());
        prop_assert!(ev.shift <= cfg.max_shift(t.shape()[ev.axis]));
        prop_assert_eq!(&out, &shift_oracle(&t, &ev, padding.then_some(999)));
        prop_assert_eq!(apply_shift(&t, &ev, &cfg, 999).unwrap(), out.clone());
        if !padding {
            prop_assert_eq!(apply_shift(&out, &ev.reverse(), &cfg, 999).unwrap(), t);
        } else {
            let fill = out.iter().filter(|&&v| v == 999).count();
            prop_assert_eq!(fill, ev.shift * t.len() / t.shape()[ev.axis]);
        }
    }

    #[test]
    fn jaccard_is_a_function_of_dice(tp in 0u64..1000, tn in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000) {
        let c = ConfusionCounts::new(tp, tn, fp, fn_);
        prop_assume!(tp + fp + fn_ > 0);
        let d = c.dice();
        prop_assert!((c.jaccard() - d / (2.0 - d)).abs() < 1e-12);
        prop_assert_eq!(d, ConfusionCounts::new(tp, tn, fn_, fp).dice());
    }

    #[test]
    fn welch_is_affine_invariant_and_matches_the_oracle(
        groups in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 3..12), 2..5),
        shift in -1e3f64..1e3,
        scale in 0.01f64..100.0,
    ) {
        let r = welch_anova(&groups).unwrap();
        let o = welch_oracle(&groups);
        prop_assert!(close_rel(r.statistic, o.f, 1e-8));
        prop_assert!(close_rel(r.df2, o.df2, 1e-8));
        prop_assert!((r.p_value - o.p).abs() < 1e-8);
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| scale * x + shift).collect()).collect();
        let m = welch_anova(&moved).unwrap();
        prop_assert!(close_rel(m.statistic, r.statistic, 1e-7));
        let mut rev = groups.clone();
        rev.reverse();
        prop_assert!(close_rel(welch_anova(&rev).unwrap().statistic, r.statistic, 1e-10));
    }

    #[test]
    fn zscore_is_idempotent(xs in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let z = zscore(&xs).unwrap();
        for (a, b) in z.iter().zip(zscore(&z).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_draws_lie_on_the_simplex(k in 2usize..8, n in 1usize..20, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = sample_task_weights(&RandomWeightConfig::new(k, n).unwrap(), &mut rng);
        prop_assert_eq!(w.len(), k);
        prop_assert!(w.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closing_is_idempotent(cells in proptest::collection::vec(any::<bool>(), 16 * 16), r in 1usize..4) {
        let m = Array2::from_shape_vec((16, 16), cells).unwrap();
        let c = morpho_close(&m, r);
        prop_assert_eq!(morpho_close(&c, r), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn matrix_features_ignore_axis_flips(seed: u64, axis in 0usize..3) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array3::from_shape_simple_fn((12, 12, 12), || rng.random_range(-900.0f32..-200.0));
        let mask = Array3::from_shape_fn((12, 12, 12), |(z, y, x)| {
            let d = (z as f64 - 5.0).powi(2) + (y as f64 - 6.5).powi(2) + (x as f64 - 6.0).powi(2);
            u8::from(d < 22.0)
        });
        let flip = |a: &Array3<f32>| { let mut v = a.view(); v.invert_axis(Axis(axis)); v.to_owned() };
        let flip_m = |a: &Array3<u8>| { let mut v = a.view(); v.invert_axis(Axis(axis)); v.to_owned() };
        let cfg = TextureConfig::default();
        let vol = Volume3D::new(data.clone(), [1.0; 3], Unit::Hounsfield).unwrap();
        let a = extract_all("a", &vol, &Mask3D::new(mask.clone()).unwrap(), &cfg).unwrap();
        let fvol = Volume3D::new(flip(&data), [1.0; 3], Unit::Hounsfield).unwrap();
        let b = extract_all("b", &fvol, &Mask3D::new(flip_m(&mask)).unwrap(), &cfg).unwrap();
        let n = FIRST_ORDER_FEATURES.len() + GLCM_FEATURES.len() + GLRLM_FEATURES.len() + GLSZM_FEATURES.len();
        for i in 0..n {
            prop_assert!(close_rel(a.values[i], b.values[i], 1e-9), "feature {} : {} vs {}", i, a.values[i], b.values[i]);
        }
    }
}
