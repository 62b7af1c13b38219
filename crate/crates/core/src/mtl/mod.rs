//! Random-weighted multitask loss, baseline objectives and a toy
//! shared-trunk network trained with manual backpropagation.

pub mod eval;
pub mod loss;
pub mod net;
pub mod train;
pub mod weights;

pub use eval::{auc, classification_metrics, ClassMetrics};
pub use loss::{
    cross_entropy, mean_loss, total_loss, uncertainty_loss, weighted_loss, TaskBatch, TaskLosses, TaskOutputs,
};
pub use net::{Dense, MtlNet, Weighting, HEAD_CLASSES, TRUNK_WIDTHS};
pub use train::{cosine_lr, train, train_net, Dataset, EpochRecord, History, LossMode, NesterovSgd, TrainConfig};
pub use weights::{dirichlet_pdf, sample_task_weights, RandomWeightConfig, TaskWeights};

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_heads_give_uniform_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = MtlNet::new(6, &[8, 4], &HEAD_CLASSES, &mut rng).unwrap();
        for h in net.heads.iter_mut() {
            *h = Dense::zeros(h.n_in(), h.n_out());
        }
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 6 + j) as f64 * 0.1 - 0.5);
        let fwd = net.forward(&x.view()).unwrap();
        for (p, &c) in fwd.probs.iter().zip(&HEAD_CLASSES) {
            assert!(p.iter().all(|&v| (v - 1.0 / c as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn vertex_weights_silence_other_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MtlNet::new(5, &[16, 8], &HEAD_CLASSES, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| ((i + 2 * j) as f64).sin());
        let y = vec![vec![0, 1, 1, 0], vec![1, 1, 0, 0], vec![2, 0, 1, 2]];
        let w = TaskWeights::new(vec![1.0, 0.0, 0.0]).unwrap();
        let (_, _, g) = net.backward(&x.view(), &y, Weighting::Fixed(&w)).unwrap();
        for h in &g.heads[1..] {
            assert!(h.w.iter().chain(h.b.iter()).all(|&v| v == 0.0));
        }
        assert!(g.heads[0].w.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn forward_rejects_bad_width_and_non_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MtlNet::new(3, &[4], &[2, 2], &mut rng).unwrap();
        assert!(net.forward(&Array2::zeros((2, 4)).view()).is_err());
        let x = Array2::from_elem((1, 3), f64::INFINITY);
        match net.forward(&x.view()) {
            Err(crate::Error::NonFinite(msg)) => assert!(msg.contains("trunk.0")),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn parameters_round_trip_through_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MtlNet::new(7, &[5, 3], &HEAD_CLASSES, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.f32");
        net.save(&p).unwrap();
        let back = MtlNet::load(&p).unwrap();
        let a = net.flatten();
        let b = back.flatten();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| (*x as f32) as f64 == *y));
        assert_eq!(back.shape_manifest().total, net.num_params());
    }
}
