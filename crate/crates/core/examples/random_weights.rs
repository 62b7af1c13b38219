//! Dirichlet task weights: individual draws, averaging over n draws, and how
//! the weighted loss compares with the mean loss.

use lungmtl::mtl::{dirichlet_pdf, sample_task_weights, weighted_loss, RandomWeightConfig, TaskWeights};
use lungmtl::seed::stream;

fn main() -> lungmtl::Result<()> {
    let mut rng = stream(1, "weights-example");
    let losses = [0.2, 0.6, 1.4];
    let mean = weighted_loss(&losses, &TaskWeights::uniform(3))?;
    println!("task losses {losses:?}, mean loss {mean:.4}");
    for draws in [1, 2, 10, 1000] {
        let cfg = RandomWeightConfig::new(3, draws)?;
        let w = sample_task_weights(&cfg, &mut rng);
        let l = weighted_loss(&losses, &w)?;
        println!("n = {draws:4}: weights {:.3?} -> loss {l:.4}", w.as_slice());
    }
    let cfg = RandomWeightConfig::new(3, 2)?;
    let n = 100_000;
    let mut acc = [0.0; 3];
    for _ in 0..n {
        for (a, w) in acc.iter_mut().zip(sample_task_weights(&cfg, &mut rng).as_slice()) {
            *a += w;
        }
    }
    println!("mean of {n} weight vectors (n = 2): {:.4?}", acc.map(|a| a / n as f64));
    println!("Dirichlet(1,1,1) density: {}", dirichlet_pdf(&[0.2, 0.3, 0.5], &cfg.alpha())?);
    Ok(())
}
