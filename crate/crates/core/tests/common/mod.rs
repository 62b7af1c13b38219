//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lungmtl::mtl::{MtlNet, TaskWeights, Weighting};
use lungmtl::shift3d::ShiftEvent;
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

/// Circular shift by signed index arithmetic, with the wrapped slab
/// optionally overwritten.
pub fn shift_oracle<T: Clone>(t: &Array3<T>, e: &ShiftEvent, pad: Option<T>) -> Array3<T> {
    let dims = t.shape().to_vec();
    let n = dims[e.axis] as i64;
    let k = e.direction as i64 * e.shift as i64;
    let mut out = t.clone();
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let mut dst = [z, y, x];
                let i = dst[e.axis] as i64;
                dst[e.axis] = (i + k).rem_euclid(n) as usize;
                out[dst] = t[[z, y, x]].clone();
            }
        }
    }
    if let Some(p) = pad {
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    let i = [z, y, x][e.axis] as i64;
                    let wrapped = if e.direction > 0 { i < e.shift as i64 } else { i >= n - e.shift as i64 };
                    if wrapped {
                        out[[z, y, x]] = p.clone();
                    }
                }
            }
        }
    }
    out
}

pub struct Welch {
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

/// Textbook Welch ANOVA with the p-value from statrs' F distribution.
pub fn welch_oracle(groups: &[Vec<f64>]) -> Welch {
    let k = groups.len() as f64;
    let stats: Vec<(f64, f64, f64)> = groups
        .iter()
        .map(|g| {
            let n = g.len() as f64;
            let m = g.iter().sum::<f64>() / n;
            let v = g.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
            (n, m, v)
        })
        .collect();
    let w: Vec<f64> = stats.iter().map(|(n, _, v)| n / v).collect();
    let sw: f64 = w.iter().sum();
    let grand = stats.iter().zip(&w).map(|((_, m, _), wi)| wi * m).sum::<f64>() / sw;
    let between = stats.iter().zip(&w).map(|((_, m, _), wi)| wi * (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let lambda = stats
        .iter()
        .zip(&w)
        .map(|((n, _, _), wi)| (1.0 - wi / sw).powi(2) / (n - 1.0))
        .sum::<f64>();
    let f = between / (1.0 + 2.0 * (k - 2.0) / (k * k - 1.0) * lambda);
    let df1 = k - 1.0;
    let df2 = (k * k - 1.0) / (3.0 * lambda);
    let p = 1.0 - FisherSnedecor::new(df1, df2).unwrap().cdf(f);
    Welch { f, df1, df2, p }
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, width: usize, heads: &[usize]) -> (Array2<f64>, Vec<Vec<usize>>) {
    let x = Array2::from_shape_simple_fn((n, width), || rng.random_range(-1.5..1.5));
    let y = heads.iter().map(|&c| (0..n).map(|_| rng.random_range(0..c)).collect()).collect();
    (x, y)
}

fn relu_pattern(net: &MtlNet, x: &Array2<f64>) -> Vec<bool> {
    let mut out = Vec::new();
    let mut h = x.clone();
    for layer in &net.trunk {
        let z = h.dot(&layer.w) + &layer.b;
        out.extend(z.iter().map(|&v| v > 0.0));
        h = z.mapv(|v| v.max(0.0));
    }
    out
}

pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Parameters whose perturbation flips a rectifier (finite differences
    /// straddle a kink there).
    pub skipped: usize,
}

/// Central finite differences against the analytic gradient,
/// `|a - n| / max(|a|, |n|, floor)`, over every parameter.
pub fn grad_check(net: &MtlNet, x: &Array2<f64>, y: &[Vec<usize>], weighting: Weighting<'_>, h: f64, floor: f64) -> GradCheck {
    let all: Vec<usize> = (0..net.num_params()).collect();
    grad_check_at(net, x, y, weighting, h, floor, &all)
}

pub fn grad_check_at(
    net: &MtlNet,
    x: &Array2<f64>,
    y: &[Vec<usize>],
    weighting: Weighting<'_>,
    h: f64,
    floor: f64,
    params: &[usize],
) -> GradCheck {
    let (_, _, grads) = net.backward(&x.view(), y, weighting).unwrap();
    let analytic = grads.flatten();
    let theta = net.flatten();
    let base = relu_pattern(net, x);
    let mut probe = net.clone();
    let mut res = GradCheck {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut p = theta.clone();
    for &i in params {
        p[i] = theta[i] + h;
        probe.load_flat(&p).unwrap();
        let up = probe.loss(&x.view(), y, weighting).unwrap();
        let kink_up = relu_pattern(&probe, x) != base;
        p[i] = theta[i] - h;
        probe.load_flat(&p).unwrap();
        let down = probe.loss(&x.view(), y, weighting).unwrap();
        let kink_down = relu_pattern(&probe, x) != base;
        p[i] = theta[i];
        if kink_up || kink_down {
            res.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        res.max_rel = res.max_rel.max(rel);
        res.checked += 1;
    }
    res
}

pub fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> TaskWeights {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let rest: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - rest;
    TaskWeights::new(w).unwrap()
}

pub struct SegOutcome {
    pub classical_dice: f64,
    pub refined_dice: f64,
    /// Fraction of GGO voxels inside the refined mask (NaN without GGO).
    pub ggo_recovery: f64,
}

/// Segments one seeded phantom and scores both masks against the truth.
pub fn segment_phantom(spec: &lungmtl::phantom::PhantomSpec, blobs: usize, seed: u64) -> SegOutcome {
    use lungmtl::metrics::confusion;
    use lungmtl::seg::{classical_lung_mask, refine_mask, RefineConfig};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = lungmtl::phantom::generate_case(spec, blobs, &mut rng).unwrap();
    let classical = classical_lung_mask(&case.volume).unwrap();
    let (refined, _) = refine_mask(&case.volume, &classical.mask, &RefineConfig::default()).unwrap();
    let hit = case
        .ggo
        .data()
        .iter()
        .zip(refined.data().iter())
        .filter(|(&g, &r)| g != 0 && r != 0)
        .count();
    SegOutcome {
        classical_dice: confusion(&classical.mask, &case.truth).unwrap().dice(),
        refined_dice: confusion(&refined, &case.truth).unwrap().dice(),
        ggo_recovery: hit as f64 / case.ggo.count() as f64,
    }
}

pub fn edge_spec() -> lungmtl::phantom::PhantomSpec {
    lungmtl::phantom::PhantomSpec {
        edge_adjacent: true,
        ..Default::default()
    }
}
