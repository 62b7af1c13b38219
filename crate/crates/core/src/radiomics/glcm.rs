use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

use super::discretize::Levels;
use super::TextureConfig;

pub const GLCM_FEATURES: [&str; 24] = [
    "Autocorrelation",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "Id",
    "Idm",
    "Idmn",
    "Idn",
    "Imc1",
    "Imc2",
    "InverseVariance",
    "JointAverage",
    "JointEnergy",
    "JointEntropy",
    "MCC",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
];

/// Co-occurrence matrix over all configured directions, normalized to sum 1.
/// Entry `[i-1, j-1]` counts level `i` followed by level `j`. All zeros when
/// the mask holds no voxel pair at the configured offsets.
pub fn glcm(levels: &Levels, cfg: &TextureConfig) -> Result<Array2<f64>> {
    if levels.voxels == 0 {
        return Err(Error::EmptyMask("GLCM".into()));
    }
    let ng = levels.bins;
    let mut p = Array2::<f64>::zeros((ng, ng));
    let d = cfg.distance as isize;
    for ((z, y, x), &a) in levels.levels.indexed_iter() {
        if a == 0 {
            continue;
        }
        for dir in &cfg.directions {
            let b = levels.at(
                z as isize + d * dir[0] as isize,
                y as isize + d * dir[1] as isize,
                x as isize + d * dir[2] as isize,
            );
            if b == 0 {
                continue;
            }
            let (i, j) = (a as usize - 1, b as usize - 1);
            p[[i, j]] += 1.0;
            if cfg.symmetric {
                p[[j, i]] += 1.0;
            }
        }
    }
    let total = p.sum();
    if total > 0.0 {
        p /= total;
    }
    Ok(p)
}

fn entropy<'a>(ps: impl IntoIterator<Item = &'a f64>) -> f64 {
    -ps.into_iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// Second largest eigenvalue magnitude of `D^-1/2 P D^-1/2` on the occupied
/// levels, which is the square root of the second eigenvalue of `Q`.
fn max_correlation_coefficient(p: &Array2<f64>, px: &[f64]) -> f64 {
    let occupied: Vec<usize> = (0..px.len()).filter(|&i| px[i] > 0.0).collect();
    let k = occupied.len();
    if k < 2 {
        return f64::NAN;
    }
    let m = DMatrix::from_fn(k, k, |a, b| {
        let (i, j) = (occupied[a], occupied[b]);
        0.5 * (p[[i, j]] + p[[j, i]]) / (px[i] * px[j]).sqrt()
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.abs()).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1].min(1.0)
}

/// Features in [`GLCM_FEATURES`] order. An all-zero matrix yields all NaN;
/// a single-entry matrix yields NaN for Correlation, Imc1, Imc2 and MCC.
pub fn glcm_features(p: &Array2<f64>) -> Vec<f64> {
    let ng = p.nrows();
    if p.sum() <= 0.0 {
        return vec![f64::NAN; GLCM_FEATURES.len()];
    }
    let lv = |i: usize| (i + 1) as f64;
    let px: Vec<f64> = (0..ng).map(|i| p.row(i).sum()).collect();
    let py: Vec<f64> = (0..ng).map(|j| p.column(j).sum()).collect();
    let mux: f64 = px.iter().enumerate().map(|(i, v)| lv(i) * v).sum();
    let muy: f64 = py.iter().enumerate().map(|(j, v)| lv(j) * v).sum();
    let sx = px.iter().enumerate().map(|(i, v)| (lv(i) - mux).powi(2) * v).sum::<f64>().sqrt();
    let sy = py.iter().enumerate().map(|(j, v)| (lv(j) - muy).powi(2) * v).sum::<f64>().sqrt();

    let mut psum = vec![0.0; 2 * ng + 1];
    let mut pdiff = vec![0.0; ng];
    let (mut auto, mut prom, mut shade, mut tend, mut contrast) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut id, mut idm, mut idmn, mut idn, mut sumsq, mut energy, mut pmax) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    let (mut hxy1, mut hxy2) = (0.0, 0.0);
    let ngf = ng as f64;
    let mut nonzero = 0;
    for ((i, j), &v) in p.indexed_iter() {
        let (a, b) = (lv(i), lv(j));
        let outer = px[i] * py[j];
        if outer > 0.0 {
            hxy2 -= outer * outer.log2();
            if v > 0.0 {
                hxy1 -= v * outer.log2();
            }
        }
        if v == 0.0 {
            continue;
        }
        nonzero += 1;
        let k = i.abs_diff(j);
        psum[i + j + 2] += v;
        pdiff[k] += v;
        let c = a + b - mux - muy;
        auto += a * b * v;
        prom += c.powi(4) * v;
        shade += c.powi(3) * v;
        tend += c * c * v;
        contrast += (a - b).powi(2) * v;
        id += v / (1.0 + k as f64);
        idm += v / (1.0 + (k * k) as f64);
        idmn += v / (1.0 + (k * k) as f64 / (ngf * ngf));
        idn += v / (1.0 + k as f64 / ngf);
        sumsq += (a - mux).powi(2) * v;
        energy += v * v;
        pmax = pmax.max(v);
    }
    let hx = entropy(&px);
    let hy = entropy(&py);
    let hxy = entropy(p.iter());
    let degenerate = nonzero < 2;

    let diff_avg: f64 = pdiff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_var: f64 = pdiff.iter().enumerate().map(|(k, v)| (k as f64 - diff_avg).powi(2) * v).sum();
    let inv_var: f64 = pdiff.iter().enumerate().skip(1).map(|(k, v)| v / (k * k) as f64).sum();
    let sum_avg: f64 = psum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();

    let correlation = if degenerate || sx * sy == 0.0 {
        f64::NAN
    } else {
        (auto - mux * muy) / (sx * sy)
    };
    let (imc1, imc2) = if degenerate || hx.max(hy) == 0.0 {
        (f64::NAN, f64::NAN)
    } else {
        let gap = (hxy2 - hxy).max(0.0);
        ((hxy - hxy1) / hx.max(hy), (1.0 - (-2.0 * gap).exp()).sqrt())
    };
    let mcc = if degenerate { f64::NAN } else { max_correlation_coefficient(p, &px) };

    vec![
        auto,
        prom,
        shade,
        tend,
        contrast,
        correlation,
        diff_avg,
        entropy(&pdiff),
        diff_var,
        id,
        idm,
        idmn,
        idn,
        imc1,
        imc2,
        inv_var,
        mux,
        energy,
        hxy,
        mcc,
        pmax,
        sum_avg,
        entropy(&psum),
        sumsq,
    ]
}
