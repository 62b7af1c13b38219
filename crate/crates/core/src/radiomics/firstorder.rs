use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

use super::discretize::discretize;

pub const FIRST_ORDER_FEATURES: [&str; 18] = [
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "Skewness",
    "Kurtosis",
    "Variance",
    "Uniformity",
];

/// Linear-interpolated percentile of sorted data, `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Statistics of the masked voxel values, in [`FIRST_ORDER_FEATURES`] order.
/// Entropy and Uniformity use the `bins`-level discretization; Skewness and
/// Kurtosis are NaN for a constant region.
pub fn first_order_features(vol: &Volume3D, mask: &Mask3D, bins: usize) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("first-order statistics".into()));
    }
    let levels = discretize(vol.data(), mask, bins)?;
    let mut xs: Vec<f64> = vol
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m != 0)
        .map(|(&v, _)| v as f64)
        .collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;

    let energy: f64 = xs.iter().map(|x| x * x).sum();
    let mean = xs.iter().sum::<f64>() / n;
    let central = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let p10 = percentile(&xs, 10.0);
    let p90 = percentile(&xs, 90.0);
    let robust: Vec<f64> = xs.iter().copied().filter(|x| (p10..=p90).contains(x)).collect();
    let robust_mean = robust.iter().sum::<f64>() / robust.len() as f64;
    let robust_mad = robust.iter().map(|x| (x - robust_mean).abs()).sum::<f64>() / robust.len() as f64;

    let mut hist = vec![0.0; bins];
    for &l in levels.levels.iter().filter(|&&l| l > 0) {
        hist[l as usize - 1] += 1.0;
    }
    let probs: Vec<f64> = hist.iter().filter(|&&c| c > 0.0).map(|c| c / n).collect();
    let entropy = -probs.iter().map(|p| p * p.log2()).sum::<f64>();
    let uniformity = probs.iter().map(|p| p * p).sum::<f64>();
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(vec![
        energy,
        energy * vol.voxel_volume(),
        entropy,
        xs[0],
        p10,
        p90,
        xs[xs.len() - 1],
        mean,
        percentile(&xs, 50.0),
        percentile(&xs, 75.0) - percentile(&xs, 25.0),
        xs[xs.len() - 1] - xs[0],
        xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / n,
        robust_mad,
        (energy / n).sqrt(),
        skew,
        kurt,
        m2,
        uniformity,
    ])
}
