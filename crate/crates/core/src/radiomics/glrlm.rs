use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::discretize::Levels;
use super::TextureConfig;

pub const GLRLM_FEATURES: [&str; 16] = [
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "GrayLevelVariance",
    "HighGrayLevelRunEmphasis",
    "LongRunEmphasis",
    "LongRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LowGrayLevelRunEmphasis",
    "RunEntropy",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "RunVariance",
    "ShortRunEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "ShortRunLowGrayLevelEmphasis",
];

/// Sparse (gray level, length or size) -> count matrix shared by run-length
/// and size-zone features.
pub type SizeMatrix = BTreeMap<(u16, usize), f64>;

/// Statistics common to run-length and size-zone matrices. `n` is the number
/// of runs or zones and `voxels` the masked voxel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeStats {
    pub level_nonuniformity: f64,
    pub level_nonuniformity_norm: f64,
    pub level_variance: f64,
    pub high_level: f64,
    pub large: f64,
    pub large_high: f64,
    pub large_low: f64,
    pub low_level: f64,
    pub entropy: f64,
    pub size_nonuniformity: f64,
    pub size_nonuniformity_norm: f64,
    pub percentage: f64,
    pub size_variance: f64,
    pub small: f64,
    pub small_high: f64,
    pub small_low: f64,
}

impl SizeStats {
    pub fn from_matrix(m: &SizeMatrix, voxels: usize) -> Option<Self> {
        let n: f64 = m.values().sum();
        if n <= 0.0 {
            return None;
        }
        let mut by_level: BTreeMap<u16, f64> = BTreeMap::new();
        let mut by_size: BTreeMap<usize, f64> = BTreeMap::new();
        let mut s = SizeStats {
            level_nonuniformity: 0.0,
            level_nonuniformity_norm: 0.0,
            level_variance: 0.0,
            high_level: 0.0,
            large: 0.0,
            large_high: 0.0,
            large_low: 0.0,
            low_level: 0.0,
            entropy: 0.0,
            size_nonuniformity: 0.0,
            size_nonuniformity_norm: 0.0,
            percentage: n / voxels as f64,
            size_variance: 0.0,
            small: 0.0,
            small_high: 0.0,
            small_low: 0.0,
        };
        let (mut mu_i, mut mu_j) = (0.0, 0.0);
        for (&(level, size), &c) in m {
            let p = c / n;
            let (i2, j2) = ((level as f64).powi(2), (size as f64).powi(2));
            *by_level.entry(level).or_default() += c;
            *by_size.entry(size).or_default() += c;
            mu_i += p * level as f64;
            mu_j += p * size as f64;
            s.high_level += p * i2;
            s.low_level += p / i2;
            s.large += p * j2;
            s.large_high += p * i2 * j2;
            s.large_low += p * j2 / i2;
            s.small += p / j2;
            s.small_high += p * i2 / j2;
            s.small_low += p / (i2 * j2);
            s.entropy -= p * p.log2();
        }
        for (&(level, size), &c) in m {
            let p = c / n;
            s.level_variance += p * (level as f64 - mu_i).powi(2);
            s.size_variance += p * (size as f64 - mu_j).powi(2);
        }
        let sq = |xs: &mut dyn Iterator<Item = &f64>| xs.map(|c| c * c).sum::<f64>();
        let gl = sq(&mut by_level.values());
        let sz = sq(&mut by_size.values());
        s.level_nonuniformity = gl / n;
        s.level_nonuniformity_norm = gl / (n * n);
        s.size_nonuniformity = sz / n;
        s.size_nonuniformity_norm = sz / (n * n);
        Some(s)
    }
}

/// Runs of equal level along one direction.
pub fn run_length_matrix(levels: &Levels, dir: [i8; 3]) -> SizeMatrix {
    let step = dir.map(|d| d as isize);
    let mut m = SizeMatrix::new();
    for ((z, y, x), &a) in levels.levels.indexed_iter() {
        if a == 0 {
            continue;
        }
        let (z, y, x) = (z as isize, y as isize, x as isize);
        if levels.at(z - step[0], y - step[1], x - step[2]) == a {
            continue;
        }
        let mut len = 1;
        while levels.at(
            z + len as isize * step[0],
            y + len as isize * step[1],
            x + len as isize * step[2],
        ) == a
        {
            len += 1;
        }
        *m.entry((a, len)).or_default() += 1.0;
    }
    m
}

fn stats_vector(s: &SizeStats) -> Vec<f64> {
    vec![
        s.level_nonuniformity,
        s.level_nonuniformity_norm,
        s.level_variance,
        s.high_level,
        s.large,
        s.large_high,
        s.large_low,
        s.low_level,
        s.entropy,
        s.size_nonuniformity,
        s.size_nonuniformity_norm,
        s.percentage,
        s.size_variance,
        s.small,
        s.small_high,
        s.small_low,
    ]
}

/// Features in [`GLRLM_FEATURES`] order, computed per direction and averaged.
pub fn glrlm_features(levels: &Levels, cfg: &TextureConfig) -> Result<Vec<f64>> {
    if levels.voxels == 0 {
        return Err(Error::EmptyMask("GLRLM".into()));
    }
    let mut acc = vec![0.0; GLRLM_FEATURES.len()];
    for &dir in &cfg.directions {
        let m = run_length_matrix(levels, dir);
        let s = SizeStats::from_matrix(&m, levels.voxels).expect("non-empty mask has runs");
        for (a, v) in acc.iter_mut().zip(stats_vector(&s)) {
            *a += v;
        }
    }
    let k = cfg.directions.len() as f64;
    Ok(acc.into_iter().map(|v| v / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn line(vals: Vec<u16>) -> Levels {
        let n = vals.len();
        Levels {
            voxels: vals.iter().filter(|&&v| v > 0).count(),
            levels: Array3::from_shape_vec((n, 1, 1), vals).unwrap(),
            bins: 2,
        }
    }

    #[test]
    fn single_axial_run() {
        let m = run_length_matrix(&line(vec![1; 9]), [1, 0, 0]);
        assert_eq!(m.into_iter().collect::<Vec<_>>(), vec![((1, 9), 1.0)]);
    }

    #[test]
    fn alternating_line() {
        let n = 10;
        let vals: Vec<u16> = (0..n).map(|i| (i % 2 + 1) as u16).collect();
        let m = run_length_matrix(&line(vals), [1, 0, 0]);
        assert_eq!(m.values().sum::<f64>(), n as f64);
        assert!(m.keys().all(|&(_, len)| len == 1));
    }

    #[test]
    fn runs_cover_every_voxel() {
        let vals: Vec<u16> = (0..64).map(|i| ((i * 5 + i / 4) % 3) as u16).collect();
        let l = Levels {
            voxels: vals.iter().filter(|&&v| v > 0).count(),
            levels: Array3::from_shape_vec((4, 4, 4), vals).unwrap(),
            bins: 2,
        };
        for dir in TextureConfig::default().directions {
            let m = run_length_matrix(&l, dir);
            let covered: f64 = m.iter().map(|(&(_, len), c)| len as f64 * c).sum();
            assert_eq!(covered as usize, l.voxels, "{dir:?}");
        }
    }

    #[test]
    fn stats_by_hand() {
        // runs: level 1 length 2 (x2), level 2 length 1 (x1)
        let m: SizeMatrix = [((1, 2), 2.0), ((2, 1), 1.0)].into_iter().collect();
        let s = SizeStats::from_matrix(&m, 5).unwrap();
        assert!((s.percentage - 0.6).abs() < 1e-12);
        assert!((s.small - (2.0 / 3.0 / 4.0 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((s.level_nonuniformity - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.level_variance - 2.0 / 9.0).abs() < 1e-12);
    }
}
