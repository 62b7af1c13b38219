use std::collections::VecDeque;

use ndarray::Array3;

use crate::error::{Error, Result};

use super::discretize::Levels;
use super::glrlm::{SizeMatrix, SizeStats};

pub const GLSZM_FEATURES: [&str; 16] = [
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "GrayLevelVariance",
    "HighGrayLevelZoneEmphasis",
    "LargeAreaEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LowGrayLevelZoneEmphasis",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "SmallAreaEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "ZoneEntropy",
    "ZonePercentage",
    "ZoneVariance",
];

/// Zones are 26-connected sets of voxels sharing one gray level.
pub fn size_zone_matrix(levels: &Levels) -> SizeMatrix {
    let [d, h, w] = levels.dims();
    let mut seen = Array3::<bool>::from_elem((d, h, w), false);
    let mut m = SizeMatrix::new();
    let mut queue = VecDeque::new();
    for ((z, y, x), &a) in levels.levels.indexed_iter() {
        if a == 0 || seen[[z, y, x]] {
            continue;
        }
        seen[[z, y, x]] = true;
        queue.push_back([z as isize, y as isize, x as isize]);
        let mut size = 0;
        while let Some([cz, cy, cx]) = queue.pop_front() {
            size += 1;
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nz, ny, nx) = (cz + dz, cy + dy, cx + dx);
                        if levels.at(nz, ny, nx) != a {
                            continue;
                        }
                        let idx = [nz as usize, ny as usize, nx as usize];
                        if !seen[idx] {
                            seen[idx] = true;
                            queue.push_back([nz, ny, nx]);
                        }
                    }
                }
            }
        }
        *m.entry((a, size)).or_default() += 1.0;
    }
    m
}

/// Features in [`GLSZM_FEATURES`] order.
pub fn glszm_features(levels: &Levels) -> Result<Vec<f64>> {
    if levels.voxels == 0 {
        return Err(Error::EmptyMask("GLSZM".into()));
    }
    let m = size_zone_matrix(levels);
    let s = SizeStats::from_matrix(&m, levels.voxels).expect("non-empty mask has zones");
    Ok(vec![
        s.level_nonuniformity,
        s.level_nonuniformity_norm,
        s.level_variance,
        s.high_level,
        s.large,
        s.large_high,
        s.large_low,
        s.low_level,
        s.size_nonuniformity,
        s.size_nonuniformity_norm,
        s.small,
        s.small_high,
        s.small_low,
        s.entropy,
        s.percentage,
        s.size_variance,
    ])
}
