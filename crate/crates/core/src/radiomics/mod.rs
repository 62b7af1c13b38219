//! Texture and intensity features from masked lung volumes.

pub mod discretize;
pub mod firstorder;
pub mod glcm;
pub mod glrlm;
pub mod glszm;
pub mod manifest;
pub mod wavelet;

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

pub use discretize::{discretize, Levels};
pub use firstorder::{first_order_features, FIRST_ORDER_FEATURES};
pub use glcm::{glcm, glcm_features, GLCM_FEATURES};
pub use glrlm::{glrlm_features, run_length_matrix, GLRLM_FEATURES};
pub use glszm::{glszm_features, size_zone_matrix, GLSZM_FEATURES};
pub use manifest::{check_manifest, feature_names, manifest, manifest_json, resolve_alias, FeatureSpec, MANIFEST_LEN};
pub use wavelet::{decimate_mask, wavelet_decompose, SubBand};

/// The 13 unique 3D neighbour offsets (first non-zero component positive).
pub fn unique_directions() -> Vec<[i8; 3]> {
    let mut out = Vec::with_capacity(13);
    for dz in -1i8..=1 {
        for dy in -1i8..=1 {
            for dx in -1i8..=1 {
                let d = [dz, dy, dx];
                if d.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0) {
                    out.push(d);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    pub bins: usize,
    pub distance: usize,
    pub directions: Vec<[i8; 3]>,
    pub symmetric: bool,
}

impl Default for TextureConfig {
    fn default() -> Self {
        TextureConfig {
            bins: 32,
            distance: 1,
            directions: unique_directions(),
            symmetric: true,
        }
    }
}

impl TextureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 || self.bins > u16::MAX as usize {
            return Err(Error::Config(format!("texture bins must be in 2..=65535, got {}", self.bins)));
        }
        if self.distance == 0 {
            return Err(Error::Config("GLCM distance must be at least 1".into()));
        }
        if self.directions.is_empty() {
            return Err(Error::Config("direction set is empty".into()));
        }
        for (i, d) in self.directions.iter().enumerate() {
            if d.iter().all(|&c| c == 0) || d.iter().any(|c| c.abs() > 1) {
                return Err(Error::Config(format!("direction {d:?} is not a unit neighbour offset")));
            }
            for e in &self.directions[..i] {
                let antipodal = self.symmetric && *e == d.map(|c| -c);
                if e == d || antipodal {
                    return Err(Error::Config(format!("direction {d:?} duplicates {e:?}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub case_id: String,
    /// Values in manifest order; NaN marks an undefined feature.
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        manifest().iter().position(|s| s.name == name).map(|i| self.values[i])
    }

    pub fn undefined(&self) -> Vec<&'static str> {
        manifest()
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_nan())
            .map(|(s, _)| s.name.as_str())
            .collect()
    }
}

/// Bounding box of the mask widened so that every axis spans at least
/// `min_len` voxels where the volume allows.
fn crop_box(mask: &Mask3D, min_len: usize) -> Option<([usize; 3], [usize; 3])> {
    let (lo, hi) = mask.bounding_box()?;
    let dims = mask.dims();
    let mut start = lo;
    let mut end = hi.map(|h| h + 1);
    for a in 0..3 {
        while end[a] - start[a] < min_len.min(dims[a]) {
            if end[a] < dims[a] {
                end[a] += 1;
            }
            if end[a] - start[a] < min_len && start[a] > 0 {
                start[a] -= 1;
            }
        }
    }
    Some((start, end))
}

pub fn crop_to_mask(vol: &Volume3D, mask: &Mask3D, min_len: usize) -> Result<(Volume3D, Mask3D)> {
    let (a, b) = crop_box(mask, min_len).ok_or_else(|| Error::EmptyMask("crop".into()))?;
    let sl = s![a[0]..b[0], a[1]..b[1], a[2]..b[2]];
    let v = Volume3D::new(vol.data().slice(sl).to_owned(), vol.spacing(), vol.unit())?;
    let m = Mask3D::new(mask.data().slice(sl).to_owned())?;
    Ok((v, m))
}

/// All manifest features for one case.
pub fn extract_all(case_id: &str, vol: &Volume3D, mask: &Mask3D, cfg: &TextureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    crate::volume::ensure_same_dims(vol.dims(), mask.dims())?;
    if mask.is_empty() {
        return Err(Error::EmptyMask(format!("case {case_id}")));
    }
    let mut values = Vec::with_capacity(MANIFEST_LEN);
    let levels = discretize(vol.data(), mask, cfg.bins)?;
    values.extend(first_order_features(vol, mask, cfg.bins)?);
    values.extend(glcm_features(&glcm(&levels, cfg)?));
    values.extend(glrlm_features(&levels, cfg)?);
    values.extend(glszm_features(&levels)?);

    let (cropped, cmask) = crop_to_mask(vol, mask, wavelet::FILTER_LEN)?;
    let band_mask = decimate_mask(&cmask);
    for (sb, band) in wavelet_decompose(&cropped)? {
        let l = discretize(band.data(), &band_mask, cfg.bins)?;
        let gl = glcm_features(&glcm(&l, cfg)?);
        let rl = glrlm_features(&l, cfg)?;
        let keep_gl = manifest::subband_glcm(sb);
        let keep_rl = manifest::subband_glrlm(sb);
        values.extend(GLCM_FEATURES.iter().zip(gl).filter(|(n, _)| keep_gl.contains(n)).map(|(_, v)| v));
        values.extend(GLRLM_FEATURES.iter().zip(rl).filter(|(n, _)| keep_rl.contains(n)).map(|(_, v)| v));
    }
    debug_assert_eq!(values.len(), MANIFEST_LEN);
    Ok(FeatureVector {
        case_id: case_id.to_string(),
        values,
    })
}
