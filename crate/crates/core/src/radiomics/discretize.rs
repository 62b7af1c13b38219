use ndarray::Array3;

use crate::error::{Error, Result};
use crate::volume::{dims_of, ensure_same_dims, Mask3D};

/// Gray levels `1..=bins` inside the mask, 0 outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels {
    pub levels: Array3<u16>,
    pub bins: usize,
    pub voxels: usize,
}

impl Levels {
    pub fn dims(&self) -> [usize; 3] {
        let s = self.levels.shape();
        [s[0], s[1], s[2]]
    }

    /// Level at a signed position, 0 when outside the grid or the mask.
    #[inline]
    pub fn at(&self, z: isize, y: isize, x: isize) -> u16 {
        let [d, h, w] = self.dims();
        if z < 0 || y < 0 || x < 0 || z as usize >= d || y as usize >= h || x as usize >= w {
            return 0;
        }
        self.levels[[z as usize, y as usize, x as usize]]
    }
}

/// Equal-width binning between the masked minimum and maximum. A constant
/// region maps entirely to level 1.
pub fn discretize(values: &Array3<f32>, mask: &Mask3D, bins: usize) -> Result<Levels> {
    ensure_same_dims(dims_of(values), mask.dims())?;
    if bins < 2 || bins > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("bin count {bins} outside 2..=65535")));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask("discretize".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&v, &m) in values.iter().zip(mask.data()) {
        if m != 0 {
            if !v.is_finite() {
                return Err(Error::NonFinite("masked voxel value".into()));
            }
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
    }
    let range = hi - lo;
    let levels = ndarray::Zip::from(values).and(mask.data()).map_collect(|&v, &m| {
        if m == 0 {
            0
        } else if range == 0.0 {
            1
        } else {
            let l = ((v as f64 - lo) / range * bins as f64).floor() as usize + 1;
            l.min(bins) as u16
        }
    });
    Ok(Levels {
        levels,
        bins,
        voxels: mask.count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_rules() {
        let vals = Array3::from_shape_vec((1, 1, 4), vec![0.0f32, 4.9, 5.0, 10.0]).unwrap();
        let mask = Mask3D::from_fn([1, 1, 4], |_, _, _| true);
        let l = discretize(&vals, &mask, 2).unwrap();
        assert_eq!(l.levels.iter().copied().collect::<Vec<_>>(), vec![1, 1, 2, 2]);

        let l32 = discretize(&vals, &mask, 32).unwrap();
        assert_eq!(l32.levels[[0, 0, 0]], 1);
        assert_eq!(l32.levels[[0, 0, 3]], 32);
    }

    #[test]
    fn constant_and_outside() {
        let vals = Array3::from_elem((2, 2, 2), 7.5f32);
        let mask = Mask3D::from_fn([2, 2, 2], |z, _, _| z == 0);
        let l = discretize(&vals, &mask, 32).unwrap();
        assert!(l.levels.indexed_iter().all(|((z, _, _), &v)| v == if z == 0 { 1 } else { 0 }));
        assert_eq!(l.voxels, 4);
        assert!(matches!(discretize(&vals, &Mask3D::empty([2, 2, 2]), 8), Err(Error::EmptyMask(_))));
        assert!(discretize(&vals, &mask, 1).is_err());
    }
}
