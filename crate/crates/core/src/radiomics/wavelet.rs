//! One-level separable 3D discrete wavelet transform with the coif1 filter pair.

use ndarray::{Array3, ArrayView1, ArrayViewMut1, Axis};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Unit, Volume3D};

/// coif1 decomposition low-pass filter.
pub const COIF1_DEC_LO: [f64; 6] = [
    -0.01565572813546454,
    -0.0727326195128539,
    0.38486484686420286,
    0.8525720202122554,
    0.3378976624578092,
    -0.0727326195128539,
];

/// coif1 decomposition high-pass filter, `g[m] = (-1)^(m+1) h[5-m]`.
pub const COIF1_DEC_HI: [f64; 6] = [
    0.0727326195128539,
    0.3378976624578092,
    -0.8525720202122554,
    0.38486484686420286,
    0.0727326195128539,
    -0.01565572813546454,
];

pub const FILTER_LEN: usize = COIF1_DEC_LO.len();

/// Per-axis low/high selection in (z, y, x) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubBand {
    pub high: [bool; 3],
}

impl SubBand {
    /// All eight sub-bands, LLL first and HHH last.
    pub fn all() -> [SubBand; 8] {
        std::array::from_fn(|i| SubBand {
            high: [i & 4 != 0, i & 2 != 0, i & 1 != 0],
        })
    }

    pub fn name(&self) -> String {
        self.high.iter().map(|&h| if h { 'H' } else { 'L' }).collect()
    }

    pub fn parse(s: &str) -> Option<SubBand> {
        let b = s.as_bytes();
        if b.len() != 3 {
            return None;
        }
        let mut high = [false; 3];
        for (h, c) in high.iter_mut().zip(b) {
            *h = match c {
                b'H' => true,
                b'L' => false,
                _ => return None,
            };
        }
        Some(SubBand { high })
    }
}

fn analyze_line(x: ArrayView1<f64>, mut lo: ArrayViewMut1<f64>, mut hi: ArrayViewMut1<f64>) {
    // odd lengths behave as if a trailing zero were appended
    let n = x.len() + x.len() % 2;
    let at = |i: usize| x.get(i % n).copied().unwrap_or(0.0);
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for m in 0..FILTER_LEN {
            let v = at(2 * k + m);
            a += COIF1_DEC_LO[m] * v;
            d += COIF1_DEC_HI[m] * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

fn split_axis(a: &Array3<f64>, axis: usize) -> (Array3<f64>, Array3<f64>) {
    let mut shape = [a.shape()[0], a.shape()[1], a.shape()[2]];
    shape[axis] = shape[axis].div_ceil(2);
    let mut lo = Array3::zeros(shape);
    let mut hi = Array3::zeros(shape);
    for ((x, l), h) in a
        .lanes(Axis(axis))
        .into_iter()
        .zip(lo.lanes_mut(Axis(axis)))
        .zip(hi.lanes_mut(Axis(axis)))
    {
        analyze_line(x, l, h);
    }
    (lo, hi)
}

/// Periodized one-level decomposition into the eight sub-bands in
/// [`SubBand::all`] order. Odd axes are zero-padded to even length, so each
/// output axis has `ceil(n/2)` samples and the transform stays orthogonal.
pub fn wavelet_decompose(vol: &Volume3D) -> Result<Vec<(SubBand, Volume3D)>> {
    let dims = vol.dims();
    if let Some(axis) = (0..3).find(|&a| dims[a] < FILTER_LEN) {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} has {} samples, the coif1 transform needs at least {FILTER_LEN}; pad or enlarge the crop",
            dims[axis]
        )));
    }
    let data = vol.data().mapv(|v| v as f64);
    let mut bands = vec![data];
    for axis in 0..3 {
        bands = bands
            .iter()
            .flat_map(|b| {
                let (l, h) = split_axis(b, axis);
                [l, h]
            })
            .collect();
    }
    let spacing = vol.spacing().map(|s| 2.0 * s);
    SubBand::all()
        .into_iter()
        .zip(bands)
        .map(|(sb, b)| Ok((sb, Volume3D::new(b.mapv(|v| v as f32), spacing, Unit::Arbitrary)?)))
        .collect()
}

/// Mask on the decimated grid: a coefficient is inside when any voxel of its
/// 2x2x2 parent block is inside.
pub fn decimate_mask(mask: &Mask3D) -> Mask3D {
    let [d, h, w] = mask.dims();
    let out = [d.div_ceil(2), h.div_ceil(2), w.div_ceil(2)];
    Mask3D::from_fn(out, |z, y, x| {
        (2 * z..(2 * z + 2).min(d)).any(|zz| {
            (2 * y..(2 * y + 2).min(h)).any(|yy| (2 * x..(2 * x + 2).min(w)).any(|xx| mask.get(zz, yy, xx)))
        })
    })
}
