//! Binary morphology with disc structuring elements.
//!
//! Dilation sees pixels beyond the slice as background and erosion sees them
//! as foreground, so erosion is the exact adjoint of dilation and closing is
//! idempotent.

use ndarray::Array2;

fn half_widths(radius: usize) -> Vec<usize> {
    let r2 = (radius * radius) as isize;
    (-(radius as isize)..=radius as isize)
        .map(|dy| ((r2 - dy * dy) as f64).sqrt().floor() as usize)
        .collect()
}

/// Row-wise prefix counts of set pixels, one extra leading column.
fn prefix(m: &Array2<bool>) -> Array2<u32> {
    let (h, w) = m.dim();
    let mut p = Array2::<u32>::zeros((h, w + 1));
    for r in 0..h {
        for c in 0..w {
            p[[r, c + 1]] = p[[r, c]] + m[[r, c]] as u32;
        }
    }
    p
}

pub fn dilate(m: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return m.clone();
    }
    let (h, w) = m.dim();
    let p = prefix(m);
    let hw = half_widths(radius);
    Array2::from_shape_fn((h, w), |(r, c)| {
        hw.iter().enumerate().any(|(k, &half)| {
            let rr = r as isize + k as isize - radius as isize;
            if rr < 0 || rr as usize >= h {
                return false;
            }
            let lo = c.saturating_sub(half);
            let hi = (c + half + 1).min(w);
            p[[rr as usize, hi]] > p[[rr as usize, lo]]
        })
    })
}

pub fn erode(m: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return m.clone();
    }
    let (h, w) = m.dim();
    let p = prefix(m);
    let hw = half_widths(radius);
    Array2::from_shape_fn((h, w), |(r, c)| {
        hw.iter().enumerate().all(|(k, &half)| {
            let rr = r as isize + k as isize - radius as isize;
            if rr < 0 || rr as usize >= h {
                return true;
            }
            let lo = c.saturating_sub(half);
            let hi = (c + half + 1).min(w);
            (p[[rr as usize, hi]] - p[[rr as usize, lo]]) as usize == hi - lo
        })
    })
}

/// Dilation followed by erosion with a disc of the given radius.
pub fn morpho_close(m: &Array2<bool>, radius: usize) -> Array2<bool> {
    erode(&dilate(m, radius), radius)
}
