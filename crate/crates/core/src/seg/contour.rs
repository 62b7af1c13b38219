//! Closed 2D contours: boundary tracing, arc-length resampling and filling.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

/// Closed polygon of (row, col) points; the last point connects to the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour2D {
    points: Vec<[f64; 2]>,
}

impl Contour2D {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::ContourTooShort(points.len()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("contour point".into()));
        }
        Ok(Contour2D { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn within(&self, shape: (usize, usize)) -> bool {
        let (h, w) = shape;
        self.points
            .iter()
            .all(|p| p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (h - 1) as f64 && p[1] <= (w - 1) as f64)
    }

    pub fn perimeter(&self) -> f64 {
        closed_length(&self.points)
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                a[1] * b[0] - b[1] * a[0]
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let s = self.points.iter().fold([0.0; 2], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Pixels whose centres lie inside or on the polygon (even-odd rule).
    pub fn rasterize(&self, shape: (usize, usize)) -> Array2<bool> {
        let (h, w) = shape;
        let mut out = Array2::from_elem((h, w), false);
        let n = self.points.len();
        let mut xs = Vec::new();
        for r in 0..h {
            let y = r as f64;
            xs.clear();
            for i in 0..n {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                if (a[0] <= y && y < b[0]) || (b[0] <= y && y < a[0]) {
                    xs.push(a[1] + (y - a[0]) / (b[0] - a[0]) * (b[1] - a[1]));
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            for pair in xs.chunks_exact(2) {
                mark_span(&mut out, r, pair[0], pair[1]);
            }
        }
        // centres lying exactly on an edge are missed by the half-open crossing rule
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            if a[0] == b[0] {
                if a[0].fract() == 0.0 && a[0] >= 0.0 && (a[0] as usize) < h {
                    mark_span(&mut out, a[0] as usize, a[1].min(b[1]), a[1].max(b[1]));
                }
                continue;
            }
            let (y0, y1) = (a[0].min(b[0]).ceil().max(0.0), a[0].max(b[0]).floor());
            let mut y = y0;
            while y <= y1 && (y as usize) < h {
                let x = a[1] + (y - a[0]) / (b[0] - a[0]) * (b[1] - a[1]);
                if (x - x.round()).abs() < 1e-9 {
                    mark_span(&mut out, y as usize, x.round(), x.round());
                }
                y += 1.0;
            }
        }
        out
    }

    /// Points evenly spaced by arc length, about `spacing` apart (at least 3).
    pub fn resample(&self, spacing: f64) -> Result<Contour2D> {
        Contour2D::new(resample_closed(&self.points, spacing))
    }
}

fn mark_span(out: &mut Array2<bool>, r: usize, lo: f64, hi: f64) {
    let w = out.ncols();
    let hi = hi.floor();
    if hi < 0.0 || w == 0 {
        return;
    }
    let lo = lo.ceil().max(0.0) as usize;
    for c in lo..=(hi as usize).min(w - 1) {
        out[[r, c]] = true;
    }
}

fn closed_length(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    (0..n).map(|i| dist(p[i], p[(i + 1) % n])).sum()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn resample_closed(p: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    let total = closed_length(p);
    if total == 0.0 {
        return p.to_vec();
    }
    let count = ((total / spacing).round() as usize).max(3);
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let n = p.len();
    let (mut seg, mut seg_start) = (0, 0.0);
    for k in 0..count {
        let s = k as f64 * step;
        while seg_start + dist(p[seg], p[(seg + 1) % n]) < s && seg < n - 1 {
            seg_start += dist(p[seg], p[(seg + 1) % n]);
            seg += 1;
        }
        let (a, b) = (p[seg], p[(seg + 1) % n]);
        let len = dist(a, b);
        let t = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

const RING: [(isize, isize); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

/// Moore-neighbour trace of the outer boundary of the 8-connected component
/// containing the first set pixel in raster order. Returns pixel centres.
pub fn trace_outer_boundary(m: &Array2<bool>) -> Vec<[f64; 2]> {
    let (h, w) = m.dim();
    let fg = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && m[[r as usize, c as usize]];
    let Some(start) = m.indexed_iter().find(|(_, &v)| v).map(|((r, c), _)| (r as isize, c as isize)) else {
        return Vec::new();
    };
    let ring_index = |d: (isize, isize)| RING.iter().position(|&o| o == d).expect("adjacent");
    let mut out = vec![[start.0 as f64, start.1 as f64]];
    let mut p = start;
    let mut back = (start.0, start.1 - 1);
    let mut first_move: Option<(isize, isize)> = None;
    let limit = 4 * m.len() + 8;
    for _ in 0..limit {
        let b_dir = ring_index((back.0 - p.0, back.1 - p.1));
        let mut next = None;
        for k in 1..=8 {
            let d = RING[(b_dir + k) % 8];
            let q = (p.0 + d.0, p.1 + d.1);
            if fg(q.0, q.1) {
                let prev = RING[(b_dir + k - 1) % 8];
                back = (p.0 + prev.0, p.1 + prev.1);
                next = Some(q);
                break;
            }
        }
        let Some(q) = next else {
            break;
        };
        if p == start {
            match first_move {
                None => first_move = Some(q),
                Some(f) if f == q => break,
                _ => {}
            }
        }
        p = q;
        if p == start && first_move.is_some() {
            continue;
        }
        out.push([p.0 as f64, p.1 as f64]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(h: usize, w: usize, c: [f64; 2], r: f64) -> Array2<bool> {
        Array2::from_shape_fn((h, w), |(y, x)| (y as f64 - c[0]).powi(2) + (x as f64 - c[1]).powi(2) <= r * r)
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(matches!(Contour2D::new(vec![[0.0, 0.0], [1.0, 1.0]]), Err(Error::ContourTooShort(2))));
    }

    #[test]
    fn square_area_and_fill() {
        let sq = Contour2D::new(vec![[1.0, 1.0], [1.0, 4.0], [4.0, 4.0], [4.0, 1.0]]).unwrap();
        assert_eq!(sq.area(), 9.0);
        assert_eq!(sq.perimeter(), 12.0);
        let m = sq.rasterize((6, 6));
        assert_eq!(m.iter().filter(|&&v| v).count(), 16);
        assert!(m[[1, 1]] && m[[4, 4]] && !m[[5, 5]]);
    }

    #[test]
    fn trace_square_block() {
        let mut m = Array2::from_elem((5, 5), false);
        for r in 1..4 {
            for c in 1..4 {
                m[[r, c]] = true;
            }
        }
        let b = trace_outer_boundary(&m);
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&[2.0, 2.0]));
    }

    #[test]
    fn trace_then_fill_recovers_disc() {
        let m = disc(30, 30, [14.0, 15.0], 8.0);
        let c = Contour2D::new(trace_outer_boundary(&m)).unwrap();
        assert_eq!(c.rasterize((30, 30)), m);
        let r = c.resample(2.0).unwrap();
        let spacing = r.perimeter() / r.len() as f64;
        assert!((spacing - 2.0).abs() < 0.3, "{spacing}");
    }

    #[test]
    fn trace_handles_thin_shapes() {
        let mut m = Array2::from_elem((5, 7), false);
        for c in 1..6 {
            m[[2, c]] = true;
        }
        let b = trace_outer_boundary(&m);
        assert_eq!(b.len(), 8);
        let mut single = Array2::from_elem((3, 3), false);
        single[[1, 1]] = true;
        assert_eq!(trace_outer_boundary(&single), vec![[1.0, 1.0]]);
    }
}
