//! Connected components: 2D (8-connected foreground, 4-connected background)
//! and 3D (26-connected).

use std::collections::VecDeque;

use ndarray::{Array2, Array3};

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// 1-based label in the label image.
    pub label: u32,
    pub area: usize,
    /// Inclusive (row, col) corners.
    pub bbox: ([usize; 2], [usize; 2]),
    /// (row, col) mean position.
    pub centroid: [f64; 2],
    pub touches_border: bool,
}

fn label_2d(fg: &Array2<bool>, value: bool, eight: bool) -> (Array2<u32>, Vec<Region>) {
    let (h, w) = fg.dim();
    let mut labels = Array2::<u32>::zeros((h, w));
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    let offsets: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (0, -1), (0, 1), (1, 0)]
    };
    for r in 0..h {
        for c in 0..w {
            if fg[[r, c]] != value || labels[[r, c]] != 0 {
                continue;
            }
            let label = regions.len() as u32 + 1;
            labels[[r, c]] = label;
            queue.push_back((r, c));
            let mut reg = Region {
                label,
                area: 0,
                bbox: ([r, c], [r, c]),
                centroid: [0.0; 2],
                touches_border: false,
            };
            while let Some((y, x)) = queue.pop_front() {
                reg.area += 1;
                reg.centroid[0] += y as f64;
                reg.centroid[1] += x as f64;
                reg.bbox.0 = [reg.bbox.0[0].min(y), reg.bbox.0[1].min(x)];
                reg.bbox.1 = [reg.bbox.1[0].max(y), reg.bbox.1[1].max(x)];
                if y == 0 || x == 0 || y + 1 == h || x + 1 == w {
                    reg.touches_border = true;
                }
                for &(dy, dx) in offsets {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny as usize >= h || nx as usize >= w {
                        continue;
                    }
                    let (ny, nx) = (ny as usize, nx as usize);
                    if fg[[ny, nx]] == value && labels[[ny, nx]] == 0 {
                        labels[[ny, nx]] = label;
                        queue.push_back((ny, nx));
                    }
                }
            }
            reg.centroid = reg.centroid.map(|s| s / reg.area as f64);
            regions.push(reg);
        }
    }
    (labels, regions)
}

/// 8-connected foreground components of a slice.
pub fn connected_components(slice: &Array2<bool>) -> (Array2<u32>, Vec<Region>) {
    label_2d(slice, true, true)
}

/// Sets every 4-connected background component not touching the border.
pub fn fill_holes(slice: &Array2<bool>) -> Array2<bool> {
    let (labels, regions) = label_2d(slice, false, false);
    let enclosed: Vec<bool> = regions.iter().map(|r| !r.touches_border).collect();
    let mut out = slice.clone();
    for (o, &l) in out.iter_mut().zip(labels.iter()) {
        if l > 0 && enclosed[l as usize - 1] {
            *o = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region3D {
    pub label: u32,
    pub size: usize,
    pub touches_border: bool,
}

/// 26-connected foreground components of a volume.
pub fn connected_components_3d(fg: &Array3<bool>) -> (Array3<u32>, Vec<Region3D>) {
    let (d, h, w) = fg.dim();
    let mut labels = Array3::<u32>::zeros((d, h, w));
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for ((z, y, x), &v) in fg.indexed_iter() {
        if !v || labels[[z, y, x]] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        labels[[z, y, x]] = label;
        queue.push_back([z, y, x]);
        let mut reg = Region3D {
            label,
            size: 0,
            touches_border: false,
        };
        while let Some([cz, cy, cx]) = queue.pop_front() {
            reg.size += 1;
            if cz == 0 || cy == 0 || cx == 0 || cz + 1 == d || cy + 1 == h || cx + 1 == w {
                reg.touches_border = true;
            }
            for nz in cz.saturating_sub(1)..(cz + 2).min(d) {
                for ny in cy.saturating_sub(1)..(cy + 2).min(h) {
                    for nx in cx.saturating_sub(1)..(cx + 2).min(w) {
                        if fg[[nz, ny, nx]] && labels[[nz, ny, nx]] == 0 {
                            labels[[nz, ny, nx]] = label;
                            queue.push_back([nz, ny, nx]);
                        }
                    }
                }
            }
        }
        regions.push(reg);
    }
    (labels, regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> Array2<bool> {
        let h = rows.len();
        let w = rows[0].len();
        Array2::from_shape_fn((h, w), |(r, c)| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn two_squares() {
        let mut g = Array2::from_elem((10, 12), false);
        for r in 1..4 {
            for c in 1..4 {
                g[[r, c]] = true;
            }
        }
        for r in 5..9 {
            for c in 6..10 {
                g[[r, c]] = true;
            }
        }
        let (_, regs) = connected_components(&g);
        let mut areas: Vec<usize> = regs.iter().map(|r| r.area).collect();
        areas.sort();
        assert_eq!(areas, vec![9, 16]);
        let big = regs.iter().find(|r| r.area == 16).unwrap();
        assert_eq!(big.bbox, ([5, 6], [8, 9]));
        assert_eq!(big.centroid, [6.5, 7.5]);
        assert!(!big.touches_border);
    }

    #[test]
    fn diagonal_is_connected_in_2d() {
        let g = grid(&["#..", ".#.", "..#"]);
        assert_eq!(connected_components(&g).1.len(), 1);
    }

    #[test]
    fn ring_fills_to_disc() {
        let ring = grid(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        let filled = fill_holes(&ring);
        assert!(filled[[2, 2]]);
        assert_eq!(filled.iter().filter(|&&v| v).count(), 9);
        assert_eq!(fill_holes(&filled), filled);
    }

    #[test]
    fn diagonal_gap_does_not_leak_hole() {
        // the hole touches the outside only diagonally, so it stays enclosed
        let g = grid(&["....", ".##.", ".#.#", "..#."]);
        assert!(fill_holes(&g)[[2, 2]]);
    }

    #[test]
    fn components_3d() {
        let mut v = Array3::from_elem((5, 5, 5), false);
        v[[1, 1, 1]] = true;
        v[[2, 2, 2]] = true;
        v[[0, 4, 4]] = true;
        let (labels, regs) = connected_components_3d(&v);
        assert_eq!(regs.len(), 2);
        assert_eq!(labels[[1, 1, 1]], labels[[2, 2, 2]]);
        assert!(regs.iter().any(|r| r.size == 1 && r.touches_border));
    }
}
