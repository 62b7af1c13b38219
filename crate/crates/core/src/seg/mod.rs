//! Lung segmentation: threshold and connectivity candidates, then per-slice
//! active-contour refinement that pulls in dense (ground-glass) borders.

pub mod components;
pub mod contour;
pub mod morphology;
pub mod snake;

use ndarray::{s, Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{ensure_same_dims, Mask3D, Volume3D};

pub use components::{connected_components, connected_components_3d, fill_holes, Region, Region3D};
pub use contour::{trace_outer_boundary, Contour2D};
pub use morphology::{dilate, erode, morpho_close};
pub use snake::{active_contour, SnakeOutcome, SnakeParams};

pub const LUNG_THRESHOLD_HU: f32 = -320.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalMask {
    pub mask: Mask3D,
    /// Interior sub-threshold components before keeping the two largest.
    pub candidates: usize,
}

impl ClassicalMask {
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// Voxels below the lung threshold, minus components touching the volume
/// border (ambient air), keeping the two largest 3D components.
pub fn classical_lung_mask(vol: &Volume3D) -> Result<ClassicalMask> {
    let fg = vol.data().mapv(|v| v < LUNG_THRESHOLD_HU);
    let (labels, regions) = connected_components_3d(&fg);
    let mut interior: Vec<&Region3D> = regions.iter().filter(|r| !r.touches_border).collect();
    let candidates = interior.len();
    interior.sort_by(|a, b| b.size.cmp(&a.size).then(a.label.cmp(&b.label)));
    let keep: Vec<u32> = interior.iter().take(2).map(|r| r.label).collect();
    let data = labels.mapv(|l| (l != 0 && keep.contains(&l)) as u8);
    Ok(ClassicalMask {
        mask: Mask3D::new(data)?,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub snake: SnakeParams,
    pub closing_radius: usize,
    /// Outward margin of the seed contour (pixels).
    pub seed_margin: usize,
    /// Seed point spacing along the contour (pixels).
    pub seed_spacing: f64,
    /// HU window mapped onto [0, 1] for the edge image.
    pub window: [f64; 2],
    /// Minimum component area as a fraction of the slice area.
    pub min_area_fraction: f64,
    /// Central band of the slice width that must contain the component centroid.
    pub central_fraction: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            snake: SnakeParams::default(),
            closing_radius: 10,
            seed_margin: 3,
            seed_spacing: 2.0,
            window: [-100.0, 100.0],
            min_area_fraction: 0.005,
            central_fraction: 0.8,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        self.snake.validate()?;
        if !(self.seed_spacing > 0.0) {
            return Err(Error::Config("seed_spacing must be positive".into()));
        }
        if !(self.window[1] > self.window[0]) {
            return Err(Error::Config("window upper bound must exceed lower bound".into()));
        }
        if !(0.0..=1.0).contains(&self.min_area_fraction) || !(0.0..=1.0).contains(&self.central_fraction) {
            return Err(Error::Config("area and central fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Lung-candidate rule for a 2D component.
    pub fn is_lung(&self, r: &Region, shape: (usize, usize)) -> bool {
        let (h, w) = shape;
        let margin = (1.0 - self.central_fraction) / 2.0 * w as f64;
        r.area as f64 >= self.min_area_fraction * (h * w) as f64
            && r.centroid[1] >= margin
            && r.centroid[1] <= w as f64 - margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentNote {
    pub slice: usize,
    pub area: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SegReport {
    pub initial_voxels: usize,
    pub refined_voxels: usize,
    pub components: Vec<ComponentNote>,
    pub warnings: Vec<String>,
}

impl SegReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn window(img: ndarray::ArrayView2<f32>, w: [f64; 2]) -> Array2<f64> {
    img.mapv(|v| ((v as f64 - w[0]) / (w[1] - w[0])).clamp(0.0, 1.0))
}

type SliceResult = (Array2<bool>, Vec<ComponentNote>, Vec<String>);

fn refine_slice(z: usize, img: ndarray::ArrayView2<f32>, init: ndarray::ArrayView2<u8>, cfg: &RefineConfig) -> SliceResult {
    let shape = init.dim();
    let base = init.mapv(|v| v != 0);
    let mut out = base.clone();
    let mut notes = Vec::new();
    let mut warnings = Vec::new();
    if !base.iter().any(|&v| v) {
        return (out, notes, warnings);
    }
    let image = window(img, cfg.window);
    let (labels, regions) = connected_components(&base);
    for reg in regions.iter().filter(|r| cfg.is_lung(r, shape)) {
        let comp = labels.mapv(|l| l == reg.label);
        let closed = fill_holes(&morpho_close(&comp, cfg.closing_radius));
        let seed_mask = dilate(&closed, cfg.seed_margin);
        let evolved = Contour2D::new(trace_outer_boundary(&seed_mask))
            .and_then(|c| c.resample(cfg.seed_spacing))
            .and_then(|seed| active_contour(&image, &seed, &cfg.snake));
        let fill = match evolved {
            Ok(o) if o.converged => {
                notes.push(ComponentNote {
                    slice: z,
                    area: reg.area,
                    iterations: o.iterations,
                    converged: true,
                });
                fill_holes(&o.contour.rasterize(shape))
            }
            Ok(o) => {
                notes.push(ComponentNote {
                    slice: z,
                    area: reg.area,
                    iterations: o.iterations,
                    converged: false,
                });
                warnings.push(format!(
                    "slice {z}: snake did not converge in {} iterations (component area {}); kept closed component",
                    o.iterations, reg.area
                ));
                closed
            }
            Err(e) => {
                warnings.push(format!("slice {z}: snake failed ({e}); kept closed component"));
                closed
            }
        };
        out.zip_mut_with(&fill, |o, &f| *o |= f);
    }
    (out, notes, warnings)
}

/// Per axial slice: close each lung component, seed a snake just outside it,
/// evolve to the boundary and fill. The result is the union of the initial
/// mask and all filled contours.
pub fn refine_mask(vol: &Volume3D, initial: &Mask3D, cfg: &RefineConfig) -> Result<(Mask3D, SegReport)> {
    cfg.validate()?;
    ensure_same_dims(vol.dims(), initial.dims())?;
    let [d, h, w] = initial.dims();
    let slices: Vec<SliceResult> = (0..d)
        .into_par_iter()
        .map(|z| {
            refine_slice(
                z,
                vol.data().index_axis(Axis(0), z),
                initial.data().index_axis(Axis(0), z),
                cfg,
            )
        })
        .collect();
    let mut data = Array3::<u8>::zeros((d, h, w));
    let mut report = SegReport {
        initial_voxels: initial.count(),
        ..SegReport::default()
    };
    for (z, (m, notes, warnings)) in slices.into_iter().enumerate() {
        data.slice_mut(s![z, .., ..]).assign(&m.mapv(u8::from));
        report.components.extend(notes);
        report.warnings.extend(warnings);
    }
    let mask = Mask3D::new(data)?;
    report.refined_voxels = mask.count();
    Ok((mask, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Unit;

    #[test]
    fn air_and_tissue_give_empty_masks() {
        for v in [-1000.0, 40.0] {
            let vol = Volume3D::filled([8, 12, 12], [1.0; 3], Unit::Hounsfield, v).unwrap();
            assert!(classical_lung_mask(&vol).unwrap().is_empty());
        }
    }

    #[test]
    fn keeps_two_largest_interior_components() {
        let dims = [10, 20, 30];
        let vol = Volume3D::from_vec(
            dims,
            [1.0; 3],
            Unit::Hounsfield,
            (0..dims.iter().product::<usize>())
                .map(|i| {
                    let (z, y, x) = (i / 600, (i / 30) % 20, i % 30);
                    let inner = (2..8).contains(&z) && (3..17).contains(&y);
                    if inner && (3..10).contains(&x) || inner && (12..20).contains(&x) || (z, y, x) == (5, 10, 25) {
                        -800.0
                    } else {
                        40.0
                    }
                })
                .collect(),
        )
        .unwrap();
        let c = classical_lung_mask(&vol).unwrap();
        assert_eq!(c.candidates, 3);
        assert_eq!(c.mask.count(), 6 * 14 * 7 + 6 * 14 * 8);
        assert!(!c.mask.get(5, 10, 25));
    }

    #[test]
    fn empty_initial_gives_empty_output() {
        let vol = Volume3D::filled([6, 30, 30], [1.0; 3], Unit::Hounsfield, 40.0).unwrap();
        let (m, rep) = refine_mask(&vol, &Mask3D::empty([6, 30, 30]), &RefineConfig::default()).unwrap();
        assert!(m.is_empty());
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn lung_rule() {
        let cfg = RefineConfig::default();
        let reg = |area, col| Region {
            label: 1,
            area,
            bbox: ([0, 0], [0, 0]),
            centroid: [50.0, col],
            touches_border: false,
        };
        assert!(cfg.is_lung(&reg(100, 50.0), (100, 100)));
        assert!(!cfg.is_lung(&reg(49, 50.0), (100, 100)));
        assert!(!cfg.is_lung(&reg(100, 5.0), (100, 100)));
    }
}
