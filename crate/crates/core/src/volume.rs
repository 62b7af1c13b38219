//! Volumes, masks, isotropic resampling and the on-disk format.
//!
//! Volumes are stored z-major (`[z, y, x]`) with physical voxel spacing in
//! millimetres. The on-disk format is a raw little-endian payload plus a JSON
//! sidecar next to it carrying dims, spacing and a unit tag:
//!
//! ```text
//! case_0001.f32vol   nz*ny*nx little-endian f32
//! case_0001.json     {"dims":[nz,ny,nx],"spacing_mm":[sz,sy,sx],"unit":"HU"}
//! ```
//!
//! Masks use one byte per voxel and `"unit":"mask"`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intensity unit attached to a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "HU")]
    Hounsfield,
    #[serde(rename = "arbitrary")]
    Arbitrary,
}

/// A 3D scalar grid with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    data: Array3<f32>,
    spacing: [f64; 3],
    unit: Unit,
}

/// Binary companion of a [`Volume3D`]: one byte per voxel, values 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    data: Array3<u8>,
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    for (axis, s) in spacing.iter().enumerate() {
        if !s.is_finite() || *s <= 0.0 {
            return Err(Error::InvalidVolume(format!(
                "spacing on axis {axis} must be positive, got {s}"
            )));
        }
    }
    Ok(())
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidVolume(format!(
            "all dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

impl Volume3D {
    pub fn new(data: Array3<f32>, spacing: [f64; 3], unit: Unit) -> Result<Self> {
        check_dims(dims_of(&data))?;
        check_spacing(spacing)?;
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidVolume("volume contains NaN voxels".into()));
        }
        // standard layout keeps the raw payload order z-major
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self {
            data,
            spacing,
            unit,
        })
    }

    pub fn from_vec(dims: [usize; 3], spacing: [f64; 3], unit: Unit, voxels: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "voxel count {} does not match dims {:?} ({expected})",
                voxels.len(),
                dims
            )));
        }
        let data = Array3::from_shape_vec((dims[0], dims[1], dims[2]), voxels)
            .map_err(|e| Error::InvalidVolume(e.to_string()))?;
        Self::new(data, spacing, unit)
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], unit: Unit, value: f32) -> Result<Self> {
        check_dims(dims)?;
        Self::new(Array3::from_elem((dims[0], dims[1], dims[2]), value), spacing, unit)
    }

    pub fn dims(&self) -> [usize; 3] {
        dims_of(&self.data)
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

impl Mask3D {
    pub fn new(data: Array3<u8>) -> Result<Self> {
        check_dims(dims_of(&data))?;
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidVolume("mask values must be 0 or 1".into()));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            data: Array3::zeros((dims[0], dims[1], dims[2])),
        }
    }

    /// Builds a mask from any boolean predicate over voxel indices.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        Self {
            data: Array3::from_shape_fn((dims[0], dims[1], dims[2]), |(z, y, x)| f(z, y, x) as u8),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        dims_of(&self.data)
    }

    pub fn data(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[[z, y, x]] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn complement(&self) -> Self {
        Self {
            data: self.data.mapv(|v| 1 - v),
        }
    }

    pub fn union(&self, other: &Mask3D) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        let mut data = self.data.clone();
        data.zip_mut_with(&other.data, |a, &b| *a |= b);
        Ok(Self { data })
    }

    /// Inclusive bounding box `([z0,y0,x0], [z1,y1,x1])`, `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for ((z, y, x), &v) in self.data.indexed_iter() {
            if v != 0 {
                any = true;
                for (a, c) in [z, y, x].into_iter().enumerate() {
                    lo[a] = lo[a].min(c);
                    hi[a] = hi[a].max(c);
                }
            }
        }
        any.then_some((lo, hi))
    }
}

pub fn dims_of<T>(a: &Array3<T>) -> [usize; 3] {
    let s = a.shape();
    [s[0], s[1], s[2]]
}

pub fn ensure_same_dims(a: [usize; 3], b: [usize; 3]) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn resampled_dims(dims: [usize; 3], spacing: [f64; 3], target: f64) -> Result<[usize; 3]> {
    if !target.is_finite() || target <= 0.0 {
        return Err(Error::invalid(format!("target spacing must be positive, got {target}")));
    }
    let mut out = [0usize; 3];
    for axis in 0..3 {
        let n = (dims[axis] as f64 * spacing[axis] / target).round();
        if n < 1.0 {
            return Err(Error::DegenerateAxis { axis });
        }
        out[axis] = n as usize;
    }
    Ok(out)
}

/// Source coordinate (in input voxel units) of output voxel `i`; voxel
/// centres are aligned so the physical extents of both grids coincide.
fn source_coord(i: usize, ratio: f64, n_in: usize) -> f64 {
    let c = (i as f64 + 0.5) * ratio - 0.5;
    c.clamp(0.0, (n_in - 1) as f64)
}

/// Trilinear resampling to isotropic `target` spacing, edge-clamped.
pub fn resample_isotropic(vol: &Volume3D, target: f64) -> Result<Volume3D> {
    let dims = vol.dims();
    let out_dims = resampled_dims(dims, vol.spacing, target)?;
    let ratio = [
        target / vol.spacing[0],
        target / vol.spacing[1],
        target / vol.spacing[2],
    ];
    let axis_lerp = |axis: usize| -> Vec<(usize, usize, f64)> {
        (0..out_dims[axis])
            .map(|i| {
                let c = source_coord(i, ratio[axis], dims[axis]);
                let i0 = c.floor() as usize;
                let i1 = (i0 + 1).min(dims[axis] - 1);
                (i0, i1, c - i0 as f64)
            })
            .collect()
    };
    let (lz, ly, lx) = (axis_lerp(0), axis_lerp(1), axis_lerp(2));
    let src = &vol.data;
    let out = Array3::from_shape_fn((out_dims[0], out_dims[1], out_dims[2]), |(z, y, x)| {
        let (z0, z1, tz) = lz[z];
        let (y0, y1, ty) = ly[y];
        let (x0, x1, tx) = lx[x];
        let v = |a: usize, b: usize, c: usize| src[[a, b, c]] as f64;
        // weights of exactly 0 or 1 leave the untouched corner out, so integer
        // coordinates reproduce voxels bit-for-bit
        let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
        let c00 = lerp(v(z0, y0, x0), v(z0, y0, x1), tx);
        let c01 = lerp(v(z0, y1, x0), v(z0, y1, x1), tx);
        let c10 = lerp(v(z1, y0, x0), v(z1, y0, x1), tx);
        let c11 = lerp(v(z1, y1, x0), v(z1, y1, x1), tx);
        let c0 = lerp(c00, c01, ty);
        let c1 = lerp(c10, c11, ty);
        lerp(c0, c1, tz) as f32
    });
    Volume3D::new(out, [target; 3], vol.unit)
}

/// Nearest-neighbour resampling of a mask onto the grid produced by
/// [`resample_isotropic`] for a volume with `spacing`.
pub fn resample_mask_isotropic(mask: &Mask3D, spacing: [f64; 3], target: f64) -> Result<Mask3D> {
    check_spacing(spacing)?;
    let dims = mask.dims();
    let out_dims = resampled_dims(dims, spacing, target)?;
    let nearest = |axis: usize| -> Vec<usize> {
        (0..out_dims[axis])
            .map(|i| source_coord(i, target / spacing[axis], dims[axis]).round() as usize)
            .collect()
    };
    let (nz, ny, nx) = (nearest(0), nearest(1), nearest(2));
    let data = Array3::from_shape_fn((out_dims[0], out_dims[1], out_dims[2]), |(z, y, x)| {
        mask.data[[nz[z], ny[y], nx[x]]]
    });
    Ok(Mask3D { data })
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    unit: String,
}

/// Sidecar path for a payload: same stem, `.json` extension.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

fn write_sidecar(payload: &Path, sidecar: &Sidecar) -> Result<()> {
    let path = sidecar_path(payload);
    let text = serde_json::to_string(sidecar).expect("sidecar serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_sidecar(payload: &Path) -> Result<Sidecar> {
    let path = sidecar_path(payload);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    check_dims(sidecar.dims).map_err(|e| Error::Sidecar {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    check_spacing(sidecar.spacing_mm).map_err(|e| Error::Sidecar {
        path,
        reason: e.to_string(),
    })?;
    Ok(sidecar)
}

fn unit_tag(unit: Unit) -> &'static str {
    match unit {
        Unit::Hounsfield => "HU",
        Unit::Arbitrary => "arbitrary",
    }
}

pub fn write_volume(vol: &Volume3D, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(vol.len() * 4);
    for v in vol.data.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_sidecar(
        path,
        &Sidecar {
            dims: vol.dims(),
            spacing_mm: vol.spacing,
            unit: unit_tag(vol.unit).into(),
        },
    )
}

pub fn read_volume(path: &Path) -> Result<Volume3D> {
    let sidecar = read_sidecar(path)?;
    let unit = match sidecar.unit.as_str() {
        "HU" => Unit::Hounsfield,
        "arbitrary" => Unit::Arbitrary,
        other => {
            return Err(Error::Sidecar {
                path: sidecar_path(path),
                reason: format!("unit {other:?} is not a volume unit"),
            })
        }
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n: usize = sidecar.dims.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::PayloadSize {
            path: path.into(),
            expected: n * 4,
            found: bytes.len(),
        });
    }
    let voxels = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume3D::from_vec(sidecar.dims, sidecar.spacing_mm, unit, voxels)
}

pub fn write_mask(mask: &Mask3D, spacing: [f64; 3], path: &Path) -> Result<()> {
    check_spacing(spacing)?;
    let bytes: Vec<u8> = mask.data.iter().copied().collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_sidecar(
        path,
        &Sidecar {
            dims: mask.dims(),
            spacing_mm: spacing,
            unit: "mask".into(),
        },
    )
}

/// Reads a mask and the spacing recorded in its sidecar.
pub fn read_mask(path: &Path) -> Result<(Mask3D, [f64; 3])> {
    let sidecar = read_sidecar(path)?;
    if sidecar.unit != "mask" {
        return Err(Error::Sidecar {
            path: sidecar_path(path),
            reason: format!("expected unit \"mask\", got {:?}", sidecar.unit),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n: usize = sidecar.dims.iter().product();
    if bytes.len() != n {
        return Err(Error::PayloadSize {
            path: path.into(),
            expected: n,
            found: bytes.len(),
        });
    }
    let [a, b, c] = sidecar.dims;
    let data = Array3::from_shape_vec((a, b, c), bytes).expect("length checked");
    Ok((Mask3D::new(data)?, sidecar.spacing_mm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], spacing: [f64; 3]) -> Volume3D {
        let n = dims.iter().product::<usize>();
        let voxels = (0..n).map(|i| (i as f32 * 0.37).sin() * 500.0 - 100.0).collect();
        Volume3D::from_vec(dims, spacing, Unit::Hounsfield, voxels).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Volume3D::from_vec([2, 2, 2], [1.0; 3], Unit::Hounsfield, vec![0.0; 7]).is_err());
        assert!(Volume3D::filled([2, 2, 2], [1.0, 0.0, 1.0], Unit::Hounsfield, 0.0).is_err());
        assert!(Volume3D::filled([2, 2, 2], [1.0, -1.0, 1.0], Unit::Hounsfield, 0.0).is_err());
        assert!(Volume3D::from_vec([1, 1, 2], [1.0; 3], Unit::Hounsfield, vec![0.0, f32::NAN]).is_err());
        assert!(Mask3D::new(Array3::from_elem((1, 1, 2), 2u8)).is_err());
    }

    #[test]
    fn resample_identity_is_exact() {
        let vol = ramp([5, 6, 7], [1.0; 3]);
        let out = resample_isotropic(&vol, 1.0).unwrap();
        assert_eq!(out, vol);
    }

    #[test]
    fn resample_dims_follow_physical_extent() {
        let vol = Volume3D::filled([50, 100, 100], [2.0, 1.0, 1.0], Unit::Hounsfield, 0.0).unwrap();
        let out = resample_isotropic(&vol, 1.0).unwrap();
        assert_eq!(out.dims(), [100, 100, 100]);
        assert_eq!(out.spacing(), [1.0; 3]);
    }

    #[test]
    fn resample_constant_stays_constant() {
        let vol = Volume3D::filled([7, 9, 4], [2.5, 0.7, 1.3], Unit::Hounsfield, -812.25).unwrap();
        for target in [0.5, 1.0, 1.7, 3.0] {
            let out = resample_isotropic(&vol, target).unwrap();
            assert!(out.data().iter().all(|&v| (v + 812.25).abs() < 1e-6));
            assert_eq!(out.unit(), Unit::Hounsfield);
        }
    }

    #[test]
    fn resample_reports_degenerate_axis() {
        let vol = Volume3D::filled([1, 10, 10], [0.2, 1.0, 1.0], Unit::Hounsfield, 0.0).unwrap();
        match resample_isotropic(&vol, 1.0) {
            Err(Error::DegenerateAxis { axis }) => assert_eq!(axis, 0),
            other => panic!("expected degenerate axis error, got {other:?}"),
        }
    }

    #[test]
    fn mask_resample_stays_binary() {
        let mask = Mask3D::from_fn([4, 8, 8], |z, y, x| (z + y + x) % 3 == 0);
        let out = resample_mask_isotropic(&mask, [2.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(out.dims(), [8, 8, 8]);
        assert!(out.data().iter().all(|&v| v <= 1));
    }

    #[test]
    fn io_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let vol = ramp([3, 4, 5], [1.5, 0.5, 2.0]);
        let p = dir.path().join("v.f32vol");
        write_volume(&vol, &p).unwrap();
        let back = read_volume(&p).unwrap();
        assert_eq!(back.dims(), vol.dims());
        assert_eq!(back.spacing(), vol.spacing());
        let bits = |v: &Volume3D| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&vol));

        // size mismatch
        fs::write(
            sidecar_path(&p),
            r#"{"dims":[3,4,6],"spacing_mm":[1.5,0.5,2.0],"unit":"HU"}"#,
        )
        .unwrap();
        assert!(matches!(read_volume(&p), Err(Error::PayloadSize { .. })));

        // zero spacing
        fs::write(
            sidecar_path(&p),
            r#"{"dims":[3,4,5],"spacing_mm":[0.0,0.5,2.0],"unit":"HU"}"#,
        )
        .unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Sidecar { .. })));

        // unreadable sidecar
        fs::write(sidecar_path(&p), "not json").unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Sidecar { .. })));

        let mask = Mask3D::from_fn([3, 4, 5], |z, y, x| z * y > x);
        let mp = dir.path().join("m.mask");
        write_mask(&mask, [1.0; 3], &mp).unwrap();
        let (mback, sp) = read_mask(&mp).unwrap();
        assert_eq!(mback, mask);
        assert_eq!(sp, [1.0; 3]);
        assert!(read_volume(&mp).is_err());
    }
}
