//! Synthetic chest CT phantoms with exact lung and GGO ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream};
use crate::table::{Severity, TaskLabels};
use crate::volume::{write_mask, write_volume, Mask3D, Unit, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// (z, y, x) centre in millimetres from the volume origin.
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
}

impl Ellipsoid {
    fn level(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|a| ((p[a] - self.center_mm[a]) / self.radii_mm[a]).powi(2)).sum()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.level(p) <= 1.0
    }

    pub fn volume_mm3(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii_mm.iter().product::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelRule {
    /// Burdens in (0, mild_max] are mild; above are severe.
    pub mild_max: f64,
    /// Probability that a mild case tests NAT positive.
    pub mild_nat_sensitivity: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            mild_max: 0.08,
            mild_nat_sensitivity: 0.85,
        }
    }
}

impl LabelRule {
    pub fn severity(&self, burden: f64) -> Severity {
        if burden <= 0.0 {
            Severity::Control
        } else if burden <= self.mild_max {
            Severity::Mild
        } else {
            Severity::Severe
        }
    }

    pub fn labels<R: Rng + ?Sized>(&self, burden: f64, rng: &mut R) -> TaskLabels {
        let severity = self.severity(burden);
        let (ct, nat) = match severity {
            Severity::Control => (false, false),
            Severity::Mild => (true, rng.random_bool(self.mild_nat_sensitivity)),
            Severity::Severe => (true, true),
        };
        TaskLabels {
            covid_ct: ct,
            covid_nat: nat,
            severity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub air_hu: f32,
    pub lung_hu: f32,
    pub body_hu: f32,
    pub noise_sd: f32,
    /// Peak amplitude of the smooth bias field (HU).
    pub bias_hu: f32,
    /// Elliptic body cross-section semi-axes (y, x), mm; spans every slice.
    pub body_radii_mm: [f64; 2],
    pub lungs: Vec<Ellipsoid>,
    /// Inclusive blob-count ranges used when generating each severity class.
    pub mild_blobs: [usize; 2],
    pub severe_blobs: [usize; 2],
    pub ggo_radius_mm: [f64; 2],
    pub ggo_hu: [f32; 2],
    /// Centre blobs on the lateral lung surface instead of inside the lung.
    pub edge_adjacent: bool,
    pub label_rule: LabelRule,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [40, 80, 88],
            spacing_mm: [1.0; 3],
            air_hu: -1000.0,
            lung_hu: -800.0,
            body_hu: 40.0,
            noise_sd: 20.0,
            bias_hu: 15.0,
            body_radii_mm: [34.0, 42.0],
            lungs: vec![
                Ellipsoid {
                    center_mm: [20.0, 40.0, 25.0],
                    radii_mm: [15.0, 20.0, 11.0],
                },
                Ellipsoid {
                    center_mm: [20.0, 40.0, 63.0],
                    radii_mm: [15.0, 20.0, 11.0],
                },
            ],
            mild_blobs: [1, 4],
            severe_blobs: [7, 14],
            ggo_radius_mm: [4.0, 7.0],
            ggo_hu: [-300.0, -100.0],
            edge_adjacent: false,
            label_rule: LabelRule::default(),
        }
    }
}

impl PhantomSpec {
    fn extent_mm(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.spacing_mm[a])
    }

    fn body_center(&self) -> [f64; 2] {
        let e = self.extent_mm();
        [e[1] / 2.0, e[2] / 2.0]
    }

    fn in_body(&self, p: [f64; 3]) -> bool {
        let c = self.body_center();
        ((p[1] - c[0]) / self.body_radii_mm[0]).powi(2) + ((p[2] - c[1]) / self.body_radii_mm[1]).powi(2) <= 1.0
    }

    /// Voxel-centre position in mm.
    fn position(&self, z: usize, y: usize, x: usize) -> [f64; 3] {
        [
            (z as f64 + 0.5) * self.spacing_mm[0],
            (y as f64 + 0.5) * self.spacing_mm[1],
            (x as f64 + 0.5) * self.spacing_mm[2],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("phantom spec: {m}")));
        if self.dims.iter().any(|&d| d < 8) {
            return bad(format!("dims {:?} too small", self.dims));
        }
        if self.spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("spacing must be positive".into());
        }
        if !(self.air_hu < self.lung_hu && self.lung_hu < self.ggo_hu[0] && self.ggo_hu[1] < self.body_hu) {
            return bad("HU ordering must be air < lung < GGO < body".into());
        }
        if self.ggo_hu[0] > self.ggo_hu[1] || self.ggo_radius_mm[0] > self.ggo_radius_mm[1] || self.ggo_radius_mm[0] <= 0.0 {
            return bad("GGO ranges must be ordered and positive".into());
        }
        if self.mild_blobs[0] == 0 || self.mild_blobs[0] > self.mild_blobs[1] || self.severe_blobs[0] > self.severe_blobs[1] {
            return bad("blob ranges must be ordered, with at least one mild blob".into());
        }
        if !(self.noise_sd >= 0.0 && self.bias_hu >= 0.0) {
            return bad("noise and bias must be non-negative".into());
        }
        if self.lungs.is_empty() {
            return bad("at least one lung is required".into());
        }
        let extent = self.extent_mm();
        for (i, l) in self.lungs.iter().enumerate() {
            if l.radii_mm.iter().any(|r| !(*r > 0.0)) {
                return bad(format!("lung {i} radii must be positive"));
            }
            // axis extremes and a ring of equatorial points must sit inside the body and volume
            let mut probes = Vec::new();
            for a in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut p = l.center_mm;
                    p[a] += s * l.radii_mm[a];
                    probes.push(p);
                }
            }
            for k in 0..64 {
                let t = k as f64 / 64.0 * std::f64::consts::TAU;
                probes.push([
                    l.center_mm[0],
                    l.center_mm[1] + l.radii_mm[1] * t.sin(),
                    l.center_mm[2] + l.radii_mm[2] * t.cos(),
                ]);
            }
            for p in probes {
                if !self.in_body(p) || (0..3).any(|a| p[a] <= 0.0 || p[a] >= extent[a]) {
                    return bad(format!("lung {i} does not fit inside the body"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub volume: Volume3D,
    pub truth: Mask3D,
    /// GGO voxels (a subset of `truth`).
    pub ggo: Mask3D,
    pub labels: TaskLabels,
    pub burden: f64,
    pub blobs: usize,
}

fn blob_centre<R: Rng + ?Sized>(spec: &PhantomSpec, lung: &Ellipsoid, rng: &mut R) -> [f64; 3] {
    let c = lung.center_mm;
    let r = lung.radii_mm;
    if spec.edge_adjacent {
        // lateral surface point within half a z-radius of the lung's mid-plane
        let body_mid = spec.body_center()[1];
        let side = if c[2] < body_mid { -1.0 } else { 1.0 };
        let dz: f64 = rng.random_range(-0.5..=0.5);
        let theta = rng.random_range(-0.6..=0.6f64);
        let ring = (1.0 - dz * dz).sqrt();
        [
            c[0] + dz * r[0],
            c[1] + ring * theta.sin() * r[1],
            c[2] + side * ring * theta.cos() * r[2],
        ]
    } else {
        loop {
            let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.6..=0.6));
            if u.iter().map(|v| v * v).sum::<f64>() <= 0.36 {
                break std::array::from_fn(|a| c[a] + u[a] * r[a]);
            }
        }
    }
}

/// One phantom with `blobs` GGO blobs spread over the lungs.
pub fn generate_case(spec: &PhantomSpec, blobs: usize, rng: &mut ChaCha8Rng) -> Result<PhantomCase> {
    spec.validate()?;
    let [d, h, w] = spec.dims;
    let mut spheres = Vec::with_capacity(blobs);
    for b in 0..blobs {
        let lung = &spec.lungs[b % spec.lungs.len()];
        let centre = blob_centre(spec, lung, rng);
        let radius = rng.random_range(spec.ggo_radius_mm[0]..=spec.ggo_radius_mm[1]);
        let hu = rng.random_range(spec.ggo_hu[0]..=spec.ggo_hu[1]);
        spheres.push((centre, radius, hu));
    }
    let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let extent = spec.extent_mm();
    let noise = Normal::new(0.0f32, spec.noise_sd.max(f32::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;

    let mut vals = Array3::<f32>::zeros((d, h, w));
    let mut truth = Array3::<u8>::zeros((d, h, w));
    let mut ggo = Array3::<u8>::zeros((d, h, w));
    for ((z, y, x), v) in vals.indexed_iter_mut() {
        let p = spec.position(z, y, x);
        let in_lung = spec.lungs.iter().any(|l| l.contains(p));
        let blob = if in_lung {
            spheres
                .iter()
                .filter(|(c, r, _)| (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() <= r * r)
                .map(|s| s.2)
                .fold(None, |acc: Option<f32>, hu| Some(acc.map_or(hu, |a| a.max(hu))))
        } else {
            None
        };
        let base = if !spec.in_body(p) {
            spec.air_hu
        } else if let Some(hu) = blob {
            hu
        } else if in_lung {
            spec.lung_hu
        } else {
            spec.body_hu
        };
        let bias = spec.bias_hu as f64
            * (std::f64::consts::TAU * p[2] / extent[2] + phase[0]).sin()
            * (std::f64::consts::TAU * p[1] / extent[1] + phase[1]).cos()
            * (0.5 + 0.5 * (std::f64::consts::PI * p[0] / extent[0] + phase[2]).cos());
        let n = if spec.noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
        *v = base + bias as f32 + n;
        truth[[z, y, x]] = in_lung as u8;
        ggo[[z, y, x]] = blob.is_some() as u8;
    }
    let truth = Mask3D::new(truth)?;
    let ggo = Mask3D::new(ggo)?;
    let burden = ggo.count() as f64 / truth.count().max(1) as f64;
    let labels = spec.label_rule.labels(burden, rng);
    Ok(PhantomCase {
        volume: Volume3D::new(vals, spec.spacing_mm, Unit::Hounsfield)?,
        truth,
        ggo,
        labels,
        burden,
        blobs,
    })
}

/// Draws blob counts for `target` until the burden lands in that class.
pub fn generate_for_class(spec: &PhantomSpec, target: Severity, rng: &mut ChaCha8Rng) -> Result<PhantomCase> {
    const ATTEMPTS: usize = 50;
    for _ in 0..ATTEMPTS {
        let blobs = match target {
            Severity::Control => 0,
            Severity::Mild => rng.random_range(spec.mild_blobs[0]..=spec.mild_blobs[1]),
            Severity::Severe => rng.random_range(spec.severe_blobs[0]..=spec.severe_blobs[1]),
        };
        let case = generate_case(spec, blobs, rng)?;
        if case.labels.severity == target {
            return Ok(case);
        }
    }
    Err(Error::Config(format!(
        "phantom spec cannot produce a {target:?} case in {ATTEMPTS} attempts; adjust blob ranges"
    )))
}

/// Exact class counts by largest-remainder allocation.
pub fn allocate(n: usize, mix: &[f64]) -> Result<Vec<usize>> {
    let total: f64 = mix.iter().sum();
    if mix.iter().any(|m| !(*m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("class mix {mix:?} must be non-negative and sum to 1")));
    }
    let raw: Vec<f64> = mix.iter().map(|m| m * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasePlan {
    pub case_id: String,
    pub target: Severity,
    pub seed: u64,
}

/// Case ids, target classes and per-case seeds for a cohort, in case order.
pub fn plan_cohort(n: usize, mix: [f64; 3], seed: u64) -> Result<Vec<CasePlan>> {
    if n == 0 {
        return Err(Error::Config("cohort must contain at least one case".into()));
    }
    let counts = allocate(n, &mix)?;
    let mut targets: Vec<Severity> = Severity::ALL
        .iter()
        .zip(&counts)
        .flat_map(|(&s, &c)| std::iter::repeat_n(s, c))
        .collect();
    targets.shuffle(&mut stream(seed, "phantom-order"));
    Ok(targets
        .into_iter()
        .enumerate()
        .map(|(i, target)| {
            let case_id = format!("case{i:04}");
            CasePlan {
                seed: derive_seed(seed, &case_id),
                case_id,
                target,
            }
        })
        .collect())
}

pub fn generate_planned(spec: &PhantomSpec, plan: &CasePlan) -> Result<PhantomCase> {
    let mut rng = stream(plan.seed, "phantom-case");
    generate_for_class(spec, plan.target, &mut rng)
}

/// Train/test assignment stratified by the NAT label.
pub fn stratified_split(nat: &[bool], train_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let mut out = vec![Split::Test; nat.len()];
    let mut rng = stream(seed, "phantom-split");
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..nat.len()).filter(|&i| nat[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::Config(format!(
                "NAT class {} has {} case(s), too few to stratify",
                class as u8,
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let k = (train_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..k] {
            out[i] = Split::Train;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub labels: TaskLabels,
    pub burden: f64,
    pub seed: u64,
    pub split: Split,
}

pub const LABELS_CSV_HEADER: &str = "case_id,covid_ct,covid_nat,severity,ggo_burden,seed,split";

pub fn labels_csv(records: &[CaseRecord]) -> String {
    let mut out = String::from(LABELS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.case_id,
            r.labels.covid_ct as u8,
            r.labels.covid_nat as u8,
            r.labels.severity.index(),
            r.burden,
            r.seed,
            match r.split {
                Split::Train => "train",
                Split::Test => "test",
            }
        );
    }
    out
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<CaseRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some(LABELS_CSV_HEADER) {
        return Err(Error::invalid(format!("labels file must start with {LABELS_CSV_HEADER:?}")));
    }
    lines
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 7 {
                return Err(Error::invalid(format!("bad labels row {line:?}")));
            }
            let bit = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::invalid(format!("bad binary label {s:?}"))),
            };
            Ok(CaseRecord {
                case_id: c[0].to_string(),
                labels: TaskLabels {
                    covid_ct: bit(c[1])?,
                    covid_nat: bit(c[2])?,
                    severity: c[3]
                        .parse()
                        .ok()
                        .and_then(Severity::from_index)
                        .ok_or_else(|| Error::invalid(format!("bad severity {:?}", c[3])))?,
                },
                burden: c[4].parse().map_err(|_| Error::invalid(format!("bad burden {:?}", c[4])))?,
                seed: c[5].parse().map_err(|_| Error::invalid(format!("bad seed {:?}", c[5])))?,
                split: match c[6] {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    s => return Err(Error::invalid(format!("bad split {s:?}"))),
                },
            })
        })
        .collect()
}

pub fn volume_path(dir: &Path, case_id: &str) -> std::path::PathBuf {
    dir.join(format!("{case_id}.f32vol"))
}

pub fn truth_path(dir: &Path, case_id: &str) -> std::path::PathBuf {
    dir.join(format!("{case_id}_truth.mask"))
}

pub fn ggo_path(dir: &Path, case_id: &str) -> std::path::PathBuf {
    dir.join(format!("{case_id}_ggo.mask"))
}

/// Generates a cohort into `dir`: per-case volume, truth and GGO masks, plus
/// `labels.csv`. Cases are generated in parallel from per-case seeds.
pub fn generate_cohort(
    spec: &PhantomSpec,
    n: usize,
    mix: [f64; 3],
    train_fraction: f64,
    seed: u64,
    dir: &Path,
) -> Result<Vec<CaseRecord>> {
    use rayon::prelude::*;
    spec.validate()?;
    let plans = plan_cohort(n, mix, seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let generated: Vec<(TaskLabels, f64)> = plans
        .par_iter()
        .map(|p| {
            let case = generate_planned(spec, p)?;
            write_volume(&case.volume, &volume_path(dir, &p.case_id))?;
            write_mask(&case.truth, spec.spacing_mm, &truth_path(dir, &p.case_id))?;
            write_mask(&case.ggo, spec.spacing_mm, &ggo_path(dir, &p.case_id))?;
            Ok((case.labels, case.burden))
        })
        .collect::<Result<_>>()?;
    let nat: Vec<bool> = generated.iter().map(|g| g.0.covid_nat).collect();
    let split = stratified_split(&nat, train_fraction, seed)?;
    let records: Vec<CaseRecord> = plans
        .into_iter()
        .zip(generated)
        .zip(split)
        .map(|((p, (labels, burden)), split)| CaseRecord {
            case_id: p.case_id,
            labels,
            burden,
            seed: p.seed,
            split,
        })
        .collect();
    let path = dir.join("labels.csv");
    fs::write(&path, labels_csv(&records)).map_err(|e| Error::io(&path, e))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_spec_is_valid() {
        PhantomSpec::default().validate().unwrap();
        let mut bad = PhantomSpec::default();
        bad.lungs[0].radii_mm[2] = 40.0;
        assert!(bad.validate().is_err());
        let mut hu = PhantomSpec::default();
        hu.ggo_hu = [-900.0, -100.0];
        assert!(hu.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = PhantomSpec::default();
        let a = generate_case(&spec, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_case(&spec, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clean_case_is_control() {
        let spec = PhantomSpec::default();
        let c = generate_case(&spec, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(c.burden, 0.0);
        assert_eq!(
            c.labels,
            TaskLabels {
                covid_ct: false,
                covid_nat: false,
                severity: Severity::Control
            }
        );
        let voxel = spec.spacing_mm.iter().product::<f64>();
        let analytic: f64 = spec.lungs.iter().map(|l| l.volume_mm3() / voxel).sum();
        let rel = (c.truth.count() as f64 - analytic).abs() / analytic;
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn ggo_stays_inside_lungs() {
        let spec = PhantomSpec {
            edge_adjacent: true,
            ..PhantomSpec::default()
        };
        let c = generate_case(&spec, 4, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(c.ggo.count() > 0);
        assert!(c.ggo.data().iter().zip(c.truth.data()).all(|(&g, &t)| g <= t));
    }

    #[test]
    fn allocation_and_split() {
        assert_eq!(allocate(100, &[0.4, 0.4, 0.2]).unwrap(), vec![40, 40, 20]);
        assert_eq!(allocate(7, &[0.4, 0.4, 0.2]).unwrap().iter().sum::<usize>(), 7);
        assert!(allocate(10, &[0.5, 0.6, 0.0]).is_err());
        assert!(plan_cohort(0, [0.4, 0.4, 0.2], 1).is_err());

        let nat: Vec<bool> = (0..100).map(|i| i % 10 < 6).collect();
        let split = stratified_split(&nat, 0.7, 3).unwrap();
        assert_eq!(split.iter().filter(|s| **s == Split::Train).count(), 70);
        let pos_train = (0..100).filter(|&i| nat[i] && split[i] == Split::Train).count();
        assert!((pos_train as i64 - 42).abs() <= 1);
        assert!(stratified_split(&[true, false, false], 0.7, 1).is_err());
    }

    #[test]
    fn planned_classes_match() {
        let spec = PhantomSpec::default();
        let plans = plan_cohort(6, [0.4, 0.4, 0.2], 9).unwrap();
        for p in &plans {
            let c = generate_planned(&spec, p).unwrap();
            assert_eq!(c.labels.severity, p.target);
        }
    }

    #[test]
    fn labels_round_trip() {
        let recs = vec![CaseRecord {
            case_id: "case0000".into(),
            labels: TaskLabels {
                covid_ct: true,
                covid_nat: false,
                severity: Severity::Mild,
            },
            burden: 0.031,
            seed: 77,
            split: Split::Test,
        }];
        assert_eq!(parse_labels_csv(&labels_csv(&recs)).unwrap(), recs);
    }
}
