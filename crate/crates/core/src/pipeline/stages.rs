use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::config::{Config, MaskSource};
use super::{write_text, Stage};
use crate::error::{Error, Result};
use crate::metrics::{confusion, format_metric_rows, MetricRow};
use crate::mtl::{self, Dataset, History, LossMode};
use crate::phantom::{self, parse_labels_csv, CaseRecord, Split};
use crate::radiomics::{extract_all, feature_names, manifest_json};
use crate::seed::{derive_seed, stream};
use crate::seg::{classical_lung_mask, refine_mask};
use crate::shift3d::{apply_shift, sample_event};
use crate::table::{fmt_f64, FeatureTable};
use crate::volume::{
    read_mask, read_volume, resample_isotropic, resample_mask_isotropic, sidecar_path, write_mask, Mask3D, Volume3D,
};

pub(super) struct Ctx<'a> {
    pub cfg: &'a Config,
    pub out: &'a Path,
    pub input: PathBuf,
    pub seed: u64,
}

impl Ctx<'_> {
    fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.dir())
    }
}

fn missing(what: impl Into<String>) -> Error {
    Error::MissingInput(what.into())
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(missing(format!("{} not found; {hint}", path.display())))
    }
}

fn read_labels(input: &Path) -> Result<Vec<CaseRecord>> {
    let path = input.join("labels.csv");
    require_file(&path, "run gen-phantoms first or pass --input")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let records = parse_labels_csv(&text)?;
    if records.is_empty() {
        return Err(missing(format!("{} lists no cases", path.display())));
    }
    Ok(records)
}

fn classical_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}_classical.mask"))
}

fn refined_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}_refined.mask"))
}

fn with_sidecar(p: PathBuf) -> [PathBuf; 2] {
    let s = sidecar_path(&p);
    [p, s]
}

pub(super) fn gen_phantoms(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let dir = ctx.dir(Stage::GenPhantoms);
    let p = &ctx.cfg.phantoms;
    let records = phantom::generate_cohort(&p.spec, p.cases, p.mix, p.train_fraction, ctx.seed, &dir)?;
    let mut files = vec![dir.join("labels.csv")];
    for r in &records {
        files.extend(with_sidecar(phantom::volume_path(&dir, &r.case_id)));
        files.extend(with_sidecar(phantom::truth_path(&dir, &r.case_id)));
        files.extend(with_sidecar(phantom::ggo_path(&dir, &r.case_id)));
    }
    Ok(files)
}

/// Case ids of every `<id>.f32vol` in `dir`, sorted.
fn volume_ids(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(missing(format!(
            "input directory {} not found; run gen-phantoms first or pass --input",
            dir.display()
        )));
    }
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".f32vol").map(str::to_string)
        })
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(missing(format!("no .f32vol volumes in {}", dir.display())));
    }
    Ok(ids)
}

pub(super) fn segment(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let ids = volume_ids(&ctx.input)?;
    let dir = ctx.dir(Stage::Segment);
    let refine = &ctx.cfg.segment.refine;
    let rows: Vec<(String, Vec<PathBuf>)> = ids
        .par_iter()
        .map(|id| {
            let vol = read_volume(&phantom::volume_path(&ctx.input, id))?;
            let classical = classical_lung_mask(&vol)?;
            let (refined, report) = refine_mask(&vol, &classical.mask, refine)?;
            let (cp, rp) = (classical_path(&dir, id), refined_path(&dir, id));
            write_mask(&classical.mask, vol.spacing(), &cp)?;
            write_mask(&refined, vol.spacing(), &rp)?;
            let report_path = dir.join(format!("{id}_report.json"));
            write_text(&report_path, &report.to_json())?;
            let row = format!(
                "{id},{},{},{},{}",
                classical.mask.count(),
                refined.count(),
                report.components.len(),
                report.warnings.len()
            );
            let mut files = Vec::from(with_sidecar(cp));
            files.extend(with_sidecar(rp));
            files.push(report_path);
            Ok((row, files))
        })
        .collect::<Result<_>>()?;
    let mut summary = String::from("case_id,classical_voxels,refined_voxels,refined_components,warnings\n");
    let mut files = Vec::new();
    for (row, f) in rows {
        summary.push_str(&row);
        summary.push('\n');
        files.extend(f);
    }
    let path = dir.join("summary.csv");
    write_text(&path, &summary)?;
    files.push(path);
    Ok(files)
}

fn load_mask(path: &Path, hint: &str) -> Result<Mask3D> {
    require_file(path, hint)?;
    Ok(read_mask(path)?.0)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

pub(super) fn eval_seg(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let ids = volume_ids(&ctx.input)?;
    let seg = ctx.dir(Stage::Segment);
    let dir = ctx.dir(Stage::EvalSeg);
    type Row = (MetricRow, MetricRow, Option<(usize, usize, usize)>);
    let rows: Vec<Row> = ids
        .par_iter()
        .map(|id| {
            let truth = load_mask(&phantom::truth_path(&ctx.input, id), "ground-truth masks are required")?;
            let classical = load_mask(&classical_path(&seg, id), "run segment first")?;
            let refined = load_mask(&refined_path(&seg, id), "run segment first")?;
            let c = MetricRow::from_counts(id.as_str(), &confusion(&classical, &truth)?);
            let r = MetricRow::from_counts(id.as_str(), &confusion(&refined, &truth)?);
            let ggo_path = phantom::ggo_path(&ctx.input, id);
            let ggo = if ggo_path.is_file() {
                let g = read_mask(&ggo_path)?.0;
                let hit = |m: &Mask3D| g.data().iter().zip(m.data().iter()).filter(|(&a, &b)| a != 0 && b != 0).count();
                Some((g.count(), hit(&classical), hit(&refined)))
            } else {
                None
            };
            Ok((c, r, ggo))
        })
        .collect::<Result<_>>()?;
    let classical: Vec<MetricRow> = rows.iter().map(|r| r.0.clone()).collect();
    let refined: Vec<MetricRow> = rows.iter().map(|r| r.1.clone()).collect();
    let mut files = Vec::new();
    for (name, table) in [("classical", &classical), ("refined", &refined)] {
        let p = dir.join(format!("{name}.csv"));
        write_text(&p, &format_metric_rows(table))?;
        files.push(p);
    }
    let mut summary = String::from("method,cases,dice_mean,dice_sd,jaccard_mean,mcc_mean,precision_mean\n");
    for (name, table) in [("classical", &classical), ("refined", &refined)] {
        let col = |f: fn(&MetricRow) -> f64| table.iter().map(f).collect::<Vec<f64>>();
        let (dm, ds) = mean_sd(&col(|r| r.dice));
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{},{}",
            table.len(),
            fmt_f64(dm),
            fmt_f64(ds),
            fmt_f64(mean_sd(&col(|r| r.jaccard)).0),
            fmt_f64(mean_sd(&col(|r| r.mcc)).0),
            fmt_f64(mean_sd(&col(|r| r.precision)).0)
        );
    }
    let p = dir.join("summary.csv");
    write_text(&p, &summary)?;
    files.push(p);
    if rows.iter().any(|r| r.2.is_some()) {
        let mut ggo = String::from("case_id,ggo_voxels,classical_recovery,refined_recovery\n");
        for (id, row) in ids.iter().zip(&rows) {
            if let Some((n, c, r)) = row.2 {
                let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
                let _ = writeln!(ggo, "{id},{n},{},{}", fmt_f64(frac(c)), fmt_f64(frac(r)));
            }
        }
        let p = dir.join("ggo_recovery.csv");
        write_text(&p, &ggo)?;
        files.push(p);
    }
    Ok(files)
}

fn resampled(vol: Volume3D, mask: Mask3D, spacing: [f64; 3], target: f64) -> Result<(Volume3D, Mask3D)> {
    if vol.spacing().iter().all(|&s| s == target) {
        return Ok((vol, mask));
    }
    Ok((resample_isotropic(&vol, target)?, resample_mask_isotropic(&mask, spacing, target)?))
}

pub(super) fn extract(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let records = read_labels(&ctx.input)?;
    let e = &ctx.cfg.extract;
    let seg = ctx.dir(Stage::Segment);
    let dir = ctx.dir(Stage::Extract);
    let mask_path = |id: &str| match e.mask {
        MaskSource::Refined => (refined_path(&seg, id), "run segment first or set extract.mask"),
        MaskSource::Classical => (classical_path(&seg, id), "run segment first or set extract.mask"),
        MaskSource::Truth => (phantom::truth_path(&ctx.input, id), "ground-truth masks are missing"),
    };
    type Row = (Vec<f64>, Vec<(String, Vec<f64>)>);
    let rows: Vec<Row> = records
        .par_iter()
        .map(|r| {
            let id = r.case_id.as_str();
            let vol = read_volume(&phantom::volume_path(&ctx.input, id))?;
            let (mp, hint) = mask_path(id);
            require_file(&mp, hint)?;
            let (mask, spacing) = read_mask(&mp)?;
            let (vol, mask) = resampled(vol, mask, spacing, e.resample_mm)?;
            let base = extract_all(id, &vol, &mask, &e.texture)?.values;
            let mut aug = Vec::new();
            if r.split == Split::Train {
                let mut rng = stream(derive_seed(ctx.seed, id), "shift3d");
                for k in 1..=e.augment_copies {
                    if e.shift.apply_probability < 1.0 && rng.random::<f64>() >= e.shift.apply_probability {
                        continue;
                    }
                    let ev = sample_event(vol.dims(), &e.shift, &mut rng);
                    let v = apply_shift(vol.data(), &ev, &e.shift, e.shift.padding_value)?;
                    let m = apply_shift(mask.data(), &ev, &e.shift, 0u8)?;
                    let v = Volume3D::new(v, vol.spacing(), vol.unit())?;
                    let m = Mask3D::new(m)?;
                    let aid = format!("{id}_shift{k}");
                    let values = extract_all(&aid, &v, &m, &e.texture)?.values;
                    aug.push((aid, values));
                }
            }
            Ok((base, aug))
        })
        .collect::<Result<_>>()?;
    let mut table = FeatureTable::new(feature_names());
    let mut aug_table = FeatureTable::new(feature_names());
    for (r, (values, aug)) in records.iter().zip(rows) {
        table.push(r.case_id.as_str(), values, r.labels)?;
        for (aid, v) in aug {
            aug_table.push(aid, v, r.labels)?;
        }
    }
    let mut files = vec![dir.join("features.csv"), dir.join("feature_manifest.json")];
    table.write(&files[0])?;
    write_text(&files[1], &manifest_json())?;
    if e.augment_copies > 0 {
        let p = dir.join("features_aug.csv");
        aug_table.write(&p)?;
        files.push(p);
    }
    Ok(files)
}

fn read_features(ctx: &Ctx) -> Result<FeatureTable> {
    let path = ctx.dir(Stage::Extract).join("features.csv");
    require_file(&path, "run extract first")?;
    FeatureTable::read(&path)
}

/// Training/validation tables split by the labels file, with any augmented
/// rows appended to the training side.
fn dataset(ctx: &Ctx) -> Result<Dataset> {
    let table = read_features(ctx)?;
    let split: HashMap<String, Split> = read_labels(&ctx.input)?
        .into_iter()
        .map(|r| (r.case_id, r.split))
        .collect();
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (i, id) in table.case_ids.iter().enumerate() {
        match split.get(id) {
            Some(Split::Train) => train_idx.push(i),
            Some(Split::Test) => val_idx.push(i),
            None => return Err(Error::invalid(format!("feature row {id} has no entry in labels.csv"))),
        }
    }
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::invalid("both the train and the test split must be non-empty"));
    }
    let mut train = table.subset(&train_idx);
    let aug_path = ctx.dir(Stage::Extract).join("features_aug.csv");
    if aug_path.is_file() {
        let aug = FeatureTable::read(&aug_path)?;
        if aug.names != train.names {
            return Err(Error::DimensionMismatch("augmented features use different columns".into()));
        }
        for ((id, row), labels) in aug.case_ids.into_iter().zip(aug.rows).zip(aug.labels) {
            train.push(id, row, labels)?;
        }
    }
    Dataset::from_tables(&train, &table.subset(&val_idx))
}

const TASKS: [&str; 3] = ["ct", "nat", "sev"];

fn metrics_csv(h: &History) -> String {
    let mut out = String::from("task,val_loss,accuracy,precision,recall,f1,auc,auc_spread\n");
    if let Some(last) = h.last() {
        for (t, (l, m)) in last.val_loss.iter().zip(&last.val_metrics).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                TASKS[t],
                fmt_f64(*l),
                fmt_f64(m.accuracy),
                fmt_f64(m.precision),
                fmt_f64(m.recall),
                fmt_f64(m.f1),
                fmt_f64(m.auc),
                fmt_f64(m.auc_spread)
            );
        }
    }
    out
}

pub(super) fn train(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let data = dataset(ctx)?;
    let t = &ctx.cfg.train;
    let cfg = t.to_train_config(t.mode, ctx.seed);
    let (net, history) = mtl::train(&data, &cfg)?;
    let dir = ctx.dir(Stage::Train);
    let files = vec![dir.join("history.csv"), dir.join("metrics.csv"), dir.join("model.f32"), dir.join("model.json")];
    write_text(&files[0], &history.to_csv())?;
    if let Some((epoch, what)) = &history.diverged {
        return Err(Error::NonFinite(format!("{what} (training diverged at epoch {epoch})")));
    }
    write_text(&files[1], &metrics_csv(&history))?;
    net.save(&files[2])?;
    Ok(files)
}

/// Training seed of ablation run `k`.
pub(super) fn ablation_seed(stage_seed: u64, k: u64) -> u64 {
    derive_seed(stage_seed, &format!("seed{k}"))
}

pub(super) fn ablate(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let data = dataset(ctx)?;
    let a = &ctx.cfg.ablate;
    let jobs: Vec<(LossMode, u64)> = a.modes.iter().flat_map(|&m| a.seeds.iter().map(move |&s| (m, s))).collect();
    let runs: Vec<History> = jobs
        .par_iter()
        .map(|&(mode, k)| {
            let cfg = ctx.cfg.train.to_train_config(mode, ablation_seed(ctx.seed, k));
            mtl::train(&data, &cfg).map(|(_, h)| h)
        })
        .collect::<Result<_>>()?;
    let dir = ctx.dir(Stage::AblateLoss);
    let mut files = Vec::new();
    let mut summary = String::from(
        "mode,seed,epochs_run,diverged,initial_val_loss_mean,final_val_loss_ct,final_val_loss_nat,final_val_loss_sev,final_val_loss_mean,best_val_loss_mean\n",
    );
    let mut finals: HashMap<(LossMode, u64), f64> = HashMap::new();
    for (&(mode, k), h) in jobs.iter().zip(&runs) {
        let p = dir.join(format!("curve_{mode}_seed{k}.csv"));
        write_text(&p, &h.to_csv())?;
        files.push(p);
        let fin = h.last().map_or(vec![f64::NAN; 3], |r| r.val_loss.clone());
        let fin_mean = h.last().map_or(f64::NAN, |r| r.val_mean_loss());
        let best = h.epochs.iter().map(|r| r.val_mean_loss()).fold(f64::NAN, f64::min);
        let _ = writeln!(
            summary,
            "{mode},{k},{},{},{},{},{},{},{},{}",
            h.epochs.len(),
            h.is_diverged() as u8,
            fmt_f64(mtl::loss::mean_of(&h.initial_val_loss)),
            fmt_f64(fin[0]),
            fmt_f64(fin[1]),
            fmt_f64(fin[2]),
            fmt_f64(fin_mean),
            fmt_f64(best)
        );
        finals.insert((mode, k), if h.is_diverged() { f64::INFINITY } else { fin_mean });
    }
    let p = dir.join("summary.csv");
    write_text(&p, &summary)?;
    files.push(p);
    // how often random weighting ends at or below each baseline
    if a.modes.contains(&LossMode::RandomWeighted) {
        let mut dir_csv = String::from("baseline,runs,random_weighted_at_or_below\n");
        for &b in a.modes.iter().filter(|&&m| m != LossMode::RandomWeighted) {
            let wins = a
                .seeds
                .iter()
                .filter(|&&k| finals[&(LossMode::RandomWeighted, k)] <= finals[&(b, k)])
                .count();
            let _ = writeln!(dir_csv, "{b},{},{wins}", a.seeds.len());
        }
        let p = dir.join("direction.csv");
        write_text(&p, &dir_csv)?;
        files.push(p);
    }
    Ok(files)
}

pub(super) fn analyze(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let table = read_features(ctx)?;
    let report = crate::analysis::significance_table(&table, ctx.cfg.analyze.features.as_deref())?;
    let dir = ctx.dir(Stage::Analyze);
    let files = vec![dir.join("significance.csv"), dir.join("summary.csv")];
    write_text(&files[0], &report.to_csv())?;
    let mut summary = String::from("grouping,tested,significant_fraction\n");
    for g in crate::analysis::Grouping::ALL {
        let tested = report.rows.iter().filter(|r| r.result(g).is_some()).count();
        let _ = writeln!(summary, "{},{tested},{}", g.key(), fmt_f64(report.significant_fraction(g)));
    }
    write_text(&files[1], &summary)?;
    let mut files = files;
    if !report.notes.is_empty() {
        let p = dir.join("notes.txt");
        write_text(&p, &(report.notes.join("\n") + "\n"))?;
        files.push(p);
    }
    Ok(files)
}
