//! Staged, config-driven runner.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/config.toml        effective configuration
//! <out>/manifest.json      written by `pipeline`: hashes of every output
//! <out>/manifests/<stage>.json
//! <out>/phantoms/          volumes, truth and GGO masks, labels.csv
//! <out>/seg/               classical and refined masks, per-case reports
//! <out>/eval/              segmentation metric tables
//! <out>/features/          features.csv, features_aug.csv, feature_manifest.json
//! <out>/train/             history.csv, metrics.csv, model.f32 + model.json
//! <out>/ablate/            curve_<mode>_seed<k>.csv, summary.csv, direction.csv
//! <out>/analyze/           significance.csv, summary.csv
//! ```

mod config;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    AblateSection, AnalyzeSection, Config, ExtractSection, MaskSource, PhantomSection, RunSection, SegmentSection,
    TrainSection,
};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    GenPhantoms,
    Segment,
    EvalSeg,
    Extract,
    Train,
    AblateLoss,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::GenPhantoms,
        Stage::Segment,
        Stage::EvalSeg,
        Stage::Extract,
        Stage::Train,
        Stage::AblateLoss,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenPhantoms => "gen-phantoms",
            Stage::Segment => "segment",
            Stage::EvalSeg => "eval-seg",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::AblateLoss => "ablate-loss",
            Stage::Analyze => "analyze",
        }
    }

    /// Output directory under the run directory.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::GenPhantoms => "phantoms",
            Stage::Segment => "seg",
            Stage::EvalSeg => "eval",
            Stage::Extract => "features",
            Stage::Train => "train",
            Stage::AblateLoss => "ablate",
            Stage::Analyze => "analyze",
        }
    }

    pub fn seed(self, master: u64) -> u64 {
        derive_seed(master, self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Phantom/input directory for segment, eval-seg and extract; defaults
    /// to `<out>/phantoms`.
    pub input: Option<PathBuf>,
    pub force: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunOptions {
            out: out.into(),
            input: None,
            force: false,
        }
    }

    pub fn input_dir(&self) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.out.join(Stage::GenPhantoms.dir()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub feature_manifest_len: usize,
    pub command: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<&'static str, u64>,
    pub config_sha256: String,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the serialized manifest: one value identifying the whole run.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

fn build_manifest(cfg: &Config, out: &Path, command: &str, stages: &[Stage], files: &[PathBuf]) -> Result<RunManifest> {
    let mut rel: Vec<String> = files
        .iter()
        .map(|f| f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/"))
        .collect();
    rel.sort();
    rel.dedup();
    let outputs = rel
        .into_iter()
        .map(|r| {
            let (bytes, sha256) = sha256_file(&out.join(&r))?;
            Ok(OutputEntry { path: r, bytes, sha256 })
        })
        .collect::<Result<_>>()?;
    Ok(RunManifest {
        tool: "lungmtl",
        version: env!("CARGO_PKG_VERSION"),
        feature_manifest_len: crate::radiomics::feature_names().len(),
        command: command.to_string(),
        seed: cfg.run.seed,
        stage_seeds: stages.iter().map(|s| (s.name(), s.seed(cfg.run.seed))).collect(),
        config_sha256: cfg.hash(),
        outputs,
    })
}

fn is_nonempty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Creates a stage output directory, clearing an existing one only under `force`.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if is_nonempty_dir(dir) {
        if !force {
            return Err(Error::Config(format!(
                "output directory {} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(f)
}

fn execute(stage: Stage, cfg: &Config, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let dir = opts.out.join(stage.dir());
    prepare_dir(&dir, opts.force)?;
    let ctx = stages::Ctx {
        cfg,
        out: &opts.out,
        input: opts.input_dir(),
        seed: stage.seed(cfg.run.seed),
    };
    match stage {
        Stage::GenPhantoms => stages::gen_phantoms(&ctx),
        Stage::Segment => stages::segment(&ctx),
        Stage::EvalSeg => stages::eval_seg(&ctx),
        Stage::Extract => stages::extract(&ctx),
        Stage::Train => stages::train(&ctx),
        Stage::AblateLoss => stages::ablate(&ctx),
        Stage::Analyze => stages::analyze(&ctx),
    }
}

/// Runs one stage and writes `<out>/manifests/<stage>.json`.
pub fn run_stage(stage: Stage, cfg: &Config, opts: &RunOptions) -> Result<RunManifest> {
    let inner = || -> Result<RunManifest> {
        cfg.validate()?;
        fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
        let files = with_workers(cfg.run.workers, || execute(stage, cfg, opts))?;
        let manifest = build_manifest(cfg, &opts.out, stage.name(), &[stage], &files)?;
        let path = opts.out.join("manifests").join(format!("{}.json", stage.name()));
        write_text(&path, &manifest.to_json())?;
        Ok(manifest)
    };
    inner().map_err(|e| e.in_stage(stage.name()))
}

/// Runs every stage in order into a fresh run directory and writes
/// `<out>/manifest.json` covering all outputs.
pub fn run_pipeline(cfg: &Config, opts: &RunOptions) -> Result<RunManifest> {
    let setup = || -> Result<()> {
        cfg.validate()?;
        if is_nonempty_dir(&opts.out) && !opts.force {
            return Err(Error::Config(format!(
                "run directory {} already exists; pass --force to overwrite",
                opts.out.display()
            )));
        }
        fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
        write_text(&opts.out.join("config.toml"), &cfg.to_toml())
    };
    setup().map_err(|e| e.in_stage("pipeline"))?;
    // the pipeline reads its own phantoms and owns every stage directory
    let opts = RunOptions {
        out: opts.out.clone(),
        input: None,
        force: true,
    };
    let mut files = Vec::new();
    for stage in Stage::ALL {
        let m = run_stage(stage, cfg, &opts)?;
        files.extend(m.outputs.iter().map(|o| opts.out.join(&o.path)));
    }
    let finish = || -> Result<RunManifest> {
        let manifest = build_manifest(cfg, &opts.out, "pipeline", &Stage::ALL, &files)?;
        write_text(&opts.out.join("manifest.json"), &manifest.to_json())?;
        Ok(manifest)
    };
    finish().map_err(|e| e.in_stage("pipeline"))
}
