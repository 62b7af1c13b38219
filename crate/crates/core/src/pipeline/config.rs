//! The run configuration: one TOML file with a section per stage.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mtl::{LossMode, TrainConfig};
use crate::phantom::PhantomSpec;
use crate::radiomics::TextureConfig;
use crate::seg::RefineConfig;
use crate::shift3d::Shift3DConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub phantoms: PhantomSection,
    pub segment: SegmentSection,
    pub extract: ExtractSection,
    pub train: TrainSection,
    pub ablate: AblateSection,
    pub analyze: AnalyzeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Master seed; every stage draws from its own derived sub-seed.
    pub seed: u64,
    /// Worker threads for stage-internal parallelism (0 = one per core).
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 2024, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub cases: usize,
    /// Control, mild and severe proportions.
    pub mix: [f64; 3],
    pub train_fraction: f64,
    pub spec: PhantomSpec,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection {
            cases: 60,
            mix: [0.4, 0.4, 0.2],
            train_fraction: 0.7,
            spec: PhantomSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub refine: RefineConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSource {
    #[default]
    Refined,
    Classical,
    Truth,
}

impl std::str::FromStr for MaskSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refined" => Ok(MaskSource::Refined),
            "classical" => Ok(MaskSource::Classical),
            "truth" => Ok(MaskSource::Truth),
            other => Err(Error::Config(format!("unknown mask source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub mask: MaskSource,
    /// Isotropic voxel size (mm) volumes are resampled to before extraction.
    pub resample_mm: f64,
    pub texture: TextureConfig,
    /// Shifted copies of every training case added as extra training rows.
    pub augment_copies: usize,
    pub shift: Shift3DConfig,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            mask: MaskSource::Refined,
            resample_mm: 1.0,
            texture: TextureConfig::default(),
            augment_copies: 0,
            shift: Shift3DConfig {
                padding_value: -1000.0,
                ..Shift3DConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: LossMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub draws: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            mode: t.loss_mode,
            epochs: t.epochs,
            batch_size: t.batch_size,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            lr_initial: t.lr_initial,
            lr_min: t.lr_min,
            draws: t.draws,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, mode: LossMode, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_initial: self.lr_initial,
            lr_min: self.lr_min,
            loss_mode: mode,
            draws: self.draws,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub seeds: Vec<u64>,
    pub modes: Vec<LossMode>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            seeds: (1..=10).collect(),
            modes: LossMode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Restrict the significance table to these features (default: all).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

fn section<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("[{name}] {m}")),
        other => Error::Config(format!("[{name}] {other}")),
    })
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.phantoms;
        section("phantoms", p.spec.validate())?;
        if p.cases == 0 {
            return Err(Error::Config("[phantoms] cases must be positive".into()));
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(Error::Config("[phantoms] train_fraction must lie in (0, 1)".into()));
        }
        section("phantoms", crate::phantom::allocate(p.cases, &p.mix).map(|_| ()))?;
        section("segment", self.segment.refine.validate())?;
        let e = &self.extract;
        section("extract", e.texture.validate())?;
        section("extract", e.shift.validate())?;
        if !(e.resample_mm > 0.0 && e.resample_mm.is_finite()) {
            return Err(Error::Config("[extract] resample_mm must be positive".into()));
        }
        section("train", self.train.to_train_config(self.train.mode, 0).validate())?;
        let a = &self.ablate;
        if a.seeds.is_empty() || a.modes.is_empty() {
            return Err(Error::Config("[ablate] seeds and modes must be non-empty".into()));
        }
        for (i, m) in a.modes.iter().enumerate() {
            if a.modes[..i].contains(m) {
                return Err(Error::Config(format!("[ablate] mode {m} listed twice")));
            }
        }
        for (i, s) in a.seeds.iter().enumerate() {
            if a.seeds[..i].contains(s) {
                return Err(Error::Config(format!("[ablate] seed {s} listed twice")));
            }
        }
        if let Some(f) = &self.analyze.features {
            if f.is_empty() {
                return Err(Error::Config("[analyze] features list is empty".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the configuration with the worker count cleared, since
    /// outputs do not depend on it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.workers = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        c.validate().unwrap();
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = Config::from_toml("[run]\nseed = 7\n[train]\nmode = \"mean\"\nepochs = 5\n").unwrap();
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.train.mode, LossMode::Mean);
        assert_eq!(c.train.batch_size, 10);
        assert_eq!(c.phantoms.cases, 60);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = Config::from_toml("[train]\nepoch = 5\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(Config::from_toml("[bogus]\nx = 1\n").is_err());
    }

    #[test]
    fn validation_names_the_section() {
        let mut c = Config::default();
        c.train.lr_initial = -1.0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("[train]"), "{msg}");
        let mut c = Config::default();
        c.ablate.modes = vec![LossMode::Mean, LossMode::Mean];
        assert!(c.validate().is_err());
    }

    #[test]
    fn workers_do_not_change_the_hash() {
        let a = Config::default();
        let mut b = a.clone();
        b.run.workers = 3;
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
