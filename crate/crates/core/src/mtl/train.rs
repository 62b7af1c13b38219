//! Mini-batch SGD training of the multitask network.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::{classification_metrics, ClassMetrics};
use super::loss::mean_of;
use super::net::{MtlNet, Weighting};
use super::weights::{sample_task_weights, RandomWeightConfig, TaskWeights};
use crate::error::{Error, Result};
use crate::seed;
use crate::table::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    RandomWeighted,
    Mean,
    Uncertainty,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::RandomWeighted, LossMode::Mean, LossMode::Uncertainty];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::RandomWeighted => "random_weighted",
            LossMode::Mean => "mean",
            LossMode::Uncertainty => "uncertainty",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_weighted" => Ok(LossMode::RandomWeighted),
            "mean" => Ok(LossMode::Mean),
            "uncertainty" => Ok(LossMode::Uncertainty),
            other => Err(Error::Config(format!("unknown loss mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub loss_mode: LossMode,
    /// Dirichlet draws averaged per iteration (random-weighted mode).
    pub draws: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            batch_size: 10,
            momentum: 0.9,
            weight_decay: 5e-5,
            lr_initial: 0.005,
            lr_min: 5e-5,
            loss_mode: LossMode::RandomWeighted,
            draws: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("lr_initial", self.lr_initial),
            ("lr_min", self.lr_min),
            ("draws", self.draws as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("train.momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("train.weight_decay must be non-negative".into()));
        }
        if self.lr_min > self.lr_initial {
            return Err(Error::Config("train.lr_min exceeds train.lr_initial".into()));
        }
        Ok(())
    }
}

/// Per-epoch cosine schedule from `lr0` at epoch 0 down to `lr_min` at the last epoch.
pub fn cosine_lr(epoch: usize, epochs: usize, lr0: f64, lr_min: f64) -> f64 {
    if epochs <= 1 {
        return lr0;
    }
    let c = 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / (epochs - 1) as f64).cos());
    lr0 * c + lr_min * (1.0 - c)
}

/// SGD with Nesterov momentum and weight decay applied directly to the
/// parameters (not through the momentum buffer).
#[derive(Debug, Clone)]
pub struct NesterovSgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl NesterovSgd {
    pub fn new(momentum: f64, weight_decay: f64, n_params: usize) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        let decay = 1.0 - lr * self.weight_decay;
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            *v = self.momentum * *v + g;
            *p = *p * decay - lr * (g + self.momentum * *v);
        }
    }
}

/// Standardized design matrices and per-task class targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x_train: Array2<f64>,
    /// `[task][sample]` class indices.
    pub y_train: Vec<Vec<usize>>,
    pub x_val: Array2<f64>,
    pub y_val: Vec<Vec<usize>>,
}

fn targets_of(table: &FeatureTable) -> Vec<Vec<usize>> {
    (0..3)
        .map(|t| table.labels.iter().map(|l| l.class_indices()[t]).collect())
        .collect()
}

impl Dataset {
    /// Z-scores every column with training-set statistics. Undefined values
    /// and zero-variance columns map to 0.
    pub fn from_tables(train: &FeatureTable, val: &FeatureTable) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if train.names != val.names {
            return Err(Error::DimensionMismatch("train and validation feature columns differ".into()));
        }
        let width = train.names.len();
        let mut mean = vec![0.0; width];
        let mut sd = vec![0.0; width];
        for j in 0..width {
            let vals: Vec<f64> = train.rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
            if vals.len() < 2 {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            mean[j] = m;
            sd[j] = var.sqrt();
        }
        let design = |t: &FeatureTable| {
            Array2::from_shape_fn((t.len(), width), |(i, j)| {
                let v = t.rows[i][j];
                if !v.is_finite() || sd[j] == 0.0 || !sd[j].is_finite() {
                    0.0
                } else {
                    (v - mean[j]) / sd[j]
                }
            })
        };
        Ok(Self {
            x_train: design(train),
            y_train: targets_of(train),
            x_val: design(val),
            y_val: targets_of(val),
        })
    }

    pub fn input_width(&self) -> usize {
        self.x_train.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training objective over the epoch's iterations.
    pub train_objective: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_metrics: Vec<ClassMetrics>,
}

impl EpochRecord {
    pub fn val_mean_loss(&self) -> f64 {
        mean_of(&self.val_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct History {
    pub mode: LossMode,
    pub seed: u64,
    /// Validation losses of the untrained network.
    pub initial_val_loss: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Set when training stopped on a non-finite value: (epoch, what).
    pub diverged: Option<(usize, String)>,
}

const TASK_NAMES: [&str; 3] = ["ct", "nat", "sev"];

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// True when training stopped early or some task ended above twice its
    /// untrained validation loss.
    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
            || self.last().is_none_or(|r| {
                r.val_loss
                    .iter()
                    .zip(&self.initial_val_loss)
                    .any(|(v, v0)| !v.is_finite() || *v > 2.0 * v0)
            })
    }

    pub fn to_csv(&self) -> String {
        use crate::table::fmt_f64;
        let tasks = self.initial_val_loss.len();
        let name = |t: usize| TASK_NAMES.get(t).map_or_else(|| format!("t{t}"), |s| s.to_string());
        let mut out = String::from("epoch,lr,train_total");
        for t in 0..tasks {
            out.push_str(&format!(",train_loss_{}", name(t)));
        }
        for t in 0..tasks {
            out.push_str(&format!(",val_loss_{}", name(t)));
        }
        out.push_str(",val_loss_mean");
        for t in 0..tasks {
            let n = name(t);
            out.push_str(&format!(",val_acc_{n},val_f1_{n},val_auc_{n}"));
        }
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!("{},{},{}", r.epoch, fmt_f64(r.lr), fmt_f64(r.train_objective)));
            for v in r.train_loss.iter().chain(&r.val_loss) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            out.push_str(&fmt_f64(r.val_mean_loss()));
            for m in &r.val_metrics {
                out.push_str(&format!(",{},{},{}", fmt_f64(m.accuracy), fmt_f64(m.f1), fmt_f64(m.auc)));
            }
            out.push('\n');
        }
        out
    }
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn select_targets(y: &[Vec<usize>], idx: &[usize]) -> Vec<Vec<usize>> {
    y.iter().map(|t| idx.iter().map(|&i| t[i]).collect()).collect()
}

/// Per-task validation losses and metrics.
pub fn evaluate(net: &MtlNet, x: &Array2<f64>, y: &[Vec<usize>]) -> Result<(Vec<f64>, Vec<ClassMetrics>)> {
    let fwd = net.forward(&x.view())?;
    let losses = MtlNet::task_losses(&fwd, y).losses;
    let metrics = fwd
        .probs
        .iter()
        .zip(y)
        .map(|(p, t)| {
            let rows: Vec<Vec<f64>> = p.rows().into_iter().map(|r| r.to_vec()).collect();
            classification_metrics(&rows, t)
        })
        .collect();
    Ok((losses, metrics))
}

/// Trains a freshly He-initialized standard network.
///
/// Initialization, batch order and task-weight draws use separate streams
/// derived from `cfg.seed`, so runs that differ only in loss mode see the
/// same initial network and the same batches.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(MtlNet, History)> {
    cfg.validate()?;
    if data.x_train.nrows() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let mut init_rng = seed::stream(cfg.seed, "mtl-init");
    let net = MtlNet::standard(data.input_width(), &mut init_rng)?;
    train_net(net, data, cfg)
}

/// Trains an existing network in place.
pub fn train_net(mut net: MtlNet, data: &Dataset, cfg: &TrainConfig) -> Result<(MtlNet, History)> {
    cfg.validate()?;
    let n = data.x_train.nrows();
    if n == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let tasks = net.tasks();
    let mut order_rng = seed::stream(cfg.seed, "mtl-order");
    let mut weight_rng = seed::stream(cfg.seed, "mtl-weights");
    let rw = RandomWeightConfig::new(tasks, cfg.draws)?;
    let uniform = TaskWeights::uniform(tasks);

    let mut opt = NesterovSgd::new(cfg.momentum, cfg.weight_decay, net.num_params());
    let (initial_val_loss, _) = evaluate(&net, &data.x_val, &data.y_val)?;
    let mut history = History {
        mode: cfg.loss_mode,
        seed: cfg.seed,
        initial_val_loss,
        epochs: Vec::with_capacity(cfg.epochs),
        diverged: None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = net.flatten();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr_initial, cfg.lr_min);
        let step = (|| -> Result<EpochRecord> {
        order.shuffle(&mut order_rng);
        let mut objective_sum = 0.0;
        let mut task_sum = vec![0.0; tasks];
        let mut iterations = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = select_rows(&data.x_train, chunk);
            let yb = select_targets(&data.y_train, chunk);
            let sampled;
            let weighting = match cfg.loss_mode {
                LossMode::RandomWeighted => {
                    sampled = sample_task_weights(&rw, &mut weight_rng);
                    Weighting::Fixed(&sampled)
                }
                LossMode::Mean => Weighting::Fixed(&uniform),
                LossMode::Uncertainty => Weighting::Uncertainty,
            };
            let (value, losses, grads) = net.backward(&xb.view(), &yb, weighting)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training objective at epoch {epoch}")));
            }
            objective_sum += value;
            for (s, l) in task_sum.iter_mut().zip(&losses.losses) {
                *s += l;
            }
            iterations += 1;
            opt.step(&mut params, &grads.flatten(), lr);
            net.load_flat(&params)?;
        }
        let (val_loss, val_metrics) = evaluate(&net, &data.x_val, &data.y_val)?;
        Ok(EpochRecord {
            epoch,
            lr,
            train_objective: objective_sum / iterations as f64,
            train_loss: task_sum.iter().map(|s| s / iterations as f64).collect(),
            val_loss,
            val_metrics,
        })
        })();
        match step {
            Ok(rec) => history.epochs.push(rec),
            Err(Error::NonFinite(what)) => {
                history.diverged = Some((epoch, what));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_anchors() {
        assert_eq!(cosine_lr(0, 80, 0.005, 5e-5), 0.005);
        assert_eq!(cosine_lr(79, 80, 0.005, 5e-5), 5e-5);
        assert!((cosine_lr(40, 81, 0.005, 5e-5) - 2.525e-3).abs() < 1e-15);
        let lrs: Vec<f64> = (0..80).map(|e| cosine_lr(e, 80, 0.005, 5e-5)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn weight_decay_shrinks_with_zero_gradient() {
        let mut opt = NesterovSgd::new(0.9, 5e-5, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        let before: f64 = p.iter().map(|v| v * v).sum();
        opt.step(&mut p, &[0.0; 3], 0.005);
        let after: f64 = p.iter().map(|v| v * v).sum();
        assert!(after < before);
    }

    #[test]
    fn nesterov_matches_hand_update() {
        let mut opt = NesterovSgd::new(0.9, 0.0, 1);
        let mut p = vec![1.0];
        opt.step(&mut p, &[2.0], 0.1);
        // v = 2, p = 1 - 0.1 * (2 + 0.9 * 2)
        assert!((p[0] - (1.0 - 0.38)).abs() < 1e-15);
        opt.step(&mut p, &[1.0], 0.1);
        // v = 0.9 * 2 + 1 = 2.8, p -= 0.1 * (1 + 0.9 * 2.8)
        assert!((p[0] - (0.62 - 0.352)).abs() < 1e-15);
    }

    #[test]
    fn config_validation_and_modes() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        for m in LossMode::ALL {
            assert_eq!(m.as_str().parse::<LossMode>().unwrap(), m);
        }
        assert!("median".parse::<LossMode>().is_err());
    }
}
