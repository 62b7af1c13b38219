use serde::{Deserialize, Serialize};

use super::weights::TaskWeights;
use crate::error::{Error, Result};

/// Floor applied to probabilities inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// `-sum_i y_i ln(max(p_i, eps))`.
pub fn cross_entropy(probs: &[f64], onehot: &[f64]) -> f64 {
    probs
        .iter()
        .zip(onehot)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.max(LOG_CLAMP).ln())
        .sum()
}

/// Predicted class distributions and targets of one task over a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutputs {
    pub probs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

impl TaskOutputs {
    pub fn new(probs: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self> {
        if probs.len() != targets.len() || probs.is_empty() {
            return Err(Error::invalid("probabilities and targets must be non-empty and aligned"));
        }
        for (row, &t) in probs.iter().zip(&targets) {
            let s: f64 = row.iter().sum();
            if t >= row.len() || row.iter().any(|p| !(0.0..=1.0).contains(p)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("invalid probability row {row:?} for target {t}")));
            }
        }
        Ok(Self { probs, targets })
    }

    /// Batch-mean cross-entropy and the number of clamped log evaluations.
    pub fn mean_cross_entropy(&self) -> (f64, usize) {
        let mut clamped = 0;
        let mut total = 0.0;
        for (row, &t) in self.probs.iter().zip(&self.targets) {
            let p = row[t];
            if p < LOG_CLAMP {
                clamped += 1;
            }
            total -= p.max(LOG_CLAMP).ln();
        }
        (total / self.probs.len() as f64, clamped)
    }
}

/// Per-task outputs for one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub tasks: Vec<TaskOutputs>,
}

/// Per-task batch-mean losses with clamp diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub losses: Vec<f64>,
    pub clamped: usize,
}

impl TaskBatch {
    pub fn task_losses(&self) -> TaskLosses {
        let mut losses = Vec::with_capacity(self.tasks.len());
        let mut clamped = 0;
        for t in &self.tasks {
            let (l, c) = t.mean_cross_entropy();
            losses.push(l);
            clamped += c;
        }
        TaskLosses { losses, clamped }
    }
}

/// Weighted sum of per-task losses.
pub fn weighted_loss(losses: &[f64], weights: &TaskWeights) -> Result<f64> {
    if losses.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} task losses vs {} weights",
            losses.len(),
            weights.len()
        )));
    }
    Ok(losses.iter().zip(weights.as_slice()).map(|(l, w)| l * w).sum())
}

/// Random-weighted total loss: `sum_j w_j * CE_j`.
pub fn total_loss(batch: &TaskBatch, weights: &TaskWeights) -> Result<f64> {
    weighted_loss(&batch.task_losses().losses, weights)
}

pub fn mean_of(losses: &[f64]) -> f64 {
    losses.iter().sum::<f64>() / losses.len() as f64
}

pub fn mean_loss(batch: &TaskBatch) -> f64 {
    mean_of(&batch.task_losses().losses)
}

/// `sum_j exp(-s_j) L_j + s_j` with `s_j` the task log-variances.
pub fn uncertainty_of(losses: &[f64], log_vars: &[f64]) -> Result<f64> {
    if losses.len() != log_vars.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} task losses vs {} log-variances",
            losses.len(),
            log_vars.len()
        )));
    }
    Ok(losses.iter().zip(log_vars).map(|(l, s)| (-s).exp() * l + s).sum())
}

pub fn uncertainty_loss(batch: &TaskBatch, log_vars: &[f64]) -> Result<f64> {
    uncertainty_of(&batch.task_losses().losses, log_vars)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], &[0.0, 1.0]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((cross_entropy(&[0.25, 0.75], &[0.0, 1.0]) + 0.75f64.ln()).abs() < 1e-12);
        // clamped, finite
        assert!((cross_entropy(&[1.0, 0.0], &[0.0, 1.0]) + LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_arithmetic() {
        let losses = [0.3, 0.6, 0.9];
        let eq = TaskWeights::uniform(3);
        assert!((weighted_loss(&losses, &eq).unwrap() - 0.6).abs() < 1e-12);
        assert!((mean_of(&losses) - 0.6).abs() < 1e-12);
        let vertex = TaskWeights::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(weighted_loss(&losses, &vertex).unwrap(), 0.3);
        let two = TaskWeights::new(vec![0.7, 0.3]).unwrap();
        assert!((weighted_loss(&[1.0, 2.0], &two).unwrap() - 1.3).abs() < 1e-12);
        assert!(weighted_loss(&[1.0, 2.0], &eq).is_err());

        assert!((uncertainty_of(&losses, &[0.0; 3]).unwrap() - 1.8).abs() < 1e-12);
        let v = uncertainty_of(&[2.0], &[std::f64::consts::LN_2]).unwrap();
        assert!((v - (1.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn batch_losses_and_clamp_count() {
        let t0 = TaskOutputs::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]], vec![0, 1]).unwrap();
        let batch = TaskBatch { tasks: vec![t0] };
        let l = batch.task_losses();
        assert_eq!(l.clamped, 1);
        assert!(l.losses[0].is_finite());
        assert!(TaskOutputs::new(vec![vec![0.7, 0.7]], vec![0]).is_err());
    }
}
