//! Overlap metrics between a predicted mask and ground truth.

use serde::Serialize;

use crate::error::Result;
use crate::volume::{ensure_same_dims, Mask3D};

/// Voxel-level confusion counts of a prediction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Dice coefficient `2TP / (2TP + FP + FN)`; two empty masks agree perfectly (1.0).
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 1.0;
        }
        (2 * self.tp) as f64 / denom as f64
    }

    /// Jaccard index expressed through Dice: `Dice / (2 - Dice)`.
    pub fn jaccard(&self) -> f64 {
        let d = self.dice();
        d / (2.0 - d)
    }

    /// Matthews correlation coefficient; 0.0 when any factor under the root vanishes.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fn_) * (tp + fp) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }

    /// `TP / (TP + FP)`; NaN (the undefined sentinel) when nothing was predicted.
    pub fn precision(&self) -> f64 {
        let denom = self.tp + self.fp;
        if denom == 0 {
            return f64::NAN;
        }
        self.tp as f64 / denom as f64
    }
}

pub fn confusion(pred: &Mask3D, truth: &Mask3D) -> Result<ConfusionCounts> {
    ensure_same_dims(pred.dims(), truth.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data().iter()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// One row of a segmentation metric report.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub case_id: String,
    pub dice: f64,
    pub jaccard: f64,
    pub mcc: f64,
    pub precision: f64,
}

impl MetricRow {
    pub fn from_counts(case_id: impl Into<String>, c: &ConfusionCounts) -> Self {
        Self {
            case_id: case_id.into(),
            dice: c.dice(),
            jaccard: c.jaccard(),
            mcc: c.mcc(),
            precision: c.precision(),
        }
    }
}

pub const METRIC_CSV_HEADER: &str = "case_id,dice,jaccard,mcc,precision";

pub fn format_metric_rows(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRIC_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.case_id,
            crate::table::fmt_f64(r.dice),
            crate::table::fmt_f64(r.jaccard),
            crate::table::fmt_f64(r.mcc),
            crate::table::fmt_f64(r.precision)
        ));
    }
    out
}
