//! Classification metrics for the task heads.

use serde::Serialize;

/// Rank-based AUC: the fraction of (positive, negative) pairs ordered
/// correctly, ties counted one half. NaN when either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    // sort negatives once and count with binary search
    let mut sorted = neg.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut wins = 0.0;
    for p in &pos {
        let below = sorted.partition_point(|n| n < p);
        let not_above = sorted.partition_point(|n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (pos.len() * neg.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Binary AUC, or the macro one-vs-rest mean for multiclass.
    pub auc: f64,
    /// Standard deviation of the per-class one-vs-rest AUCs (0 for binary).
    pub auc_spread: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p.is_nan() || r.is_nan() || p + r == 0.0 {
        f64::NAN
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics from per-sample class probabilities (`probs[i][c]`) and labels.
///
/// Binary problems score the positive class (index 1). Multiclass problems
/// report macro-averaged precision/recall/F1 and one-vs-rest AUC mean with
/// the per-class spread.
pub fn classification_metrics(probs: &[Vec<f64>], labels: &[usize]) -> ClassMetrics {
    let n = labels.len();
    let classes = probs.first().map_or(0, |r| r.len());
    let predicted: Vec<usize> = probs
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect();
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    let accuracy = ratio(correct, n);

    let per_class = |c: usize| {
        let tp = predicted.iter().zip(labels).filter(|(&p, &l)| p == c && l == c).count();
        let pred_c = predicted.iter().filter(|&&p| p == c).count();
        let true_c = labels.iter().filter(|&&l| l == c).count();
        let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
        let is_c: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        (ratio(tp, pred_c), ratio(tp, true_c), auc(&scores, &is_c))
    };

    if classes == 2 {
        let (p, r, a) = per_class(1);
        return ClassMetrics {
            accuracy,
            precision: p,
            recall: r,
            f1: f1(p, r),
            auc: a,
            auc_spread: 0.0,
        };
    }
    let stats: Vec<(f64, f64, f64)> = (0..classes).map(per_class).collect();
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let precision = mean(stats.iter().map(|s| s.0).collect());
    let recall = mean(stats.iter().map(|s| s.1).collect());
    let f1s = mean(stats.iter().map(|s| f1(s.0, s.1)).collect());
    let aucs: Vec<f64> = stats.iter().map(|s| s.2).collect();
    let auc_mean = mean(aucs.clone());
    let spread = (aucs.iter().map(|a| (a - auc_mean).powi(2)).sum::<f64>() / aucs.len() as f64).sqrt();
    ClassMetrics {
        accuracy,
        precision,
        recall,
        f1: f1s,
        auc: auc_mean,
        auc_spread: spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), 1.0);
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), 0.5);
        assert!((auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]) - 0.75).abs() < 1e-12);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_nan());
    }

    #[test]
    fn auc_matches_pair_enumeration() {
        let scores = [0.3, 0.3, 0.9, 0.1, 0.5, 0.5, 0.7, 0.2];
        let labels = [true, false, true, false, true, false, false, true];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((auc(&scores, &labels) - wins / pairs).abs() < 1e-15);
    }

    #[test]
    fn binary_and_multiclass_metrics() {
        let probs = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4], vec![0.3, 0.7]];
        let m = classification_metrics(&probs, &[0, 1, 1, 1]);
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.precision, 1.0);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.auc, 1.0);

        let probs3 = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
        let m3 = classification_metrics(&probs3, &[0, 1, 2]);
        assert_eq!(m3.accuracy, 1.0);
        assert_eq!(m3.auc, 1.0);
        assert_eq!(m3.auc_spread, 0.0);
    }
}
