//! Feature significance: z-score scaling and Welch's ANOVA across the task groupings.

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::table::{fmt_f64, FeatureTable, TaskLabels};

/// Significance level used to flag features in reports.
pub const SIGNIFICANCE_LEVEL: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    /// Welch F statistic (asymptotically F distributed).
    pub statistic: f64,
    pub df1: f64,
    /// Welch–Satterthwaite denominator degrees of freedom.
    pub df2: f64,
    pub p_value: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Survival function of the F distribution through the regularized incomplete beta.
pub fn f_survival(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

/// Welch's heteroscedastic one-way ANOVA.
pub fn welch_anova<G: AsRef<[f64]>>(groups: &[G]) -> Result<WelchResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::invalid(format!("Welch's ANOVA needs at least 2 groups, got {k}")));
    }
    let mut stats = Vec::with_capacity(k);
    for (i, g) in groups.iter().enumerate() {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(Error::invalid(format!("group {i} has {} values, need at least 2", g.len())));
        }
        let (m, v) = mean_var(g);
        if !(v > 0.0) {
            return Err(Error::ZeroVariance(format!("group {i}")));
        }
        stats.push((g.len() as f64, m, v));
    }
    let weights: Vec<f64> = stats.iter().map(|&(n, _, v)| n / v).collect();
    let w_sum: f64 = weights.iter().sum();
    let grand = stats.iter().zip(&weights).map(|(&(_, m, _), w)| w * m).sum::<f64>() / w_sum;
    let kf = k as f64;
    let between = stats
        .iter()
        .zip(&weights)
        .map(|(&(_, m, _), w)| w * (m - grand).powi(2))
        .sum::<f64>()
        / (kf - 1.0);
    let lambda = stats
        .iter()
        .zip(&weights)
        .map(|(&(n, _, _), w)| (1.0 - w / w_sum).powi(2) / (n - 1.0))
        .sum::<f64>();
    let denom = 1.0 + 2.0 * (kf - 2.0) / (kf * kf - 1.0) * lambda;
    let statistic = between / denom;
    let df1 = kf - 1.0;
    let df2 = (kf * kf - 1.0) / (3.0 * lambda);
    Ok(WelchResult {
        statistic,
        df1,
        df2,
        p_value: f_survival(statistic, df1, df2),
    })
}

/// Standardizes to mean 0 and sample standard deviation 1.
pub fn zscore(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::invalid("z-score needs at least two values"));
    }
    let (m, v) = mean_var(xs);
    if !(v > 0.0) {
        return Err(Error::ZeroVariance("z-score column".into()));
    }
    let sd = v.sqrt();
    Ok(xs.iter().map(|x| (x - m) / sd).collect())
}

/// A labelled partition of the cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Grouping {
    CovidCt,
    CovidNat,
    Severity,
}

impl Grouping {
    pub const ALL: [Grouping; 3] = [Grouping::CovidCt, Grouping::CovidNat, Grouping::Severity];

    pub fn key(&self) -> &'static str {
        match self {
            Grouping::CovidCt => "ct",
            Grouping::CovidNat => "nat",
            Grouping::Severity => "sev",
        }
    }

    pub fn groups(&self) -> usize {
        match self {
            Grouping::Severity => 3,
            _ => 2,
        }
    }

    pub fn group_of(&self, l: &TaskLabels) -> usize {
        match self {
            Grouping::CovidCt => l.covid_ct as usize,
            Grouping::CovidNat => l.covid_nat as usize,
            Grouping::Severity => l.severity.index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSignificance {
    pub feature: String,
    /// One entry per grouping in [`Grouping::ALL`] order; `None` when skipped.
    pub results: Vec<Option<WelchResult>>,
    /// Cases excluded because the feature value was undefined.
    pub excluded: usize,
}

impl FeatureSignificance {
    pub fn result(&self, g: Grouping) -> Option<&WelchResult> {
        let i = Grouping::ALL.iter().position(|x| *x == g).expect("known grouping");
        self.results[i].as_ref()
    }

    pub fn significant(&self, g: Grouping) -> bool {
        self.result(g).is_some_and(|r| r.p_value < SIGNIFICANCE_LEVEL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceReport {
    pub rows: Vec<FeatureSignificance>,
    pub notes: Vec<String>,
}

pub const SIGNIFICANCE_CSV_HEADER: &str =
    "feature,stat_ct,df2_ct,p_ct,stat_nat,df2_nat,p_nat,stat_sev,df2_sev,p_sev";

impl SignificanceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SIGNIFICANCE_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.feature);
            for r in &row.results {
                match r {
                    Some(r) => out.push_str(&format!(
                        ",{},{},{}",
                        fmt_f64(r.statistic),
                        fmt_f64(r.df2),
                        fmt_f64(r.p_value)
                    )),
                    None => out.push_str(",NaN,NaN,NaN"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Fraction of features significant for `g`, over features that were tested.
    pub fn significant_fraction(&self, g: Grouping) -> f64 {
        let tested = self.rows.iter().filter(|r| r.result(g).is_some()).count();
        if tested == 0 {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.significant(g)).count() as f64 / tested as f64
    }

    /// Rows ordered by ascending severity p-value, untested rows last.
    pub fn ranked(&self, g: Grouping) -> Vec<&FeatureSignificance> {
        let mut rows: Vec<&FeatureSignificance> = self.rows.iter().collect();
        let key = |r: &FeatureSignificance| r.result(g).map_or(f64::INFINITY, |w| w.p_value);
        rows.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| a.feature.cmp(&b.feature)));
        rows
    }
}

/// Welch's ANOVA per feature and grouping. Undefined values are excluded per
/// feature; degenerate groupings are skipped and noted.
pub fn significance_table(table: &FeatureTable, features: Option<&[String]>) -> Result<SignificanceReport> {
    let columns: Vec<usize> = match features {
        Some(names) => names
            .iter()
            .map(|n| {
                table
                    .column_index(n)
                    .ok_or_else(|| Error::invalid(format!("feature {n:?} not in table")))
            })
            .collect::<Result<_>>()?,
        None => (0..table.names.len()).collect(),
    };
    let mut report = SignificanceReport {
        rows: Vec::with_capacity(columns.len()),
        notes: Vec::new(),
    };
    for &c in &columns {
        let name = &table.names[c];
        let mut excluded = 0;
        let mut results = Vec::with_capacity(3);
        for g in Grouping::ALL {
            let mut groups = vec![Vec::new(); g.groups()];
            for (row, lab) in table.rows.iter().zip(&table.labels) {
                let v = row[c];
                if v.is_finite() {
                    groups[g.group_of(lab)].push(v);
                } else if g == Grouping::CovidCt {
                    excluded += 1;
                }
            }
            match welch_anova(&groups) {
                Ok(r) => results.push(Some(r)),
                Err(e) => {
                    report.notes.push(format!("{name} [{}]: skipped ({e})", g.key()));
                    results.push(None);
                }
            }
        }
        if excluded > 0 {
            report.notes.push(format!("{name}: {excluded} undefined values excluded"));
        }
        report.rows.push(FeatureSignificance {
            feature: name.clone(),
            results,
            excluded,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_groups_give_zero_statistic() {
        let g = [1.0, 2.5, 3.0, 4.5];
        let r = welch_anova(&[g, g]).unwrap();
        assert!(r.statistic.abs() < 1e-10);
        assert!((r.p_value - 1.0).abs() < 1e-10);
        assert_eq!(r.df1, 1.0);
    }

    #[test]
    fn three_group_closed_form() {
        // means 2, 3, 4; variances 1; F = 18/7, df2 = 4, p = (7/16)^2
        let r = welch_anova(&[[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(r.df1, 2.0);
        assert!((r.statistic - 18.0 / 7.0).abs() < 1e-12);
        assert!((r.df2 - 4.0).abs() < 1e-12);
        assert!((r.p_value - 49.0 / 256.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_anova(&[[1.0, 2.0]]).is_err());
        assert!(matches!(
            welch_anova(&[vec![1.0, 2.0], vec![3.0, 3.0]]),
            Err(Error::ZeroVariance(g)) if g == "group 1"
        ));
        assert!(welch_anova(&[vec![1.0], vec![3.0, 4.0]]).is_err());
    }

    #[test]
    fn zscore_cases() {
        assert_eq!(zscore(&[1.0, 2.0, 3.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(zscore(&[2.0, 2.0, 2.0]).is_err());
        let x = [0.3, -1.2, 4.4, 2.0, 0.0];
        let z = zscore(&x).unwrap();
        let zz = zscore(&z).unwrap();
        assert!(z.iter().zip(&zz).all(|(a, b)| (a - b).abs() < 1e-12));
        let affine: Vec<f64> = x.iter().map(|v| 3.5 * v - 7.0).collect();
        let za = zscore(&affine).unwrap();
        assert!(z.iter().zip(&za).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
