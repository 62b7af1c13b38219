//! Per-case feature table with task labels, persisted as CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Severity grade of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    /// Control / suspected.
    Control = 0,
    /// Mild / regular.
    Mild = 1,
    /// Severe / critically ill.
    Severe = 2,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Control, Severity::Mild, Severity::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// The three task labels carried by each case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLabels {
    pub covid_ct: bool,
    pub covid_nat: bool,
    pub severity: Severity,
}

impl TaskLabels {
    /// Class index per task, in task order (ct, nat, severity).
    pub fn class_indices(&self) -> [usize; 3] {
        [
            self.covid_ct as usize,
            self.covid_nat as usize,
            self.severity.index(),
        ]
    }
}

/// Formats a float for CSV output; NaN marks an undefined value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
}

pub const LABEL_COLUMNS: [&str; 3] = ["covid_ct", "covid_nat", "severity"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub case_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<TaskLabels>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            case_ids: Vec::new(),
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, case_id: impl Into<String>, row: Vec<f64>, labels: TaskLabels) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} values, table has {} columns",
                row.len(),
                self.names.len()
            )));
        }
        self.case_ids.push(case_id.into());
        self.rows.push(row);
        self.labels.push(labels);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Restricts the table to the given row indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            case_ids: idx.iter().map(|&i| self.case_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        for l in LABEL_COLUMNS {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for ((id, row), lab) in self.case_ids.iter().zip(&self.rows).zip(&self.labels) {
            out.push_str(id);
            for v in row {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push_str(&format!(
                ",{},{},{}\n",
                lab.covid_ct as u8,
                lab.covid_nat as u8,
                lab.severity.index()
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::invalid("feature table is empty"))?
            .split(',')
            .collect();
        if header.len() < 4 || header[0] != "case_id" || header[header.len() - 3..] != LABEL_COLUMNS {
            return Err(Error::invalid(
                "feature table header must be case_id, features..., covid_ct, covid_nat, severity",
            ));
        }
        let names: Vec<String> = header[1..header.len() - 3].iter().map(|s| s.to_string()).collect();
        let mut table = FeatureTable::new(names);
        for (lineno, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(Error::invalid(format!(
                    "row {} has {} cells, expected {}",
                    lineno + 2,
                    cells.len(),
                    header.len()
                )));
            }
            let n = cells.len();
            let row = cells[1..n - 3].iter().map(|c| parse_f64(c)).collect::<Result<Vec<_>>>()?;
            let flag = |s: &str| match s.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::invalid(format!("bad binary label {other:?}"))),
            };
            let severity = cells[n - 1]
                .trim()
                .parse::<usize>()
                .ok()
                .and_then(Severity::from_index)
                .ok_or_else(|| Error::invalid(format!("bad severity label {:?}", cells[n - 1])))?;
            let labels = TaskLabels {
                covid_ct: flag(cells[n - 3])?,
                covid_nat: flag(cells[n - 2])?,
                severity,
            };
            table.push(cells[0], row, labels)?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_nan_sentinel() {
        let mut t = FeatureTable::new(vec!["a".into(), "b".into()]);
        let lab = TaskLabels {
            covid_ct: true,
            covid_nat: false,
            severity: Severity::Mild,
        };
        t.push("c0", vec![1.5, f64::NAN], lab).unwrap();
        t.push("c1", vec![-2.25e-7, 3.0], lab).unwrap();
        let back = FeatureTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.names, t.names);
        assert_eq!(back.labels, t.labels);
        assert!(back.rows[0][1].is_nan());
        assert_eq!(back.rows[1], t.rows[1]);
        assert!(t.push("bad", vec![1.0], lab).is_err());
    }
}
