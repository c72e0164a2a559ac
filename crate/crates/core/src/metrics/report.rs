use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Metrics confined to the unit interval.
pub const BOUNDED_METRICS: &[&str] = &[
    "jaccard",
    "hamming",
    "diversity",
    "cosine",
    "bleu",
    "rouge_l",
    "attribute_recall",
];

/// Named metric values plus the counts and configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn new(run: &str) -> Self {
        Self {
            run: run.to_string(),
            metrics: BTreeMap::new(),
            counts: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn insert(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn count(&mut self, name: &str, value: usize) -> &mut Self {
        self.counts.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        for (name, &v) in &self.metrics {
            if !v.is_finite() {
                return Err(MetricError::Report(format!("metric {name} is not finite")));
            }
            if BOUNDED_METRICS.contains(&name.as_str()) && !(0.0..=1.0).contains(&v) {
                return Err(MetricError::Report(format!("metric {name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MetricError> {
        self.validate()?;
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| MetricError::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        let report: Self = serde_json::from_str(text).map_err(|e| MetricError::Report(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    /// Header and a single data row: run, metrics..., counts...
    pub fn to_csv(&self) -> Result<String, MetricError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["run".to_string()];
        header.extend(self.metrics.keys().cloned());
        header.extend(self.counts.keys().map(|k| format!("n_{k}")));
        let mut row = vec![self.run.clone()];
        row.extend(self.metrics.values().map(|v| format!("{v}")));
        row.extend(self.counts.values().map(|v| v.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        w.write_record(&row).map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| MetricError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> MetricError {
    MetricError::Report(e.to_string())
}

/// Metric-by-run comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub runs: Vec<String>,
    pub metrics: Vec<String>,
    /// `values[m][r]` for metric `m`, run `r`.
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn merge_reports(reports: &[MetricReport]) -> Result<ReportTable, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert(r.run.as_str()) {
            return Err(MetricError::Report(format!("duplicate run name {}", r.run)));
        }
    }
    let metrics: Vec<String> = reports
        .iter()
        .flat_map(|r| r.metrics.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let values = metrics
        .iter()
        .map(|m| reports.iter().map(|r| r.metrics.get(m).copied()).collect())
        .collect();
    Ok(ReportTable {
        runs: reports.iter().map(|r| r.run.clone()).collect(),
        metrics,
        values,
    })
}

impl ReportTable {
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut widths: Vec<usize> = std::iter::once(self.metrics.iter().map(String::len).max().unwrap_or(0).max(6))
            .chain(self.runs.iter().map(|r| r.len().max(8)))
            .collect();
        for row in &self.values {
            for (i, v) in row.iter().enumerate() {
                widths[i + 1] = widths[i + 1].max(cell(*v).len());
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<w$}", "metric", w = widths[0]);
        for (i, r) in self.runs.iter().enumerate() {
            let _ = write!(out, "  {:>w$}", r, w = widths[i + 1]);
        }
        out.push('\n');
        let total: usize = widths.iter().sum::<usize>() + 2 * self.runs.len();
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for (m, row) in self.metrics.iter().zip(&self.values) {
            let _ = write!(out, "{:<w$}", m, w = widths[0]);
            for (i, v) in row.iter().enumerate() {
                let _ = write!(out, "  {:>w$}", cell(*v), w = widths[i + 1]);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, MetricError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.runs.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (m, row) in self.metrics.iter().zip(&self.values) {
            let mut rec = vec![m.clone()];
            rec.extend(row.iter().map(|v| v.map_or(String::new(), |v| format!("{v}"))));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| MetricError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
