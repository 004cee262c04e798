//! Serialized pipeline output.
//!
//! A report has a one-field header holding the wall-clock timestamp and a
//! body that is a pure function of the inputs and flags. Two runs with the
//! same inputs produce byte-identical bodies.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::SimilarityMatrix;
use crate::stats::{CorrelationResult, Histogram, UTestResult};

pub const TOOL_NAME: &str = "xling";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub generated_at_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

/// Labeled rows of numbers; `None` prints as an empty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub row_label: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn new(name: &str, row_label: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            row_label: row_label.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: &str, values: Vec<Option<f64>>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(TableRow {
            label: label.to_string(),
            values,
        });
    }

    pub fn from_matrix(name: &str, matrix: &SimilarityMatrix) -> Self {
        let mut t = Table {
            name: name.to_string(),
            row_label: String::new(),
            columns: matrix.labels.clone(),
            rows: Vec::new(),
        };
        for (i, label) in matrix.labels.iter().enumerate() {
            t.push(label, (0..matrix.size()).map(|j| matrix.value(i, j)).collect());
        }
        t
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let j = self.column_index(column)?;
        self.row(row)?.values[j]
    }

    /// Tab-separated rendering with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.row_label);
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.label);
            for v in &r.values {
                out.push('\t');
                if let Some(v) = v {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatOutcome {
    Correlation(CorrelationResult),
    MannWhitney(UTestResult),
    Error { message: String },
}

/// One test result, labeled with what was tested and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub method: String,
    pub metric: String,
    pub outcome: StatOutcome,
}

impl Statistic {
    pub fn correlation(&self) -> Option<&CorrelationResult> {
        match &self.outcome {
            StatOutcome::Correlation(c) => Some(c),
            _ => None,
        }
    }

    pub fn u_test(&self) -> Option<&UTestResult> {
        match &self.outcome {
            StatOutcome::MannWhitney(u) => Some(u),
            _ => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self.outcome, StatOutcome::Error { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedHistogram {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub pipeline: String,
    pub tool: String,
    pub tool_version: String,
    pub inputs_fingerprint: String,
    pub flags: BTreeMap<String, String>,
    pub tables: Vec<Table>,
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub histograms: Vec<NamedHistogram>,
    /// Raw samples behind the statistics, keyed by name (used for plots).
    #[serde(default)]
    pub series: BTreeMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub header: ReportHeader,
    pub body: ReportBody,
}

/// SHA-256 over the serialized inputs and flags.
pub fn fingerprint<T: Serialize>(inputs: &T, flags: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(inputs).expect("inputs serialize"));
    h.update(b"\0");
    h.update(serde_json::to_vec(flags).expect("flags serialize"));
    hex::encode(h.finalize())
}

impl AnalysisReport {
    pub fn new(pipeline: &str, inputs_fingerprint: String, flags: BTreeMap<String, String>) -> Self {
        let generated_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            header: ReportHeader { generated_at_unix },
            body: ReportBody {
                pipeline: pipeline.to_string(),
                tool: TOOL_NAME.to_string(),
                tool_version: TOOL_VERSION.to_string(),
                inputs_fingerprint,
                flags,
                tables: Vec::new(),
                statistics: Vec::new(),
                histograms: Vec::new(),
                series: BTreeMap::new(),
                warnings: Vec::new(),
            },
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.body.tables.iter().find(|t| t.name == name)
    }

    pub fn statistic(&self, name: &str, subject: Option<&str>) -> Option<&Statistic> {
        self.body
            .statistics
            .iter()
            .find(|s| s.name == name && s.subject.as_deref() == subject)
    }

    pub fn has_errors(&self) -> bool {
        self.body.statistics.iter().any(Statistic::is_error)
    }

    /// Canonical body serialization; this is what determinism is defined over.
    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&self.body).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Writes `report.json` and one `<table>.tsv` per table into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("report.json"))?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        for t in &self.body.tables {
            fs::write(dir.join(format!("{}.tsv", sanitize(&t.name))), t.to_tsv())?;
        }
        Ok(())
    }
}

/// File-name-safe version of a label.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
