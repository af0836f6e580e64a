//! Grid reports laid out like a results table grouped by scheme.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::ModelConfig;
use crate::metrics::{AggregateMetrics, MeanSd};
use crate::nn::CellKind;
use crate::splits::Scheme;

pub const TABLE_COLUMNS: [&str; 9] = [
    "Model",
    "Classification",
    "Modalities",
    "Representation",
    "Fusion",
    "Accuracy",
    "Precision",
    "Recall",
    "F1",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: ModelConfig,
    pub metrics: AggregateMetrics,
    pub folds: usize,
    pub skipped: usize,
    /// Highest mean accuracy within its (scheme, cell) group.
    pub best: bool,
}

impl ReportRow {
    fn table_cells(&self) -> [String; 9] {
        let c = &self.config;
        [
            c.cell.label().to_string(),
            c.scheme.classification().to_string(),
            modality_list(c),
            c.representation.label().to_string(),
            c.fusion.to_string(),
            self.metrics.accuracy.to_string(),
            self.metrics.precision.to_string(),
            self.metrics.recall.to_string(),
            self.metrics.f1.to_string(),
        ]
    }
}

fn modality_list(c: &ModelConfig) -> String {
    c.modalities
        .iter()
        .map(|m| m.name())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidConfig(format!("unknown report format `{s}`"))),
        }
    }
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
        }
    }
}

impl GridReport {
    /// Builds a report and marks the best row of every (scheme, cell) group;
    /// ties keep the earliest row.
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        let mut best: BTreeMap<(Scheme, CellKind), usize> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            let key = (row.config.scheme, row.config.cell);
            match best.get(&key) {
                Some(&j) if rows[j].metrics.accuracy.mean >= row.metrics.accuracy.mean => {}
                _ => {
                    best.insert(key, i);
                }
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.best = best.get(&(row.config.scheme, row.config.cell)) == Some(&i);
        }
        Self { rows }
    }

    fn schemes_in_order(&self) -> Vec<Scheme> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.config.scheme) {
                out.push(r.config.scheme);
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::Empty("report rows"));
        }
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => Ok(self.to_markdown()),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Scheme"];
        header.extend(TABLE_COLUMNS);
        header.extend(["Folds", "Skipped", "Best"]);
        let to_err = |e: csv::Error| Error::parse("report.csv", e);
        w.write_record(&header).map_err(to_err)?;
        for row in &self.rows {
            let mut rec = vec![row.config.scheme.key().to_string()];
            rec.extend(row.table_cells());
            rec.push(row.folds.to_string());
            rec.push(row.skipped.to_string());
            rec.push(if row.best { "*".into() } else { String::new() });
            w.write_record(&rec).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse("report.csv", e))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// One table with an italic section row per scheme; best rows in bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", TABLE_COLUMNS.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(TABLE_COLUMNS.len()));
        let blanks = " |".repeat(TABLE_COLUMNS.len() - 1);
        for scheme in self.schemes_in_order() {
            let _ = writeln!(out, "| *{}* |{blanks}", scheme.title());
            for row in self.rows.iter().filter(|r| r.config.scheme == scheme) {
                let mut cells = row.table_cells();
                if row.best {
                    cells[0] = format!("**{}**", cells[0]);
                }
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
        }
        out
    }
}

/// A row recovered from `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub scheme: String,
    pub cells: Vec<String>,
    pub metrics: Vec<MeanSd>,
    pub best: bool,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ParsedRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let to_err = |e: csv::Error| Error::parse("report.csv", e);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(to_err)?;
        if rec.len() < TABLE_COLUMNS.len() + 1 {
            return Err(Error::parse("report.csv", "short row"));
        }
        let cells: Vec<String> = rec.iter().skip(1).take(TABLE_COLUMNS.len()).map(String::from).collect();
        let metrics = cells[5..9]
            .iter()
            .map(|c| MeanSd::parse(c).ok_or_else(|| Error::parse("report.csv", format!("bad cell `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(ParsedRow {
            scheme: rec[0].to_string(),
            cells,
            metrics,
            best: rec.get(TABLE_COLUMNS.len() + 3) == Some("*"),
        });
    }
    Ok(out)
}
