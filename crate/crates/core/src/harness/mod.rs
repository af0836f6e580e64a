//! Per-participant folds, configuration grids and result persistence.
//!
//! A fold is one participant's own experiment, with windows split randomly
//! into train/validation/test. A configuration runs one fold per
//! participant and aggregates fold metrics as mean ± sample SD.
//!
//! Output directory layout:
//!
//! ```text
//! folds.jsonl              one FoldRecord per line, appended as folds finish
//! report.csv / report.md   rendered GridReport
//! checkpoints/cNNN_<id>.ckpt
//! ```
//!
//! When `folds.jsonl` already exists, folds recorded there are reused
//! rather than retrained, so interrupted grids resume where they stopped.

pub mod config;
pub mod fold;
pub mod report;

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fusion::ModelConfig;
use crate::metrics::{aggregate, AggregateMetrics};

pub use config::GridSpec;
pub use fold::{
    evaluate_fold, fold_seed, prepare_fold, run_fold, train_fold, FoldData, FoldRecord, FoldResult,
    SkippedFold, TrainedFold,
};
pub use report::{parse_report_csv, GridReport, ReportFormat, ReportRow};

pub const FOLDS_FILE: &str = "folds.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigResult {
    pub config: ModelConfig,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
    pub aggregate: AggregateMetrics,
}

impl ConfigResult {
    /// Aggregate the records of one configuration in participant order.
    pub fn from_records(config: &ModelConfig, records: &[FoldRecord]) -> Result<Self> {
        let mut folds = Vec::new();
        let mut skipped = Vec::new();
        for r in records {
            match r {
                FoldRecord::Completed(f) => folds.push(f.clone()),
                FoldRecord::Skipped(s) => skipped.push(s.clone()),
            }
        }
        if folds.is_empty() {
            return Err(Error::AllFoldsSkipped);
        }
        folds.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
        skipped.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
        let metrics: Vec<_> = folds.iter().map(|f| f.metrics).collect();
        Ok(Self {
            config: config.clone(),
            aggregate: aggregate(&metrics)?,
            folds,
            skipped,
        })
    }

    pub fn report_row(&self) -> ReportRow {
        ReportRow {
            config: self.config.clone(),
            metrics: self.aggregate,
            folds: self.folds.len(),
            skipped: self.skipped.len(),
            best: false,
        }
    }
}

/// Run every participant's fold for `cfg` without touching the filesystem.
pub fn run_config(corpus: &Corpus, cfg: &ModelConfig) -> Result<ConfigResult> {
    let records = corpus
        .participant_ids()
        .map(|pid| run_fold(corpus, pid, cfg).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    ConfigResult::from_records(cfg, &records)
}

fn record_key(cfg: &ModelConfig, participant_id: &str) -> String {
    format!(
        "{}\u{1f}{participant_id}",
        serde_json::to_string(cfg).expect("config serializes")
    )
}

pub fn read_fold_records(path: impl AsRef<Path>) -> Result<Vec<FoldRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

struct Persistence {
    folds_path: PathBuf,
    checkpoint_dir: PathBuf,
    done: HashMap<String, FoldRecord>,
}

impl Persistence {
    fn open(out: &Path) -> Result<Self> {
        let checkpoint_dir = out.join(CHECKPOINT_DIR);
        fs::create_dir_all(&checkpoint_dir).map_err(|e| Error::io(&checkpoint_dir, e))?;
        let folds_path = out.join(FOLDS_FILE);
        let mut done = HashMap::new();
        if folds_path.exists() {
            for r in read_fold_records(&folds_path)? {
                done.insert(record_key(r.config(), r.participant_id()), r);
            }
        }
        Ok(Self {
            folds_path,
            checkpoint_dir,
            done,
        })
    }

    fn append(&self, record: &FoldRecord) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.folds_path)
            .map_err(|e| Error::io(&self.folds_path, e))?;
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&self.folds_path, e))
    }
}

/// Run every configuration over every participant. With `out`, fold records
/// and checkpoints are persisted as they finish and earlier records are
/// reused; the rendered reports are written at the end.
pub fn run_grid(corpus: &Corpus, configs: &[ModelConfig], out: Option<&Path>) -> Result<GridReport> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("grid has no configurations".into()));
    }
    let persistence = out.map(Persistence::open).transpose()?;
    let mut rows = Vec::with_capacity(configs.len());
    for (ci, cfg) in configs.iter().enumerate() {
        let mut records = Vec::new();
        for pid in corpus.participant_ids() {
            let key = record_key(cfg, pid);
            if let Some(r) = persistence.as_ref().and_then(|p| p.done.get(&key)) {
                records.push(r.clone());
                continue;
            }
            let (record, checkpoint) = run_fold(corpus, pid, cfg)?;
            if let Some(p) = &persistence {
                if let Some(ck) = &checkpoint {
                    ck.save(p.checkpoint_dir.join(format!("c{ci:03}_{pid}.ckpt")))?;
                }
                p.append(&record)?;
            }
            records.push(record);
        }
        rows.push(ConfigResult::from_records(cfg, &records)?.report_row());
    }
    let report = GridReport::new(rows);
    if let Some(out) = out {
        write_reports(&report, out)?;
    }
    Ok(report)
}

pub fn write_reports(report: &GridReport, out: &Path) -> Result<()> {
    for format in [ReportFormat::Csv, ReportFormat::Markdown] {
        let path = out.join(format.file_name());
        fs::write(&path, report.render(format)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Rebuild a report from `folds.jsonl`, with configurations in order of
/// first appearance.
pub fn report_from_dir(dir: impl AsRef<Path>) -> Result<GridReport> {
    let records = read_fold_records(dir.as_ref().join(FOLDS_FILE))?;
    let mut order: Vec<ModelConfig> = Vec::new();
    for r in &records {
        if !order.contains(r.config()) {
            order.push(r.config().clone());
        }
    }
    let rows = order
        .iter()
        .map(|cfg| {
            let mine: Vec<FoldRecord> = records.iter().filter(|r| r.config() == cfg).cloned().collect();
            ConfigResult::from_records(cfg, &mine).map(|c| c.report_row())
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Empty("fold records"));
    }
    Ok(GridReport::new(rows))
}
