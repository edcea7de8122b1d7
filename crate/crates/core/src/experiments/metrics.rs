use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::diagnostics::{AttnDistRow, GradConflictRecord, VicRow};
use crate::error::{Error, Result};
use crate::eval::EvalResult;
use crate::regimes::TrainLogRow;

pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CONFLICT_FILE: &str = "conflict.csv";
pub const VIC_FILE: &str = "vic.csv";
pub const ATTN_FILE: &str = "attn.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const GRID_FILE: &str = "grid.csv";

pub const CONFLICT_HEADER: [&str; 5] = ["run_id", "epoch", "block", "batch", "cosine"];
pub const VIC_HEADER: [&str; 5] = ["run_id", "block", "variance", "invariance", "covariance"];
pub const ATTN_HEADER: [&str; 4] = ["run_id", "block", "head", "mean_distance_px"];
pub const RESULTS_HEADER: [&str; 5] = ["run_id", "regime", "probe", "seed", "top1"];

fn stage_columns(n_stages: usize) -> impl Iterator<Item = String> {
    (1..=n_stages).map(|s| format!("lr_stage{s}"))
}

pub fn train_log_header(n_stages: usize) -> Vec<String> {
    ["run_id", "phase", "epoch", "step", "loss_total", "loss_mim", "loss_cl"]
        .iter()
        .map(|s| s.to_string())
        .chain(stage_columns(n_stages))
        .collect()
}

pub fn grid_header(n_stages: usize) -> Vec<String> {
    std::iter::once("run_id".to_string())
        .chain(stage_columns(n_stages))
        .chain(["linear_top1".to_string(), "finetune_top1".to_string()])
        .collect()
}

/// A number in shortest round-trip form; non-finite values are missing.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// A missing value is an empty field.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Header plus rows of one metrics file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: ToString>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(ToString::to_string).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Table) {
        assert_eq!(self.header, other.header, "tables must share a header");
        self.rows.extend(other.rows);
    }

    fn encode(&self, with_header: bool) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        if with_header {
            w.write_record(&self.header).map_err(csv_err)?;
        }
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
    }

    pub fn to_csv(&self) -> String {
        String::from_utf8(self.encode(true).expect("in-memory csv")).expect("utf-8 fields")
    }

    /// Appends the rows to `path`, writing the header first when the file
    /// is new. An existing file must carry the same header.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let existing = path.exists() && std::fs::metadata(path)?.len() > 0;
        if existing {
            let mut first = String::new();
            BufReader::new(std::fs::File::open(path)?).read_line(&mut first)?;
            let found = first.trim_end_matches(['\n', '\r']);
            if found != self.header.join(",") {
                return Err(Error::Config(format!(
                    "{} has header {found:?}, expected {:?}",
                    path.display(),
                    self.header.join(",")
                )));
            }
        }
        let bytes = self.encode(!existing)?;
        OpenOptions::new().create(true).append(true).open(path)?.write_all(&bytes)?;
        Ok(())
    }
}

pub fn train_log_table(n_stages: usize, run_id: &str, rows: &[TrainLogRow]) -> Table {
    let mut t = Table::new(&train_log_header(n_stages));
    for r in rows {
        let mut row = vec![
            run_id.to_string(),
            r.phase.clone(),
            r.epoch.to_string(),
            r.step.to_string(),
            num(r.loss_total),
            opt(r.loss_mim),
            opt(r.loss_cl),
        ];
        row.extend((0..n_stages).map(|s| opt(r.lr_stage.get(s).copied())));
        t.push(row);
    }
    t
}

/// Conflict rows as `(epoch, record)`.
pub fn conflict_table(run_id: &str, rows: &[(usize, GradConflictRecord)]) -> Table {
    let mut t = Table::new(&CONFLICT_HEADER);
    for (epoch, r) in rows {
        t.push(vec![
            run_id.to_string(),
            epoch.to_string(),
            r.block.to_string(),
            r.batch.to_string(),
            num(r.cosine),
        ]);
    }
    t
}

pub fn vic_table(run_id: &str, rows: &[VicRow]) -> Table {
    let mut t = Table::new(&VIC_HEADER);
    for r in rows {
        t.push(vec![
            run_id.to_string(),
            r.block.to_string(),
            num(r.variance),
            num(r.invariance),
            num(r.covariance),
        ]);
    }
    t
}

pub fn attn_table(run_id: &str, rows: &[AttnDistRow]) -> Table {
    let mut t = Table::new(&ATTN_HEADER);
    for r in rows {
        t.push(vec![run_id.to_string(), r.block.to_string(), r.head.to_string(), num(r.mean_distance_px)]);
    }
    t
}

pub fn results_table(run_id: &str, rows: &[EvalResult]) -> Table {
    let mut t = Table::new(&RESULTS_HEADER);
    for r in rows {
        t.push(vec![
            run_id.to_string(),
            r.regime.clone(),
            r.probe.clone(),
            r.seed.to_string(),
            num(r.top1),
        ]);
    }
    t
}
