use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub update: usize,
    pub split: String,
    pub loss: Option<f64>,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    pub grad_norm: Option<f64>,
    pub skipped_steps: usize,
}

pub const CSV_HEADER: &str = "update,split,loss,lr,bleu,grad_norm,skipped_steps";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.update,
            self.split,
            opt(self.loss),
            self.lr,
            opt(self.bleu),
            opt(self.grad_norm),
            self.skipped_steps
        )
    }
}

struct Sink {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    paths: (PathBuf, PathBuf),
}

/// Training log kept in memory and, optionally, mirrored to
/// `metrics.jsonl` / `metrics.csv`.
#[derive(Default)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
    sink: Option<Sink>,
}

impl MetricsLog {
    pub fn memory() -> Self {
        Self::default()
    }

    /// Creates (truncating) `dir/metrics.jsonl` and `dir/metrics.csv`.
    pub fn to_dir(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let jp = dir.join("metrics.jsonl");
        let cp = dir.join("metrics.csv");
        let jsonl = BufWriter::new(File::create(&jp).map_err(|e| Error::io(&jp, e))?);
        let mut csv = BufWriter::new(File::create(&cp).map_err(|e| Error::io(&cp, e))?);
        writeln!(csv, "{CSV_HEADER}").map_err(|e| Error::io(&cp, e))?;
        Ok(MetricsLog {
            records: Vec::new(),
            sink: Some(Sink {
                jsonl,
                csv,
                paths: (jp, cp),
            }),
        })
    }

    pub fn push(&mut self, rec: MetricsRecord) -> Result<()> {
        if let Some(s) = &mut self.sink {
            let line = serde_json::to_string(&rec).map_err(|e| Error::Data(e.to_string()))?;
            writeln!(s.jsonl, "{line}").map_err(|e| Error::io(&s.paths.0, e))?;
            writeln!(s.csv, "{}", rec.csv_row()).map_err(|e| Error::io(&s.paths.1, e))?;
            s.jsonl.flush().map_err(|e| Error::io(&s.paths.0, e))?;
            s.csv.flush().map_err(|e| Error::io(&s.paths.1, e))?;
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn split(&self, split: &str) -> impl Iterator<Item = &MetricsRecord> {
        let split = split.to_string();
        self.records.iter().filter(move |r| r.split == split)
    }
}
