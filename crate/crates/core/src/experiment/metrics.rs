use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::trainer::MetricRow;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "step,return_mean,entropy,policy_loss,value_loss,approx_kl,clip_frac,wall_s";

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    step: u64,
    return_mean: f64,
    entropy: f64,
    policy_loss: f64,
    value_loss: f64,
    approx_kl: f64,
    clip_frac: f64,
    wall_s: f64,
}

impl From<&MetricRow> for CsvRow {
    fn from(r: &MetricRow) -> Self {
        Self {
            step: r.global_step,
            return_mean: r.episodic_return_mean,
            entropy: r.policy_entropy,
            policy_loss: r.policy_loss,
            value_loss: r.value_loss,
            approx_kl: r.approx_kl,
            clip_frac: r.clip_fraction,
            wall_s: r.wall_time_s,
        }
    }
}

impl From<CsvRow> for MetricRow {
    fn from(r: CsvRow) -> Self {
        Self {
            global_step: r.step,
            episodic_return_mean: r.return_mean,
            policy_entropy: r.entropy,
            policy_loss: r.policy_loss,
            value_loss: r.value_loss,
            approx_kl: r.approx_kl,
            clip_fraction: r.clip_frac,
            wall_time_s: r.wall_s,
        }
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

/// Streams metric rows to a CSV file, flushing after every row.
pub struct MetricWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    last_step: Option<u64>,
}

impl MetricWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
        let inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        Ok(Self {
            path,
            inner,
            last_step: None,
        })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.global_step <= s) {
            return Err(Error::Usage(format!(
                "{}: global step {} does not increase",
                self.path.display(),
                row.global_step
            )));
        }
        self.last_step = Some(row.global_step);
        self.inner
            .serialize(CsvRow::from(row))
            .map_err(|e| csv_error(&self.path, e))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let mut w = MetricWriter::create(path)?;
    rows.iter().try_for_each(|r| w.write(r))
}

/// Reads a metrics file; errors name the file and the offending line.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header, want `{CSV_HEADER}`"),
        });
    }
    let mut rows: Vec<MetricRow> = Vec::new();
    for rec in reader.deserialize::<CsvRow>() {
        let row: MetricRow = rec.map_err(|e| csv_error(path, e))?.into();
        if rows.last().is_some_and(|prev| row.global_step <= prev.global_step) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: rows.len() + 2,
                message: format!("step {} does not increase", row.global_step),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}
