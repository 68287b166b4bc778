use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::audit::GenfnAuditReport;
use super::config::ExperimentKind;
use super::scaling::{RowFlag, ScalingResult, ScalingRow};
use crate::error::{Error, Result};
use crate::spectrum::SpectrumReport;

pub const CSV_HEADER: [&str; 6] = ["experiment", "model_id", "size", "replica", "statistic", "flag"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// Result of any experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentOutput {
    Scaling(ScalingResult),
    Spectrum(Box<SpectrumReport>),
    Audit(GenfnAuditReport),
}

impl ExperimentOutput {
    pub fn experiment(&self) -> ExperimentKind {
        match self {
            ExperimentOutput::Scaling(r) => r.experiment,
            ExperimentOutput::Spectrum(_) => ExperimentKind::Spectrum,
            ExperimentOutput::Audit(_) => ExperimentKind::GenfnAudit,
        }
    }

    /// Violated invariants; a nonempty list maps to exit code 2.
    pub fn invariant_breaches(&self) -> Vec<String> {
        match self {
            ExperimentOutput::Scaling(r) => {
                let recomputed = super::scaling::summarize(&r.rows);
                if recomputed == r.summary {
                    Vec::new()
                } else {
                    vec!["summary does not match the emitted rows".to_string()]
                }
            }
            ExperimentOutput::Spectrum(r) => r.invariant_breaches(),
            ExperimentOutput::Audit(r) => r.invariant_breaches(),
        }
    }

    /// Write the output under `dir`, returning the files written.
    pub fn emit(&self, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = self.experiment().name();
        if format == Format::Json {
            let path = dir.join(format!("{stem}.json"));
            let mut text = match self {
                ExperimentOutput::Scaling(r) => serde_json::to_string_pretty(r),
                ExperimentOutput::Spectrum(r) => serde_json::to_string_pretty(r),
                ExperimentOutput::Audit(r) => serde_json::to_string_pretty(r),
            }
            .map_err(|e| Error::io(&path, e))?;
            text.push('\n');
            write_file(&path, text.as_bytes())?;
            return Ok(vec![path]);
        }
        match self {
            ExperimentOutput::Scaling(r) => {
                let path = dir.join(format!("{stem}.csv"));
                write_file(&path, &scaling_csv(r)?)?;
                Ok(vec![path])
            }
            ExperimentOutput::Audit(r) => {
                let path = dir.join(format!("{stem}.csv"));
                let rows: Vec<Vec<String>> = r
                    .cases
                    .iter()
                    .map(|c| {
                        vec![
                            stem.to_string(),
                            r.model_id.clone(),
                            c.n.to_string(),
                            c.case.to_string(),
                            c.worst_lemma.to_string(),
                            if c.failed { "fail" } else { "ok" }.to_string(),
                        ]
                    })
                    .collect();
                write_file(&path, &to_csv(&CSV_HEADER, &rows)?)?;
                Ok(vec![path])
            }
            ExperimentOutput::Spectrum(r) => {
                let lambda_path = dir.join("spectrum_lambda.csv");
                let rows: Vec<Vec<String>> = r
                    .lambda_grid
                    .iter()
                    .map(|(l, v)| vec![l.to_string(), v.to_string()])
                    .collect();
                write_file(&lambda_path, &to_csv(&["lambda", "Lambda"], &rows)?)?;
                let rate_path = dir.join("spectrum_rate.csv");
                let rows: Vec<Vec<String>> = r
                    .rate_grid
                    .iter()
                    .map(|(x, j)| vec![x.to_string(), j.map_or_else(|| "inf".to_string(), |j| j.to_string())])
                    .collect();
                write_file(&rate_path, &to_csv(&["x", "J"], &rows)?)?;
                Ok(vec![lambda_path, rate_path])
            }
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))
}

/// CSV bytes of a scaling result; a result without rows gives the header alone.
pub fn scaling_csv(result: &ScalingResult) -> Result<Vec<u8>> {
    let name = result.experiment.name();
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                name.to_string(),
                result.model_id.clone(),
                r.size.to_string(),
                r.replica.to_string(),
                r.statistic.to_string(),
                r.flag.as_str().to_string(),
            ]
        })
        .collect();
    to_csv(&CSV_HEADER, &rows)
}

/// Parse rows back from [`scaling_csv`] output.
pub fn read_scaling_csv(bytes: &[u8]) -> Result<Vec<ScalingRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let bad = |msg: String| Error::Config(format!("malformed scaling csv: {msg}"));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| bad(format!("missing column {k}")));
        rows.push(ScalingRow {
            size: field(2)?.parse().map_err(|e| bad(format!("{e}")))?,
            replica: field(3)?.parse().map_err(|e| bad(format!("{e}")))?,
            statistic: field(4)?.parse().map_err(|e| bad(format!("{e}")))?,
            flag: RowFlag::parse(field(5)?).ok_or_else(|| bad("unknown flag".into()))?,
        });
    }
    Ok(rows)
}
