//! CSV tables.

use std::path::Path;

use dudo_core::train::{MetricRecord, SummaryRow};

use crate::error::{CliError, CliResult};

pub const METRICS_HEADER: [&str; 5] = ["condition", "accel", "seed", "psnr_db", "ssim"];
pub const LOSS_HEADER: [&str; 2] = ["step", "loss"];
pub const SUMMARY_HEADER: [&str; 9] =
    ["condition", "accel", "n", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "zf_psnr_mean", "zf_ssim_mean"];
pub const ABLATION_HEADER: [&str; 10] =
    ["axis", "variant", "condition", "accel", "n_cases", "psnr_db", "ssim", "zf_psnr_db", "params", "stream_hash"];

/// Shortest round-trip decimal; infinities print as `inf` and `-inf`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        other => CliError::format(path, format!("{other:?}")),
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> CliResult<()> {
    write_rows(
        path,
        &METRICS_HEADER,
        records.iter().map(|r| {
            [r.condition.as_str().to_string(), num(r.accel), r.seed.to_string(), num(r.psnr_db), num(r.ssim)]
        }),
    )
}

pub fn write_losses(path: &Path, losses: &[f64]) -> CliResult<()> {
    write_rows(path, &LOSS_HEADER, losses.iter().enumerate().map(|(i, l)| [i.to_string(), num(*l)]))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    write_rows(
        path,
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            [
                r.condition.as_str().to_string(),
                num(r.accel),
                r.n.to_string(),
                num(r.psnr_mean),
                num(r.psnr_std),
                num(r.ssim_mean),
                num(r.ssim_std),
                num(r.zf_psnr_mean),
                num(r.zf_ssim_mean),
            ]
        }),
    )
}

/// One row of an ablation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub axis: String,
    pub variant: String,
    pub summary: SummaryRow,
    pub params: usize,
    pub stream_hash: String,
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> CliResult<()> {
    write_rows(
        path,
        &ABLATION_HEADER,
        rows.iter().map(|r| {
            [
                r.axis.clone(),
                r.variant.clone(),
                r.summary.condition.as_str().to_string(),
                num(r.summary.accel),
                r.summary.n.to_string(),
                num(r.summary.psnr_mean),
                num(r.summary.ssim_mean),
                num(r.summary.zf_psnr_mean),
                r.params.to_string(),
                r.stream_hash.clone(),
            ]
        }),
    )
}

/// Reads a CSV back as a header and string rows.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e.to_string()))?;
    let header = r.headers().map_err(|e| CliError::format(path, e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| CliError::format(path, e.to_string()))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
