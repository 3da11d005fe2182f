//! Metrics log, results table and prediction output formats.

use std::fmt::Write as _;
use std::path::Path;

use super::{AblationRow, EpochRecord};
use crate::error::{Error, Result};
use crate::util::atomic_write;

/// Formats a float for the text outputs; non-finite values become `nan`.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "nan".into()
    }
}

pub fn metrics_jsonl(records: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Input(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_metrics_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    atomic_write(path, metrics_jsonl(records)?.as_bytes())?;
    Ok(())
}

pub fn results_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,srcc,plcc,rmse\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.variant, num(r.srcc), num(r.plcc), num(r.rmse));
    }
    out
}

pub fn write_results_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    atomic_write(path, results_csv(rows).as_bytes())?;
    Ok(())
}

/// One `image_id<TAB>score` line per prediction.
pub fn predictions_tsv(predictions: &[(String, f64)]) -> String {
    predictions.iter().map(|(id, s)| format!("{id}\t{}\n", num(*s))).collect()
}
