use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use dds_core::pipeline::RunCounts;
use dds_core::SessionOutput;
use serde::Serialize;

pub const SESSION_FILE: &str = "session.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const TRANSITIONS_FILE: &str = "transitions.jsonl";
pub const FEATURES_FILE: &str = "features.jsonl";
pub const ALERTS_FILE: &str = "alerts.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub session_id: String,
    pub mode: String,
    pub start_time: String,
    pub counts: RunCounts,
    /// Emitted logs, relative to the output directory.
    pub outputs: Vec<&'static str>,
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes a file through a buffered writer callback.
pub fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    write_with(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Writes the detection logs shared by simulate and replay.
pub fn write_run(dir: &Path, out: &SessionOutput) -> Result<()> {
    write_jsonl(&dir.join(TRANSITIONS_FILE), &out.transitions)?;
    write_jsonl(&dir.join(FEATURES_FILE), &out.features)?;
    write_jsonl(
        &dir.join(ALERTS_FILE),
        out.alerts.iter().map(|a| a.log_line()),
    )?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).context("serializing report")?;
    text.push('\n');
    fs::write(dir.join(REPORT_FILE), &text).context("writing report")?;
    print!("{text}");
    Ok(())
}
