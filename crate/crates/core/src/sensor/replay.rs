//! JSON Lines replay files and label sidecars.
//!
//! One sample per line: `{"t_ms":…, "src":…, "kind":…, <payload fields>}`.
//! Blank lines are skipped but still counted for error line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{LabelPoint, SensorError, SensorSample, SessionStream};

/// Reads a replay file. Timestamps must be non-decreasing.
pub fn load_replay(path: impl AsRef<Path>) -> Result<SessionStream, SensorError> {
    let file = File::open(path)?;
    parse_replay(BufReader::new(file))
}

pub fn parse_replay(reader: impl BufRead) -> Result<SessionStream, SensorError> {
    let mut samples: Vec<SensorSample> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: SensorSample = serde_json::from_str(&line).map_err(|e| SensorError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if let Some(prev) = samples.last() {
            if sample.t < prev.t {
                return Err(SensorError::Order { line: line_no });
            }
        }
        samples.push(sample);
    }
    Ok(SessionStream::new(samples))
}

pub fn write_replay<'a>(
    mut out: impl Write,
    samples: impl IntoIterator<Item = &'a SensorSample>,
) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_labels(mut out: impl Write, labels: &[LabelPoint]) -> std::io::Result<()> {
    for l in labels {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_labels(reader: impl BufRead) -> Result<Vec<LabelPoint>, SensorError> {
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        labels.push(serde_json::from_str(&line).map_err(|e| SensorError::Parse {
            line: idx + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(labels)
}
