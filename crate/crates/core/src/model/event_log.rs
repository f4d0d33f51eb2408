//! Line-delimited event logs.
//!
//! A log is a header record, one record per event, and an optional usage
//! record written when the episode closes with non-zero token counts.
//! Every line is flushed as written so a crashed episode leaves a readable
//! prefix behind.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Event, TokenUsage, Trajectory};
use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLogHeader {
    pub instance_id: String,
    pub attempt_index: u32,
    pub temperature: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord {
    Header(EventLogHeader),
    Event(Event),
    Usage(TokenUsage),
}

fn encode(record: &LogRecord) -> Result<Vec<u8>> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    Ok(line)
}

pub fn serialize_event_log(trajectory: &Trajectory, attempt_index: u32) -> Result<Vec<u8>> {
    let mut out = encode(&LogRecord::Header(EventLogHeader {
        instance_id: trajectory.instance_id.clone(),
        attempt_index,
        temperature: trajectory.temperature,
    }))?;
    for event in &trajectory.events {
        out.extend(encode(&LogRecord::Event(event.clone()))?);
    }
    if !trajectory.token_usage.is_zero() {
        out.extend(encode(&LogRecord::Usage(trajectory.token_usage))?);
    }
    Ok(out)
}

/// Parses a log back into its header and trajectory. A final line without
/// a terminating newline that fails to parse is treated as a torn write
/// and dropped.
pub fn deserialize_event_log(bytes: &[u8]) -> Result<(EventLogHeader, Trajectory)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Validation(format!("event log is not utf-8: {e}")))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut header = None;
    let mut events = Vec::new();
    let mut usage = TokenUsage::default();
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if n + 1 == lines.len() && !complete => break,
            Err(e) => return Err(Error::Validation(format!("event log line {}: {e}", n + 1))),
        };
        match record {
            LogRecord::Header(h) if header.is_none() && events.is_empty() => header = Some(h),
            LogRecord::Header(_) => {
                return Err(Error::Validation(format!(
                    "event log line {}: unexpected header",
                    n + 1
                )))
            }
            LogRecord::Event(e) => events.push(e),
            LogRecord::Usage(u) => usage = u,
        }
    }
    let header = header.ok_or_else(|| Error::Validation("event log has no header".into()))?;
    let trajectory = Trajectory {
        instance_id: header.instance_id.clone(),
        assistant_turns: Trajectory::count_turns(&events),
        events,
        temperature: header.temperature,
        token_usage: usage,
    };
    Ok((header, trajectory))
}

pub fn read_event_log(path: &Path) -> Result<(EventLogHeader, Trajectory)> {
    let bytes = std::fs::read(path).at(path)?;
    deserialize_event_log(&bytes)
}

/// Append-only writer used while an episode is live. Exclusive per attempt.
pub struct EventLogWriter {
    file: File,
    path: std::path::PathBuf,
}

impl EventLogWriter {
    pub fn create(path: &Path, header: EventLogHeader) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .at(path)?;
        let mut writer = EventLogWriter {
            file,
            path: path.to_path_buf(),
        };
        writer.write(&LogRecord::Header(header))?;
        Ok(writer)
    }

    fn write(&mut self, record: &LogRecord) -> Result<()> {
        let line = encode(record)?;
        self.file.write_all(&line).at(&self.path)?;
        self.file.flush().at(&self.path)
    }

    pub fn append(&mut self, event: &Event) -> Result<()> {
        self.write(&LogRecord::Event(event.clone()))
    }

    pub fn finish(mut self, usage: TokenUsage) -> Result<()> {
        if !usage.is_zero() {
            self.write(&LogRecord::Usage(usage))?;
        }
        self.file.sync_data().at(&self.path)
    }
}

/// Counts event records in a log without materializing them.
pub fn count_event_lines(path: &Path) -> Result<usize> {
    let file = File::open(path).at(path)?;
    let mut n = 0;
    for line in BufReader::new(file).lines() {
        if line.at(path)?.contains("\"record\":\"event\"") {
            n += 1;
        }
    }
    Ok(n)
}
