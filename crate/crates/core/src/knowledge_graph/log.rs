//! Append-only mutation log.
//!
//! Each record is one line `<n> <json>\n`, where `<n>` is the decimal byte
//! length of the JSON payload. A batch is its mutation records followed by
//! `{"op":"commit","count":k}`. Batches without a commit record (a write
//! torn at the end of the file) are discarded and truncated on open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entity, GraphError, Result, Triple, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogRecord {
    Entity {
        entity: Entity,
    },
    Triple {
        triple: Triple,
    },
    SetAttribute {
        entity_id: String,
        key: String,
        value: Value,
    },
    Commit {
        count: usize,
    },
}

#[derive(Debug)]
pub struct MutationLog {
    file: File,
}

fn encode(record: &LogRecord, out: &mut Vec<u8>) {
    let json = serde_json::to_vec(record).expect("log records serialize");
    out.extend_from_slice(json.len().to_string().as_bytes());
    out.push(b' ');
    out.extend_from_slice(&json);
    out.push(b'\n');
}

/// Splits `bytes` into committed batches. Returns the batches and the byte
/// offset just past the last commit record.
pub(crate) fn decode(bytes: &[u8]) -> Result<(Vec<Vec<LogRecord>>, u64)> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut pos = 0usize;
    let mut committed = 0usize;
    while pos < bytes.len() {
        let Some(space) = bytes[pos..].iter().position(|b| *b == b' ') else {
            break;
        };
        let len_text = std::str::from_utf8(&bytes[pos..pos + space]).ok();
        let Some(len) = len_text.and_then(|t| t.parse::<usize>().ok()) else {
            return Err(GraphError::CorruptLog {
                offset: pos as u64,
                message: "invalid length prefix".into(),
            });
        };
        let start = pos + space + 1;
        let end = start + len;
        if end >= bytes.len() {
            break;
        }
        if bytes[end] != b'\n' {
            return Err(GraphError::CorruptLog {
                offset: pos as u64,
                message: "record not terminated by a newline".into(),
            });
        }
        let record: LogRecord = serde_json::from_slice(&bytes[start..end]).map_err(|e| GraphError::CorruptLog {
            offset: pos as u64,
            message: e.to_string(),
        })?;
        pos = end + 1;
        match record {
            LogRecord::Commit { count } => {
                if count != current.len() {
                    return Err(GraphError::CorruptLog {
                        offset: pos as u64,
                        message: format!("commit of {count} records closes a batch of {}", current.len()),
                    });
                }
                batches.push(std::mem::take(&mut current));
                committed = pos;
            }
            other => current.push(other),
        }
    }
    Ok((batches, committed as u64))
}

impl MutationLog {
    /// Opens (or creates) the log at `path`, returning the committed batches.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Vec<LogRecord>>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (batches, committed) = decode(&bytes)?;
        if committed < bytes.len() as u64 {
            file.set_len(committed)?;
        }
        file.seek(SeekFrom::Start(committed))?;
        Ok((Self { file }, batches))
    }

    pub fn append_batch(&mut self, records: &[LogRecord]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            encode(r, &mut buf);
        }
        encode(&LogRecord::Commit { count: records.len() }, &mut buf);
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(())
    }
}
