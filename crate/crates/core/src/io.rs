//! Readers and writers for the toolkit's file formats.
//!
//! * Event file: CSV with header `ts,token,user,ip,content,chunk_seq`, or
//!   JSON-lines with identical field names (detected by content).
//! * Label file: CSV `token,label` with label `honest` or `shared`.
//! * Stats file: CSV
//!   `window_start,window_end,token,user,content,distinct_ips,requests`.
//! * Flags file: CSV `day,token,user,rule,observed,threshold`.
//!
//! Event readers never abort on a bad record: each record comes back as
//! `Ok(event)` or `Err(malformed)` with its zero-based index, so callers
//! can skip and count.

use std::io::{BufReader, Read, Write};
use std::net::IpAddr;

use thiserror::Error;

use crate::access::{AccessEvent, LabeledToken, MalformedEvent, TokenStats};
use crate::detect::FlagRecord;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type EventRecords = Vec<Result<AccessEvent, MalformedEvent>>;

fn check_event(ev: AccessEvent, index: u64) -> Result<AccessEvent, MalformedEvent> {
    if ev.ip.parse::<IpAddr>().is_err() {
        return Err(MalformedEvent {
            index,
            reason: format!("not an IP literal: {}", ev.ip),
        });
    }
    Ok(ev)
}

/// Reads an event stream, auto-detecting CSV vs JSON-lines from the first
/// byte of content.
pub fn read_events<R: Read>(reader: R) -> Result<EventRecords, IoError> {
    let mut buf = BufReader::new(reader);
    let mut text = String::new();
    buf.read_to_string(&mut text)?;
    let jsonl = text.trim_start().starts_with('{');
    if jsonl {
        Ok(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str::<AccessEvent>(line)
                    .map_err(|e| MalformedEvent {
                        index: i as u64,
                        reason: e.to_string(),
                    })
                    .and_then(|ev| check_event(ev, i as u64))
            })
            .collect())
    } else {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        Ok(reader
            .deserialize::<AccessEvent>()
            .enumerate()
            .map(|(i, rec)| {
                rec.map_err(|e| MalformedEvent {
                    index: i as u64,
                    reason: e.to_string(),
                })
                .and_then(|ev| check_event(ev, i as u64))
            })
            .collect())
    }
}

pub fn write_events_csv<W: Write>(writer: W, events: &[AccessEvent]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    for ev in events {
        w.serialize(ev)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(writer: W, labels: &[LabeledToken]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    for l in labels {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<LabeledToken>, IoError> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().collect::<Result<_, _>>().map_err(Into::into)
}

pub fn write_stats_csv<W: Write>(writer: W, stats: &[TokenStats]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats_csv<R: Read>(reader: R) -> Result<Vec<TokenStats>, IoError> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().collect::<Result<_, _>>().map_err(Into::into)
}

pub fn write_flags_csv<W: Write>(writer: W, flags: &[FlagRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    for f in flags {
        w.serialize(f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flags_csv<R: Read>(reader: R) -> Result<Vec<FlagRecord>, IoError> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().collect::<Result<_, _>>().map_err(Into::into)
}
