//! JSONL replay log: one line per environment step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::types::{Action, Event, MatchState};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub step: u32,
    /// FNV-1a digest of the state *after* the step, as 16 hex digits.
    pub digest: String,
    pub home_actions: Vec<usize>,
    pub away_actions: Vec<usize>,
    pub events: Vec<Event>,
}

impl ReplayRecord {
    pub fn new(next: &MatchState, home: &[Action], away: &[Action], events: &[Event]) -> Self {
        Self {
            step: next.step,
            digest: format!("{:016x}", next.digest()),
            home_actions: home.iter().map(|a| a.index()).collect(),
            away_actions: away.iter().map(|a| a.index()).collect(),
            events: events.to_vec(),
        }
    }
}

pub fn write_replay<W: Write>(mut w: W, records: &[ReplayRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| crate::error::Error::Serde(e.to_string()))?;
    }
    Ok(())
}

pub fn read_replay<R: BufRead>(r: R) -> Result<Vec<ReplayRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| crate::error::Error::Serde(e.to_string()))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
