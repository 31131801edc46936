//! Versioned JSON and CSV serialization of reports.
//!
//! JSON documents are wrapped as `{"schema_version": 1, "kind": ..., "data": ...}`.
//! CSV files start with a `#schema_version=1 kind=...` comment line followed by
//! a header row.

use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsd::Distribution;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    data: T,
}

pub fn write_json<T: Serialize>(kind: &str, value: &T, writer: impl Write) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        data: value,
    };
    serde_json::to_writer_pretty(writer, &env)?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    let mut buf = Vec::new();
    write_json(kind, value, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Reads a document written by [`write_json`], checking version and kind.
pub fn read_json<T: DeserializeOwned>(kind: &str, reader: impl Read) -> Result<T> {
    let env: Envelope<T> = serde_json::from_reader(reader)?;
    check_header(env.schema_version, &env.kind, kind)?;
    Ok(env.data)
}

fn check_header(version: u32, found: &str, expected: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema version {version} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    if found != expected {
        return Err(Error::Config(format!("document kind `{found}`, expected `{expected}`")));
    }
    Ok(())
}

pub fn write_csv<T: Serialize>(kind: &str, rows: &[T], mut writer: impl Write) -> Result<()> {
    writeln!(writer, "#schema_version={SCHEMA_VERSION} kind={kind}")?;
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(kind: &str, reader: impl Read) -> Result<Vec<T>> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (version, found) = parse_csv_header(first.trim_end())
        .ok_or_else(|| Error::Config(format!("missing schema line, found `{}`", first.trim_end())))?;
    check_header(version, found, kind)?;
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn parse_csv_header(line: &str) -> Option<(u32, &str)> {
    let rest = line.strip_prefix("#schema_version=")?;
    let (version, kind) = rest.split_once(" kind=")?;
    Some((version.parse().ok()?, kind))
}

#[derive(Debug, Serialize, Deserialize)]
struct StateProb {
    state: usize,
    prob: f64,
}

/// `state,prob` rows for states `1..=N`.
pub fn write_distribution_csv(d: &Distribution, writer: impl Write) -> Result<()> {
    let rows: Vec<StateProb> = d.iter().map(|(state, prob)| StateProb { state, prob }).collect();
    write_csv("distribution", &rows, writer)
}

pub fn read_distribution_csv(reader: impl Read) -> Result<Distribution> {
    let rows: Vec<StateProb> = read_csv("distribution", reader)?;
    let mut probs = vec![0.0; rows.iter().map(|r| r.state).max().unwrap_or(0)];
    for r in rows {
        if r.state == 0 {
            return Err(Error::InvalidDistribution("state 0 is absorbing".into()));
        }
        probs[r.state - 1] = r.prob;
    }
    Distribution::new(probs)
}
