//! JSON-lines ingestion and emission for events, profiles, truth files and
//! sample sets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EventKind, EventLog, FeatureVector, Horizon, Membership, Profile, RawEvent, Sample, SampleSet, Timestamp};
use crate::error::{Error, Result};
use crate::sim::UserTruth;

pub const SAMPLE_SET_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Login,
    Pay,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    user_id: String,
    ts: Timestamp,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amount: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthLine {
    user_id: String,
    churn_ts: Option<Timestamp>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleSetHeader {
    version: u64,
    dim: usize,
    ref_time: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    user_id: String,
    set: Membership,
    features: Vec<(u32, f64)>,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json_line<W: Write, T: Serialize>(w: &mut W, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Iterate the non-blank lines of a file with 1-based line numbers.
pub(crate) fn lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::io(path, e))),
        }))
}

pub(crate) fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e.to_string()))
}

/// Read a JSON-lines event file. Events may appear in any order; the
/// returned log is sorted. Events outside `horizon`, pay events without a
/// nonnegative amount and login events carrying an amount are rejected with
/// the offending line number.
pub fn read_event_log(path: impl AsRef<Path>, horizon: Horizon) -> Result<EventLog> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    for item in lines(path)? {
        let (line_no, line) = item?;
        let rec: EventLine = parse_line(path, line_no, &line)?;
        let kind = match (rec.kind, rec.amount) {
            (KindTag::Login, None) => EventKind::Login,
            (KindTag::Login, Some(_)) => {
                return Err(Error::parse(path, line_no, "login event must not carry an amount"))
            }
            (KindTag::Pay, Some(amount)) => EventKind::Pay { amount },
            (KindTag::Pay, None) => return Err(Error::parse(path, line_no, "pay event requires an amount")),
        };
        super::check_event(&horizon, rec.ts, &kind).map_err(|m| Error::parse(path, line_no, m))?;
        raw.push(RawEvent {
            user_id: rec.user_id,
            ts: rec.ts,
            kind,
        });
    }
    EventLog::from_raw(horizon, raw)
}

pub fn write_event_log(log: &EventLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for e in log.events() {
        let (kind, amount) = match e.kind {
            EventKind::Login => (KindTag::Login, None),
            EventKind::Pay { amount } => (KindTag::Pay, Some(amount)),
        };
        let line = EventLine {
            user_id: log.user_id(e.user).to_string(),
            ts: e.ts,
            kind,
            amount,
        };
        write_json_line(&mut w, path, &line)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_profiles(path: impl AsRef<Path>) -> Result<Vec<Profile>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for item in lines(path)? {
        let (line_no, line) = item?;
        out.push(parse_line(path, line_no, &line)?);
    }
    Ok(out)
}

pub fn write_profiles(profiles: &[Profile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for p in profiles {
        write_json_line(&mut w, path, p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Truth records carry only the churn timestamp; engagement is not persisted.
pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<(String, Option<Timestamp>)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for item in lines(path)? {
        let (line_no, line) = item?;
        let rec: TruthLine = parse_line(path, line_no, &line)?;
        out.push((rec.user_id, rec.churn_ts));
    }
    Ok(out)
}

pub fn write_truth(truths: &[UserTruth], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for t in truths {
        let line = TruthLine {
            user_id: t.user_id.clone(),
            churn_ts: t.churn_ts,
        };
        write_json_line(&mut w, path, &line)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sample_set(set: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    set.validate()?;
    let path = path.as_ref();
    let mut w = create(path)?;
    let header = SampleSetHeader {
        version: SAMPLE_SET_VERSION,
        dim: set.dim,
        ref_time: set.ref_time,
    };
    write_json_line(&mut w, path, &header)?;
    for (membership, s) in set.iter() {
        let line = SampleLine {
            user_id: s.user_id.clone(),
            set: membership,
            features: s.features.entries().to_vec(),
        };
        write_json_line(&mut w, path, &line)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sample_set(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let mut it = lines(path)?;
    let (line_no, header_line) = it
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing sample-set header"))??;
    let version = serde_json::from_str::<serde_json::Value>(&header_line)
        .ok()
        .and_then(|v| v.get("version").and_then(|v| v.as_u64()));
    match version {
        Some(SAMPLE_SET_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: SAMPLE_SET_VERSION,
            })
        }
        None => return Err(Error::parse(path, line_no, "header lacks a version tag")),
    }
    let header: SampleSetHeader = parse_line(path, line_no, &header_line)?;
    let mut set = SampleSet::empty(header.dim, header.ref_time);
    for item in it {
        let (line_no, line) = item?;
        let rec: SampleLine = parse_line(path, line_no, &line)?;
        let features =
            FeatureVector::new(header.dim, rec.features).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let sample = Sample {
            user_id: rec.user_id,
            features,
        };
        match rec.set {
            Membership::P => set.positives.push(sample),
            Membership::U => set.unlabeled.push(sample),
            Membership::N => set.negatives.push(sample),
        }
    }
    set.validate()?;
    Ok(set)
}
