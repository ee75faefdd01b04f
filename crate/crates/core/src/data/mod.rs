//! Shared domain types: events, profiles, sparse feature vectors and the
//! labeled sample sets produced by windowed labeling.

pub(crate) mod io;

pub use io::{
    read_event_log, read_profiles, read_sample_set, read_truth, write_event_log, write_profiles, write_sample_set,
    write_truth, SAMPLE_SET_VERSION,
};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds since the Unix epoch.
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;

pub fn days(n: i64) -> i64 {
    n * SECONDS_PER_DAY
}

/// Half-open time range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Horizon {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if start >= end {
            return Err(Error::Config(format!("horizon start {start} must precede end {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts < self.end
    }

    /// Whole days covered by the horizon (a partial last day counts).
    pub fn n_days(&self) -> usize {
        ((self.end - self.start + SECONDS_PER_DAY - 1) / SECONDS_PER_DAY) as usize
    }

    /// Fails unless `[from, to)` lies within the horizon (`to` may equal `end`).
    pub fn require_window(&self, from: Timestamp, to: Timestamp) -> Result<()> {
        if from < self.start || to > self.end {
            return Err(Error::OutOfHorizon {
                ts: to,
                needed: from,
                start: self.start,
                end: self.end,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum EventKind {
    Login,
    Pay { amount: f64 },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Login => 0,
            EventKind::Pay { .. } => 1,
        }
    }

    pub fn is_login(&self) -> bool {
        matches!(self, EventKind::Login)
    }
}

/// One behavior event. `user` indexes into [`EventLog::users`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub ts: Timestamp,
    pub user: u32,
    pub kind: EventKind,
}

/// Time-ordered events of a population over a declared horizon.
///
/// User ids are interned: `users` is sorted, so ordering events by user
/// index is the same as ordering them by user id.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    horizon: Horizon,
    users: Vec<String>,
    events: Vec<Event>,
}

/// An event with its user spelled out, as it appears on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub user_id: String,
    pub ts: Timestamp,
    pub kind: EventKind,
}

impl EventLog {
    pub fn empty(horizon: Horizon) -> Self {
        Self {
            horizon,
            users: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Validate and sort raw events. Unsorted input is accepted.
    pub fn from_raw(horizon: Horizon, raw: Vec<RawEvent>) -> Result<Self> {
        let mut users: Vec<String> = raw.iter().map(|e| e.user_id.clone()).collect();
        users.sort_unstable();
        users.dedup();
        let mut events = Vec::with_capacity(raw.len());
        for (i, e) in raw.into_iter().enumerate() {
            check_event(&horizon, e.ts, &e.kind)
                .map_err(|m| Error::Invalid(format!("event {i} ({}): {m}", e.user_id)))?;
            let user = users.binary_search(&e.user_id).expect("interned") as u32;
            events.push(Event {
                ts: e.ts,
                user,
                kind: e.kind,
            });
        }
        Ok(Self::from_interned(horizon, users, events))
    }

    /// Build from already-interned parts. `users` must be sorted and unique;
    /// events are validated by the caller and sorted here.
    pub(crate) fn from_interned(horizon: Horizon, users: Vec<String>, mut events: Vec<Event>) -> Self {
        debug_assert!(users.windows(2).all(|w| w[0] < w[1]));
        events.sort_unstable_by(|a, b| {
            (a.ts, a.user, a.kind.rank())
                .cmp(&(b.ts, b.user, b.kind.rank()))
                .then(a.kind.partial_cmp(&b.kind).unwrap_or(std::cmp::Ordering::Equal))
        });
        Self { horizon, users, events }
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn user_id(&self, user: u32) -> &str {
        &self.users[user as usize]
    }

    pub fn user_index(&self, user_id: &str) -> Option<u32> {
        self.users
            .binary_search_by(|u| u.as_str().cmp(user_id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn raw_events(&self) -> impl Iterator<Item = RawEvent> + '_ {
        self.events.iter().map(|e| RawEvent {
            user_id: self.users[e.user as usize].clone(),
            ts: e.ts,
            kind: e.kind,
        })
    }
}

pub(crate) fn check_event(horizon: &Horizon, ts: Timestamp, kind: &EventKind) -> Result<(), String> {
    if !horizon.contains(ts) {
        return Err(format!(
            "timestamp {ts} outside horizon [{}, {})",
            horizon.start, horizon.end
        ));
    }
    if let EventKind::Pay { amount } = kind {
        if !amount.is_finite() || *amount < 0.0 {
            return Err(format!("pay amount must be finite and nonnegative, got {amount}"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "m")]
    Male,
    #[serde(rename = "f")]
    Female,
    #[serde(rename = "u")]
    Unknown,
}

impl Gender {
    pub fn index(self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
            Gender::Unknown => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub user_id: String,
    pub age: u32,
    pub gender: Gender,
    pub city: u32,
    pub register_ts: Timestamp,
    pub user_level: u32,
}

/// Checks that no user has an event before registering.
pub fn validate_profiles(profiles: &[Profile], log: &EventLog) -> Result<()> {
    let mut first_seen = vec![Timestamp::MAX; log.users().len()];
    for e in log.events() {
        let slot = &mut first_seen[e.user as usize];
        *slot = (*slot).min(e.ts);
    }
    for p in profiles {
        if let Some(u) = log.user_index(&p.user_id) {
            if p.register_ts > first_seen[u as usize] {
                return Err(Error::Invalid(format!(
                    "user {} registered at {} after first event at {}",
                    p.user_id, p.register_ts, first_seen[u as usize]
                )));
            }
        }
    }
    Ok(())
}

/// Sparse real vector over a fixed feature space of size `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Entries must have strictly increasing indices below `dim` and finite values.
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Invalid(format!(
                    "feature indices not strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(i, v) in &entries {
            if i as usize >= dim {
                return Err(Error::Invalid(format!("feature index {i} >= dim {dim}")));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("feature {i} has non-finite value {v}")));
            }
        }
        Ok(Self { dim, entries })
    }

    /// Build from unordered (index, value) pairs; duplicate indices are summed.
    pub fn from_unsorted(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        Self::new(dim, merged)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            dense[i as usize] = v;
        }
        dense
    }
}

/// Binary training label plus instance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInstance {
    pub features: FeatureVector,
    pub label: bool,
    pub weight: f64,
}

impl WeightedInstance {
    pub fn new(features: FeatureVector, label: bool, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Invalid(format!("instance weight {weight} outside [0, 1]")));
        }
        Ok(Self {
            features,
            label,
            weight,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub user_id: String,
    pub features: FeatureVector,
}

/// Which labeled subset a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Membership {
    P,
    U,
    N,
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::P => "P",
            Membership::U => "U",
            Membership::N => "N",
        })
    }
}

/// Candidates of one window, split into labeled positives and either
/// unlabeled (`op < cp`) or negatives (`op >= cp`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    pub ref_time: Timestamp,
    pub positives: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub negatives: Vec<Sample>,
}

impl SampleSet {
    pub fn empty(dim: usize, ref_time: Timestamp) -> Self {
        Self {
            dim,
            ref_time,
            positives: Vec::new(),
            unlabeled: Vec::new(),
            negatives: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.unlabeled.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every sample with its membership, in P, U, N order.
    pub fn iter(&self) -> impl Iterator<Item = (Membership, &Sample)> {
        self.positives
            .iter()
            .map(|s| (Membership::P, s))
            .chain(self.unlabeled.iter().map(|s| (Membership::U, s)))
            .chain(self.negatives.iter().map(|s| (Membership::N, s)))
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.unlabeled.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.unlabeled.is_empty() && !self.negatives.is_empty() {
            return Err(Error::Invalid(format!(
                "sample set has both unlabeled ({}) and negative ({}) members",
                self.unlabeled.len(),
                self.negatives.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.len());
        for (set, s) in self.iter() {
            if s.features.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: s.features.dim(),
                });
            }
            if !seen.insert(s.user_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "user {} appears more than once (last in {set})",
                    s.user_id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horizon() -> Horizon {
        Horizon::new(0, days(10)).unwrap()
    }

    #[test]
    fn events_sorted_by_ts_then_user() {
        let raw = vec![
            RawEvent {
                user_id: "b".into(),
                ts: 50,
                kind: EventKind::Login,
            },
            RawEvent {
                user_id: "a".into(),
                ts: 50,
                kind: EventKind::Pay { amount: 2.0 },
            },
            RawEvent {
                user_id: "a".into(),
                ts: 50,
                kind: EventKind::Login,
            },
            RawEvent {
                user_id: "c".into(),
                ts: 10,
                kind: EventKind::Login,
            },
        ];
        let log = EventLog::from_raw(horizon(), raw).unwrap();
        let order: Vec<(i64, &str, bool)> = log
            .events()
            .iter()
            .map(|e| (e.ts, log.user_id(e.user), e.kind.is_login()))
            .collect();
        assert_eq!(
            order,
            vec![(10, "c", true), (50, "a", true), (50, "a", false), (50, "b", true)]
        );
    }

    #[test]
    fn out_of_horizon_and_negative_amount_rejected() {
        let late = vec![RawEvent {
            user_id: "a".into(),
            ts: days(10),
            kind: EventKind::Login,
        }];
        assert!(EventLog::from_raw(horizon(), late).is_err());
        let neg = vec![RawEvent {
            user_id: "a".into(),
            ts: 5,
            kind: EventKind::Pay { amount: -1.0 },
        }];
        assert!(EventLog::from_raw(horizon(), neg).is_err());
    }

    #[test]
    fn feature_vector_invariants() {
        assert!(FeatureVector::new(4, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(FeatureVector::new(4, vec![(2, 1.0), (1, 2.0)]).is_err());
        assert!(FeatureVector::new(4, vec![(4, 1.0)]).is_err());
        assert!(FeatureVector::new(4, vec![(0, f64::NAN)]).is_err());
        let fv = FeatureVector::from_unsorted(4, vec![(3, 1.0), (0, 2.0), (3, 0.5)]).unwrap();
        assert_eq!(fv.entries(), &[(0, 2.0), (3, 1.5)]);
        assert_eq!(fv.get(3), 1.5);
        assert_eq!(fv.get(1), 0.0);
    }

    #[test]
    fn sample_set_rejects_u_and_n_together() {
        let fv = FeatureVector::new(2, vec![]).unwrap();
        let mut s = SampleSet::empty(2, 0);
        s.unlabeled.push(Sample {
            user_id: "a".into(),
            features: fv.clone(),
        });
        s.negatives.push(Sample {
            user_id: "b".into(),
            features: fv.clone(),
        });
        assert!(s.validate().is_err());
        s.negatives.clear();
        s.positives.push(Sample {
            user_id: "a".into(),
            features: fv,
        });
        assert!(s.validate().is_err(), "duplicate user across P and U");
    }

    #[test]
    fn weight_outside_unit_interval_rejected() {
        let fv = FeatureVector::new(1, vec![]).unwrap();
        assert!(WeightedInstance::new(fv.clone(), true, 1.5).is_err());
        assert!(WeightedInstance::new(fv, false, 0.0).is_ok());
    }
}
