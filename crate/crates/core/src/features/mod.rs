//! Candidate selection, observation-window labeling and feature extraction.
//!
//! All windows share an end time `t` (`WindowSpec::ref_time`). Candidates are
//! selected at the observation-period start `t - op`; features are computed
//! strictly from events before that instant, labels from `[t - op, t)`.
//!
//! Feature space layout, in index order:
//!
//! | region     | contents                                                   |
//! |------------|------------------------------------------------------------|
//! | static     | one-hot age bucket, gender, city slot, tenure bucket, level |
//! | behavioral | per lookback: raw login count, pay count, pay amount, login-count bucket; then one recency bucket |
//! | cross      | hashed crosses of categorical values                        |

mod activity;

pub use activity::{ActivityIndex, WindowStats};

use std::collections::{BTreeMap, HashMap};

use crate::data::{days, FeatureVector, Profile, Sample, SampleSet, Timestamp, SECONDS_PER_DAY};
use crate::error::{Error, Result};

/// Candidate activity window before OP start.
pub const ACTIVE_WINDOW_DAYS: i64 = 30;
/// Candidates with more logins than this in the active window are dropped.
pub const MAX_ACTIVE_LOGINS: usize = 12;

pub const DEFAULT_LOOKBACKS: [u32; 3] = [7, 15, 30];
pub const DEFAULT_DIM: usize = 1 << 14;

pub const AGE_BUCKETS: usize = 6;
pub const GENDERS: usize = 3;
pub const CITY_SLOTS: usize = 32;
pub const TENURE_BUCKETS: usize = 5;
pub const LEVEL_SLOTS: usize = 8;
pub const COUNT_BUCKETS: usize = 7;
pub const RECENCY_BUCKETS: usize = 6;
/// Index of the "never" recency bucket.
pub const RECENCY_NEVER: usize = RECENCY_BUCKETS - 1;

const STATIC_LEN: usize = AGE_BUCKETS + GENDERS + CITY_SLOTS + TENURE_BUCKETS + LEVEL_SLOTS;
const PER_LOOKBACK_LEN: usize = 3 + COUNT_BUCKETS;

/// Observation window anchored at a shared end time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpec {
    pub ref_time: Timestamp,
    pub op_days: u32,
    pub cp_days: u32,
    pub lookbacks: Vec<u32>,
}

impl WindowSpec {
    pub fn new(ref_time: Timestamp, op_days: u32, cp_days: u32, lookbacks: Vec<u32>) -> Result<Self> {
        if op_days < 1 {
            return Err(Error::Config("op must be at least 1 day".into()));
        }
        if cp_days < 1 {
            return Err(Error::Config("cp must be at least 1 day".into()));
        }
        validate_lookbacks(&lookbacks)?;
        Ok(Self {
            ref_time,
            op_days,
            cp_days,
            lookbacks,
        })
    }

    /// Candidate-selection and feature time.
    pub fn op_start(&self) -> Timestamp {
        self.ref_time - days(self.op_days as i64)
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.op_days >= self.cp_days
    }
}

pub fn validate_lookbacks(lookbacks: &[u32]) -> Result<()> {
    if lookbacks.is_empty() || lookbacks[0] == 0 {
        return Err(Error::Config("lookbacks must be nonempty and positive".into()));
    }
    if lookbacks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "lookbacks must be strictly increasing, got {lookbacks:?}"
        )));
    }
    Ok(())
}

pub fn age_bucket(age: u32) -> usize {
    match age {
        0..=17 => 0,
        18..=24 => 1,
        25..=34 => 2,
        35..=44 => 3,
        45..=54 => 4,
        _ => 5,
    }
}

fn tenure_bucket(days_registered: i64) -> usize {
    match days_registered {
        i64::MIN..=29 => 0,
        30..=89 => 1,
        90..=364 => 2,
        365..=1094 => 3,
        _ => 4,
    }
}

/// Login-count bucket: 0, 1, 2, 3-4, 5-8, 9-16, 17+.
pub fn count_bucket(count: usize) -> usize {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3..=4 => 3,
        5..=8 => 4,
        9..=16 => 5,
        _ => 6,
    }
}

/// Days-since-last-login bucket: 0-1, 2-3, 4-7, 8-15, 16-30, never.
/// Gaps beyond 30 days fall in the "never" bucket.
pub fn recency_bucket(days_since: Option<i64>) -> usize {
    match days_since {
        Some(0..=1) => 0,
        Some(2..=3) => 1,
        Some(4..=7) => 2,
        Some(8..=15) => 3,
        Some(16..=30) => 4,
        _ => RECENCY_NEVER,
    }
}

/// Whole days between the last login before `t` and `t`.
pub fn days_since_last_login(index: &ActivityIndex<'_>, user_id: &str, t: Timestamp) -> Option<i64> {
    index
        .last_login_before(user_id, t)
        .map(|last| (t - last) / SECONDS_PER_DAY)
}

/// Categorical fields that take part in crosses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Age,
    Gender,
    City,
    Tenure,
    Level,
    Recency,
    /// Login-count bucket of the lookback at this position.
    LoginCount(u8),
}

impl Field {
    fn id(self) -> u32 {
        match self {
            Field::Age => 0,
            Field::Gender => 1,
            Field::City => 2,
            Field::Tenure => 3,
            Field::Level => 4,
            Field::Recency => 5,
            Field::LoginCount(i) => 16 + i as u32,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian bytes of the words.
fn fnv1a(words: &[u32]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Slot of the cross `(a, b)` in a region of `region_size` slots.
pub fn cross_slot(a: (Field, u32), b: (Field, u32), region_size: usize) -> usize {
    assert!(region_size > 0, "cross region must be nonempty");
    (fnv1a(&[a.0.id(), a.1, b.0.id(), b.1]) % region_size as u64) as usize
}

/// Index arithmetic for the fixed feature-space layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    dim: usize,
    lookbacks: Vec<u32>,
}

impl FeatureLayout {
    pub fn new(dim: usize, lookbacks: Vec<u32>) -> Result<Self> {
        validate_lookbacks(&lookbacks)?;
        let fixed = STATIC_LEN + PER_LOOKBACK_LEN * lookbacks.len() + RECENCY_BUCKETS;
        if dim <= fixed {
            return Err(Error::Config(format!(
                "dim {dim} leaves no cross region (fixed features need {fixed})"
            )));
        }
        Ok(Self { dim, lookbacks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookbacks(&self) -> &[u32] {
        &self.lookbacks
    }

    pub fn age(&self, bucket: usize) -> u32 {
        bucket as u32
    }

    pub fn gender(&self, g: usize) -> u32 {
        (AGE_BUCKETS + g) as u32
    }

    pub fn city(&self, city: u32) -> u32 {
        (AGE_BUCKETS + GENDERS) as u32 + city % CITY_SLOTS as u32
    }

    pub fn tenure(&self, bucket: usize) -> u32 {
        (AGE_BUCKETS + GENDERS + CITY_SLOTS + bucket) as u32
    }

    pub fn level(&self, level: u32) -> u32 {
        (AGE_BUCKETS + GENDERS + CITY_SLOTS + TENURE_BUCKETS) as u32 + level.min(LEVEL_SLOTS as u32 - 1)
    }

    fn lookback_base(&self, pos: usize) -> u32 {
        (STATIC_LEN + PER_LOOKBACK_LEN * pos) as u32
    }

    pub fn login_count(&self, pos: usize) -> u32 {
        self.lookback_base(pos)
    }

    pub fn pay_count(&self, pos: usize) -> u32 {
        self.lookback_base(pos) + 1
    }

    pub fn pay_amount(&self, pos: usize) -> u32 {
        self.lookback_base(pos) + 2
    }

    pub fn login_count_bucket(&self, pos: usize, bucket: usize) -> u32 {
        self.lookback_base(pos) + 3 + bucket as u32
    }

    pub fn recency(&self, bucket: usize) -> u32 {
        (STATIC_LEN + PER_LOOKBACK_LEN * self.lookbacks.len() + bucket) as u32
    }

    pub fn cross_region_start(&self) -> usize {
        STATIC_LEN + PER_LOOKBACK_LEN * self.lookbacks.len() + RECENCY_BUCKETS
    }

    pub fn cross_region_size(&self) -> usize {
        self.dim - self.cross_region_start()
    }

    pub fn cross(&self, a: (Field, u32), b: (Field, u32)) -> u32 {
        (self.cross_region_start() + cross_slot(a, b, self.cross_region_size())) as u32
    }

    /// Position of a lookback length in the layout.
    pub fn lookback_position(&self, days: u32) -> Option<usize> {
        self.lookbacks.iter().position(|&d| d == days)
    }
}

fn profile_map(profiles: &[Profile]) -> HashMap<&str, &Profile> {
    profiles.iter().map(|p| (p.user_id.as_str(), p)).collect()
}

/// Active users at `op_start`: at least one and at most
/// [`MAX_ACTIVE_LOGINS`] logins in the preceding 30 days. Sorted by user id.
pub fn select_candidates(index: &ActivityIndex<'_>, profiles: &[Profile], op_start: Timestamp) -> Result<Vec<String>> {
    let from = op_start - days(ACTIVE_WINDOW_DAYS);
    index.log().horizon().require_window(from, op_start)?;
    let mut out: Vec<String> = profiles
        .iter()
        .filter(|p| {
            let n = index.count_logins(&p.user_id, from, op_start);
            (1..=MAX_ACTIVE_LOGINS).contains(&n)
        })
        .map(|p| p.user_id.clone())
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Membership of each candidate in one observation window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowLabels {
    pub positives: Vec<String>,
    pub unlabeled: Vec<String>,
    pub negatives: Vec<String>,
}

/// A candidate who logs in during `[t - op, t)` is positive; the rest are
/// unlabeled when `op < cp` and negative otherwise.
pub fn label_window(index: &ActivityIndex<'_>, candidates: &[String], spec: &WindowSpec) -> Result<WindowLabels> {
    let from = spec.op_start();
    index.log().horizon().require_window(from, spec.ref_time)?;
    let mut labels = WindowLabels::default();
    for user in candidates {
        if index.any_login(user, from, spec.ref_time) {
            labels.positives.push(user.clone());
        } else if spec.is_fully_labeled() {
            labels.negatives.push(user.clone());
        } else {
            labels.unlabeled.push(user.clone());
        }
    }
    Ok(labels)
}

/// Feature vectors at time `t`, computed only from events before `t`.
pub fn extract_features(
    index: &ActivityIndex<'_>,
    profiles: &[Profile],
    candidates: &[String],
    t: Timestamp,
    layout: &FeatureLayout,
) -> Result<BTreeMap<String, FeatureVector>> {
    let longest = *layout.lookbacks().last().expect("validated nonempty") as i64;
    index.log().horizon().require_window(t - days(longest), t)?;
    let by_id = profile_map(profiles);
    let mut out = BTreeMap::new();
    for user in candidates {
        let profile = by_id
            .get(user.as_str())
            .ok_or_else(|| Error::MissingProfile(user.clone()))?;
        out.insert(user.clone(), user_features(index, profile, t, layout)?);
    }
    Ok(out)
}

fn user_features(
    index: &ActivityIndex<'_>,
    p: &Profile,
    t: Timestamp,
    layout: &FeatureLayout,
) -> Result<FeatureVector> {
    let age = age_bucket(p.age);
    let gender = p.gender.index();
    let tenure = tenure_bucket((t - p.register_ts) / SECONDS_PER_DAY);
    let level = p.user_level.min(LEVEL_SLOTS as u32 - 1);
    let city_slot = p.city % CITY_SLOTS as u32;

    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(32);
    entries.push((layout.age(age), 1.0));
    entries.push((layout.gender(gender), 1.0));
    entries.push((layout.city(p.city), 1.0));
    entries.push((layout.tenure(tenure), 1.0));
    entries.push((layout.level(level), 1.0));

    let mut first_count_bucket = 0;
    for (pos, &lb) in layout.lookbacks().iter().enumerate() {
        let w = index.window(&p.user_id, t - days(lb as i64), t);
        let bucket = count_bucket(w.logins);
        if pos == 0 {
            first_count_bucket = bucket;
        }
        entries.push((layout.login_count(pos), (w.logins as f64).ln_1p()));
        entries.push((layout.pay_count(pos), (w.pays as f64).ln_1p()));
        entries.push((layout.pay_amount(pos), w.pay_amount.ln_1p()));
        entries.push((layout.login_count_bucket(pos, bucket), 1.0));
    }
    let recency = recency_bucket(days_since_last_login(index, &p.user_id, t));
    entries.push((layout.recency(recency), 1.0));

    let crosses = [
        (
            (Field::Age, age as u32),
            (Field::LoginCount(0), first_count_bucket as u32),
        ),
        ((Field::Age, age as u32), (Field::Gender, gender as u32)),
        ((Field::Gender, gender as u32), (Field::City, city_slot)),
        ((Field::Level, level), (Field::Recency, recency as u32)),
        ((Field::Age, age as u32), (Field::City, city_slot)),
    ];
    for (a, b) in crosses {
        entries.push((layout.cross(a, b), 1.0));
    }
    // Zero-valued raw counts carry no information for sparse models.
    entries.retain(|&(_, v)| v != 0.0);
    FeatureVector::from_unsorted(layout.dim(), entries)
}

/// Candidates at `spec.op_start()`, labeled over the observation window and
/// featurized at the candidate-selection time.
pub fn build_sample_set(
    index: &ActivityIndex<'_>,
    profiles: &[Profile],
    spec: &WindowSpec,
    layout: &FeatureLayout,
) -> Result<SampleSet> {
    let t_sel = spec.op_start();
    let candidates = select_candidates(index, profiles, t_sel)?;
    let labels = label_window(index, &candidates, spec)?;
    let mut features = extract_features(index, profiles, &candidates, t_sel, layout)?;
    let mut take = |ids: Vec<String>| -> Vec<Sample> {
        ids.into_iter()
            .map(|user_id| {
                let features = features.remove(&user_id).expect("featurized candidate");
                Sample { user_id, features }
            })
            .collect()
    };
    let set = SampleSet {
        dim: layout.dim(),
        ref_time: spec.ref_time,
        positives: take(labels.positives),
        unlabeled: take(labels.unlabeled),
        negatives: take(labels.negatives),
    };
    Ok(set)
}
