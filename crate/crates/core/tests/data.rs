mod common;

use proptest::prelude::*;
use pu_churn::data::{
    read_event_log, read_profiles, read_sample_set, read_truth, write_event_log, write_profiles, write_sample_set,
    write_truth, EventKind, EventLog, FeatureVector, Gender, Horizon, Profile, RawEvent, Sample, SampleSet,
};
use pu_churn::sim::UserTruth;
use pu_churn::Error;

const START: i64 = 1_000_000;
const END: i64 = 2_000_000;

fn horizon() -> Horizon {
    Horizon::new(START, END).unwrap()
}

fn raw_event() -> impl Strategy<Value = RawEvent> {
    (0u8..20, START..END, prop::option::of(0.0f64..1e4)).prop_map(|(u, ts, amount)| RawEvent {
        user_id: format!("user{u:02}"),
        ts,
        kind: amount.map_or(EventKind::Login, |amount| EventKind::Pay { amount }),
    })
}

fn profile() -> impl Strategy<Value = Profile> {
    (0u16..1000, 0u32..100, 0usize..3, 0u32..64, START - 1000..START, 0u32..8).prop_map(
        |(id, age, g, city, register_ts, user_level)| Profile {
            user_id: format!("p{id:04}"),
            age,
            gender: [Gender::Male, Gender::Female, Gender::Unknown][g],
            city,
            register_ts,
            user_level,
        },
    )
}

fn sample(dim: usize) -> impl Strategy<Value = Sample> {
    (
        any::<u32>(),
        prop::collection::btree_map(0..dim as u32, -1e3f64..1e3, 0..8),
    )
        .prop_map(move |(id, m)| Sample {
            user_id: format!("s{id}"),
            features: FeatureVector::new(dim, m.into_iter().collect()).unwrap(),
        })
}

fn dedup(mut samples: Vec<Sample>, seen: &mut std::collections::HashSet<String>) -> Vec<Sample> {
    samples.retain(|s| seen.insert(s.user_id.clone()));
    samples
}

proptest! {
    #[test]
    fn event_log_round_trips_and_is_ordered(raw in prop::collection::vec(raw_event(), 0..200)) {
        let log = EventLog::from_raw(horizon(), raw).unwrap();
        let key = |e: &pu_churn::data::Event| (e.ts, log.user_id(e.user).to_string());
        for w in log.events().windows(2) {
            prop_assert!(key(&w[0]) <= key(&w[1]));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        write_event_log(&log, &path).unwrap();
        prop_assert_eq!(read_event_log(&path, horizon()).unwrap(), log);
    }

    #[test]
    fn profiles_round_trip(profiles in prop::collection::vec(profile(), 0..50)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.jsonl");
        write_profiles(&profiles, &path).unwrap();
        prop_assert_eq!(read_profiles(&path).unwrap(), profiles);
    }

    #[test]
    fn truth_round_trips(churn in prop::collection::vec(prop::option::of(START..END), 0..50)) {
        let truths: Vec<UserTruth> = churn
            .iter()
            .enumerate()
            .map(|(i, &churn_ts)| UserTruth { user_id: format!("u{i}"), engagement: 1.0, churn_ts })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.jsonl");
        write_truth(&truths, &path).unwrap();
        let back = read_truth(&path).unwrap();
        let expected: Vec<_> = truths.into_iter().map(|t| (t.user_id, t.churn_ts)).collect();
        prop_assert_eq!(back, expected);
    }

    #[test]
    fn sample_set_round_trips(
        p in prop::collection::vec(sample(40), 0..20),
        u in prop::collection::vec(sample(40), 0..20),
        full in any::<bool>(),
    ) {
        let mut seen = std::collections::HashSet::new();
        let positives = dedup(p, &mut seen);
        let others = dedup(u, &mut seen);
        let (unlabeled, negatives) = if full { (Vec::new(), others) } else { (others, Vec::new()) };
        let set = SampleSet { dim: 40, ref_time: START, positives, unlabeled, negatives };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.jsonl");
        write_sample_set(&set, &path).unwrap();
        prop_assert_eq!(read_sample_set(&path).unwrap(), set);
    }
}

#[test]
fn events_outside_the_horizon_are_rejected() {
    let raw = vec![RawEvent {
        user_id: "a".into(),
        ts: END,
        kind: EventKind::Login,
    }];
    assert!(EventLog::from_raw(horizon(), raw).is_err());
}

#[test]
fn malformed_lines_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    std::fs::write(
        &path,
        format!("{{\"user_id\":\"a\",\"ts\":{START},\"kind\":\"login\"}}\n{{\"user_id\":\"a\",\"ts\":{START},\"kind\":\"pay\"}}\n"),
    )
    .unwrap();
    match read_event_log(&path, horizon()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn feature_vectors_reject_bad_entries() {
    assert!(FeatureVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
    assert!(FeatureVector::new(3, vec![(3, 1.0)]).is_err());
    assert!(FeatureVector::new(3, vec![(0, f64::NAN)]).is_err());
    let v = FeatureVector::from_unsorted(4, vec![(2, 1.0), (0, 3.0)]).unwrap();
    assert_eq!(v.entries(), &[(0, 3.0), (2, 1.0)]);
    assert_eq!(v.to_dense(), vec![3.0, 0.0, 1.0, 0.0]);
}

#[test]
fn sample_set_with_both_u_and_n_is_invalid() {
    let s = |id: &str| Sample {
        user_id: id.into(),
        features: common::fv(2, &[]),
    };
    let set = SampleSet {
        dim: 2,
        ref_time: START,
        positives: vec![],
        unlabeled: vec![s("a")],
        negatives: vec![s("b")],
    };
    assert!(set.validate().is_err());
}
