use std::collections::HashMap;

use pu_churn::data::{read_sample_set, EventLog, Horizon, Profile, Timestamp};
use pu_churn::eval::{evaluate_model, EvalReport};
use pu_churn::models::{fm_train, lr_score, read_model, sigmoid, Model};
use pu_churn::pipeline::{reproduce, run_rule, run_supervised, run_tccp, Experiment, Mode, RunConfig};
use pu_churn::pu::{build_weighted_training_set, read_weighted_set, CMethod};
use pu_churn::sim::{generate_population, simulate_events, SimConfig, DEFAULT_END, DEFAULT_START};
use pu_churn::Error;

struct World {
    log: EventLog,
    profiles: Vec<Profile>,
    truths: Vec<(String, Option<Timestamp>)>,
}

fn world(n: usize, seed: u64) -> World {
    let sim = SimConfig {
        n_users: n,
        seed,
        ..SimConfig::default()
    };
    let (profiles, truths) = generate_population(&sim).unwrap();
    let log = simulate_events(&profiles, &truths, &sim).unwrap();
    let truths = truths.into_iter().map(|t| (t.user_id, t.churn_ts)).collect();
    World { log, profiles, truths }
}

fn fast() -> RunConfig {
    let mut cfg = RunConfig {
        dim: 1 << 12,
        ..RunConfig::default()
    };
    cfg.train.epochs = 5;
    cfg
}

#[test]
fn pu_mode_rejects_full_windows_before_any_work() {
    let empty = EventLog::empty(Horizon::new(DEFAULT_START, DEFAULT_END).unwrap());
    let exp = Experiment::new(&empty, &[]);
    for op in [90, 120] {
        let cfg = RunConfig { op_days: op, ..fast() };
        let err = run_tccp(&exp, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn persisted_stages_reproduce_the_in_memory_run() {
    let w = world(3000, 21);
    let exp = Experiment::new(&w.log, &w.profiles).with_truths(&w.truths);
    let dir = tempfile::tempdir().unwrap();
    for c_method in [CMethod::Historical, CMethod::E1] {
        let cfg = RunConfig {
            out_dir: Some(dir.path().to_path_buf()),
            c_method,
            platt: c_method == CMethod::E1,
            ..fast()
        };
        let out = run_tccp(&exp, &cfg).unwrap();

        let set = read_sample_set(dir.path().join("train_set.jsonl")).unwrap();
        assert_eq!(set, out.train_set);

        let g = match read_model(dir.path().join("g_model.json")).unwrap().model {
            Model::Logistic(m) => m,
            other => panic!("unexpected g model {other:?}"),
        };
        assert_eq!(g, out.g_model);
        let g_prime: HashMap<String, f64> = set
            .unlabeled
            .iter()
            .map(|s| {
                let z = lr_score(&g, &s.features).unwrap();
                let p = out
                    .platt
                    .map_or_else(|| sigmoid(z), |pp| pu_churn::models::platt_apply(&pp, z));
                (s.user_id.clone(), p)
            })
            .collect();
        let weighted = build_weighted_training_set(set.dim, &set.positives, &set.unlabeled, &g_prime, out.c).unwrap();
        let from_disk = read_weighted_set(dir.path().join("weighted.jsonl")).unwrap();
        assert_eq!(weighted.rows, out.weighted.rows);
        assert_eq!(from_disk.rows, out.weighted.rows);

        let f = fm_train(&from_disk, &cfg.train).unwrap();
        assert_eq!(f, out.model);
        let saved = read_model(dir.path().join("f_model.json")).unwrap();
        assert_eq!(saved.model, Model::Fm(out.model.clone()));
        assert_eq!(saved.c, Some(out.c.c()));

        let test = exp.test_set(&cfg).unwrap();
        let row = evaluate_model(&out.row.method, &out.row.params, &saved.model, &test).unwrap();
        assert_eq!(row, out.row);
        let report = EvalReport::read_json(dir.path().join("report.json")).unwrap();
        assert_eq!(report.rows, vec![out.row.clone()]);
    }
}

#[test]
fn supervised_and_rule_modes_run() {
    let w = world(3000, 22);
    let exp = Experiment::new(&w.log, &w.profiles).with_truths(&w.truths);
    for mode in [Mode::Lr, Mode::Fm] {
        let out = run_supervised(&exp, &RunConfig { mode, ..fast() }).unwrap();
        assert!(out.row.auc > 0.6, "{mode}: {}", out.row.auc);
        assert!(out.train_set.unlabeled.is_empty());
    }
    for mode in [Mode::Recency, Mode::Frequency] {
        let row = run_rule(&exp, &RunConfig { mode, ..fast() }).unwrap();
        assert!(row.auc > 0.5);
    }
}

#[test]
fn degenerate_rule_setting_is_an_error() {
    let w = world(2000, 23);
    let exp = Experiment::new(&w.log, &w.profiles);
    let cfg = RunConfig {
        mode: Mode::Frequency,
        rule_m: 10_000,
        ..fast()
    };
    let err = run_rule(&exp, &cfg).unwrap_err();
    assert!(matches!(err.root(), Error::UndefinedAuc(_)), "{err}");
}

#[test]
fn full_window_without_negatives_is_insufficient() {
    // Everyone logs in every third day, so nobody is a negative.
    let start = DEFAULT_START;
    let raw = (0..20)
        .flat_map(|u| {
            (0..80).map(move |d| pu_churn::data::RawEvent {
                user_id: format!("u{u:02}"),
                ts: start + 3 * d * 86_400 + 3_600,
                kind: pu_churn::data::EventKind::Login,
            })
        })
        .collect();
    let log = EventLog::from_raw(Horizon::new(DEFAULT_START, DEFAULT_END).unwrap(), raw).unwrap();
    let profiles: Vec<Profile> = (0..20)
        .map(|u| Profile {
            user_id: format!("u{u:02}"),
            age: 30,
            gender: pu_churn::data::Gender::Male,
            city: 1,
            register_ts: start - 86_400,
            user_level: 1,
        })
        .collect();
    let exp = Experiment::new(&log, &profiles);
    let err = run_supervised(
        &exp,
        &RunConfig {
            mode: Mode::Lr,
            ..fast()
        },
    )
    .unwrap_err();
    assert!(matches!(err.root(), Error::InsufficientData(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn historical_estimate_tracks_the_simulated_cohort() {
    let w = world(4000, 24);
    let exp = Experiment::new(&w.log, &w.profiles);
    let cfg = fast();
    let spec = cfg.train_window().unwrap();
    let c = exp.historical_c(&spec).unwrap();
    assert!(c.c() > 0.0 && c.c() < 1.0);
    assert_eq!(c.method(), CMethod::Historical);
    let longer = exp
        .historical_c(&RunConfig { op_days: 30, ..cfg }.train_window().unwrap())
        .unwrap();
    assert!(longer.c() >= c.c());
}

#[test]
fn reproduce_is_byte_identical() {
    let sim = SimConfig {
        n_users: 2000,
        seed: 7,
        ..SimConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ops = [7, 15, 90];
    let ra = reproduce(&sim, &fast(), &ops, a.path()).unwrap();
    reproduce(&sim, &fast(), &ops, b.path()).unwrap();
    for f in &ra.files {
        let name = f.file_name().unwrap();
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
    let methods: Vec<&str> = ra.comparison.report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods.len(), 5);
    assert_eq!(ra.comparison.sweep.last().unwrap().1, ra.comparison.report.rows[3].auc);
}
