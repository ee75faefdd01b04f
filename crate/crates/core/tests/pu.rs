mod common;

use std::collections::HashMap;

use common::fv;
use common::scar::{self, cohort_log, draw, fit_nontraditional, one_hot};
use proptest::prelude::*;
use pu_churn::data::{days, Sample};
use pu_churn::features::WindowSpec;
use pu_churn::models::{lr_score, posterior_from_score, sigmoid, PosteriorMode};
use pu_churn::pipeline::Experiment;
use pu_churn::pu::{
    build_weighted_training_set, compute_weight, estimate_c_e1, estimate_c_e2, estimate_c_e3, estimate_c_historical,
    read_weighted_set, weight_closed_form, write_weighted_set, CMethod, LabelFrequency, Provenance,
};
use pu_churn::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lf(c: f64) -> LabelFrequency {
    LabelFrequency::new(c, CMethod::E1, 1).unwrap()
}

/// `((1 - c) / c) * g / (1 - g)` with `g = c * g'`.
fn ratio_form(g_prime: f64, c: f64) -> f64 {
    let g = c * g_prime;
    (1.0 - c) / c * g / (1.0 - g)
}

#[test]
fn weights_stay_in_unit_interval_on_a_grid() {
    for i in 0..100 {
        for j in 0..100 {
            let g = i as f64 / 99.0;
            let c = 0.01 + 0.99 * j as f64 / 99.0;
            let w = compute_weight(g, &lf(c));
            assert!((0.0..=1.0).contains(&w), "w({g}, {c}) = {w}");
        }
    }
}

#[test]
fn closed_form_matches_ratio_form() {
    for i in 1..100 {
        for j in 0..100 {
            let g = i as f64 / 100.0;
            let c = 0.01 + 0.98 * j as f64 / 99.0;
            let a = weight_closed_form(g, c);
            let b = ratio_form(g, c);
            assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE),
                "{a} vs {b}"
            );
        }
    }
}

#[test]
fn weight_examples() {
    assert!((compute_weight(0.5, &lf(0.5)) - 1.0 / 3.0).abs() < 1e-5);
    assert!(compute_weight(0.0, &lf(0.3)) < 1e-5);
    assert!(compute_weight(0.9, &lf(1.0)) == 0.0);
    assert!(compute_weight(1.0, &lf(0.2)) > 0.99);
}

#[test]
fn dual_copies_sum_to_one_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let positives = vec![Sample {
        user_id: "p".into(),
        features: fv(4, &[(0, 1.0)]),
    }];
    let unlabeled: Vec<Sample> = (0..500)
        .map(|i| Sample {
            user_id: format!("u{i}"),
            features: common::random_fv(&mut rng, 4, 0.5),
        })
        .collect();
    let scores: HashMap<String, f64> = unlabeled
        .iter()
        .enumerate()
        .map(|(i, s)| (s.user_id.clone(), i as f64 / 499.0))
        .collect();
    let set = build_weighted_training_set(4, &positives, &unlabeled, &scores, lf(0.37)).unwrap();
    assert_eq!(set.len(), 1 + 2 * unlabeled.len());
    assert_eq!(set.rows[0].provenance, Provenance::Positive);
    assert_eq!(set.rows[0].instance.weight, 1.0);
    for pair in set.rows[1..].chunks(2) {
        assert_eq!(pair[0].user_id, pair[1].user_id);
        assert_eq!(pair[0].provenance, Provenance::UnlabeledAsPositive);
        assert_eq!(pair[1].provenance, Provenance::UnlabeledAsNegative);
        assert!(pair[0].instance.label && !pair[1].instance.label);
        assert_eq!(pair[0].instance.weight + pair[1].instance.weight, 1.0);
    }
}

#[test]
fn missing_score_is_reported() {
    let unlabeled = vec![Sample {
        user_id: "u".into(),
        features: fv(2, &[(0, 1.0)]),
    }];
    let err = build_weighted_training_set(2, &[], &unlabeled, &HashMap::new(), lf(0.5)).unwrap_err();
    assert!(matches!(err, Error::IncompleteScores(u) if u == "u"));
}

#[test]
fn weighted_set_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.jsonl");
    let unlabeled = vec![Sample {
        user_id: "u".into(),
        features: fv(3, &[(1, 0.25)]),
    }];
    let scores = HashMap::from([("u".to_string(), 0.4)]);
    let set = build_weighted_training_set(3, &[], &unlabeled, &scores, lf(0.6)).unwrap();
    write_weighted_set(&set, &path).unwrap();
    let back = read_weighted_set(&path).unwrap();
    assert_eq!(back.rows, set.rows);
    assert_eq!(back.label_frequency.unwrap().c(), 0.6);
}

#[test]
fn estimator_edge_cases() {
    assert!(matches!(estimate_c_e1(&[]), Err(Error::InsufficientData(_))));
    assert!(matches!(estimate_c_e3(&[]), Err(Error::InsufficientData(_))));
    assert!(matches!(estimate_c_e2(&[0.0], &[0.0]), Err(Error::DegenerateScores(_))));
    assert!(matches!(estimate_c_historical(3, 0), Err(Error::NoHistory)));
    assert!(matches!(
        estimate_c_historical(5, 3),
        Err(Error::InconsistentCohort { .. })
    ));
    assert_eq!(estimate_c_historical(0, 10).unwrap().c(), pu_churn::pu::MIN_C);
    assert!((estimate_c_e1(&[0.2, 0.4]).unwrap().c() - 0.3).abs() < 1e-15);
    assert!((estimate_c_e2(&[0.2, 0.4], &[0.2, 0.4, 0.6]).unwrap().c() - 0.5).abs() < 1e-15);
    assert_eq!(estimate_c_e3(&[0.2, 0.7, 0.4]).unwrap().c(), 0.7);
    assert!(LabelFrequency::new(1.2, CMethod::E3, 1).is_err());
}

#[test]
fn scar_label_frequency_is_recovered() {
    let k = scar::POSTERIOR.len();
    for (i, c) in [0.1, 0.3, 0.5, 0.7].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let draws = draw(&mut rng, &scar::POSTERIOR, c, 20_000);
        let fitted = fit_nontraditional(&draws, k);
        let e1 = estimate_c_e1(&fitted.labeled_scores).unwrap().c();
        let e3 = estimate_c_e3(&fitted.holdout_scores).unwrap().c();
        assert!((e1 - c).abs() <= 0.05, "c = {c}: e1 = {e1}");
        assert!(e3 >= e1);

        let (op, cp) = (15, 90);
        let (log, profiles) = cohort_log(&mut rng, &draws, op, cp);
        let exp = Experiment::new(&log, &profiles);
        let spec = WindowSpec::new(scar::T0 + days(cp.into()), op, cp, vec![7]).unwrap();
        let hist = exp.historical_c(&spec).unwrap().c();
        assert!((hist - c).abs() <= 0.05, "c = {c}: historical = {hist}");
    }
}

#[test]
fn dividing_by_c_recovers_the_posterior() {
    let k = scar::OVERLAPPING.len();
    let c = 0.4;
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let draws = draw(&mut rng, &scar::OVERLAPPING, c, 20_000);
    let g = fit_nontraditional(&draws, k).g;
    let test = draw(&mut rng, &scar::OVERLAPPING, c, 2_000);
    let err = test
        .iter()
        .map(|d| {
            let p = sigmoid(lr_score(&g, &one_hot(d.category, k)).unwrap());
            (posterior_from_score(p, &lf(c), PosteriorMode::DivideByC) - scar::OVERLAPPING[d.category]).abs()
        })
        .sum::<f64>()
        / test.len() as f64;
    assert!(err <= 0.05, "mean error {err}");
}

#[test]
fn posterior_modes() {
    assert!((posterior_from_score(0.3, &lf(0.6), PosteriorMode::DivideByC) - 0.5).abs() < 1e-15);
    assert_eq!(posterior_from_score(0.9, &lf(0.5), PosteriorMode::DivideByC), 1.0);
    assert_eq!(posterior_from_score(0.9, &lf(0.5), PosteriorMode::Raw), 0.9);
}

proptest! {
    #[test]
    fn weight_is_monotone_in_score(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.01f64..=1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(compute_weight(lo, &lf(c)) <= compute_weight(hi, &lf(c)));
    }

    #[test]
    fn weight_is_bounded(g in -1.0f64..2.0, c in 0.0f64..=1.0) {
        let w = compute_weight(g, &lf(c));
        prop_assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn full_label_frequency_gives_zero_weight(g in 0.0f64..0.999) {
        prop_assert_eq!(compute_weight(g, &lf(1.0)), 0.0);
    }
}
