//! Synthetic positive-unlabeled data with labels selected completely at
//! random: one categorical feature, a known posterior per category, and each
//! positive labeled with probability `c`.

use pu_churn::data::{days, EventKind, EventLog, FeatureVector, Gender, Horizon, Profile, RawEvent, Sample, Timestamp};
use pu_churn::models::{lr_score, lr_train, sigmoid, LogisticModel, TrainConfig};
use pu_churn::pu::WeightedTrainingSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `p(y = 1 | category)`. Mostly separable, with two overlapping categories.
pub const POSTERIOR: [f64; 12] = [1.0, 1.0, 1.0, 1.0, 1.0, 0.97, 0.03, 0.0, 0.0, 0.0, 0.0, 0.0];

/// `p(y = 1 | category)` with heavy class overlap.
pub const OVERLAPPING: [f64; 12] = [0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.0];

pub struct Draw {
    pub category: usize,
    pub y: bool,
    pub s: bool,
}

pub fn one_hot(category: usize, k: usize) -> FeatureVector {
    FeatureVector::new(k, vec![(category as u32, 1.0)]).unwrap()
}

pub fn draw(rng: &mut ChaCha8Rng, posterior: &[f64], c: f64, n: usize) -> Vec<Draw> {
    (0..n)
        .map(|_| {
            let category = rng.random_range(0..posterior.len());
            let y = rng.random::<f64>() < posterior[category];
            let s = y && rng.random::<f64>() < c;
            Draw { category, y, s }
        })
        .collect()
}

fn samples(draws: &[&Draw], k: usize, labeled: bool) -> Vec<Sample> {
    draws
        .iter()
        .enumerate()
        .filter(|(_, d)| d.s == labeled)
        .map(|(i, d)| Sample {
            user_id: format!("x{i:06}"),
            features: one_hot(d.category, k),
        })
        .collect()
}

pub struct Fitted {
    pub g: LogisticModel,
    /// `g'` on held-out labeled points.
    pub labeled_scores: Vec<f64>,
    /// `g'` on every held-out point.
    pub holdout_scores: Vec<f64>,
}

/// SGD run long enough for `g'` to reach the per-category label rates.
pub fn converged() -> TrainConfig {
    TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    }
}

/// Fits `g'` (labeled versus unlabeled) on four fifths and scores the rest.
pub fn fit_nontraditional(draws: &[Draw], k: usize) -> Fitted {
    let fit: Vec<&Draw> = draws
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 5 != 4)
        .map(|(_, d)| d)
        .collect();
    let hold: Vec<&Draw> = draws
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 5 == 4)
        .map(|(_, d)| d)
        .collect();
    let data = WeightedTrainingSet::supervised(k, &samples(&fit, k, true), &samples(&fit, k, false)).unwrap();
    let g = lr_train(&data, &converged()).unwrap();
    let score = |d: &Draw| sigmoid(lr_score(&g, &one_hot(d.category, k)).unwrap());
    let labeled_scores = hold.iter().filter(|d| d.s).map(|d| score(d)).collect();
    let holdout_scores = hold.iter().map(|d| score(d)).collect();
    Fitted {
        g,
        labeled_scores,
        holdout_scores,
    }
}

pub const T0: Timestamp = 1_000 * 86_400;

/// Event log for a cohort selected at `T0`: every user logs in once in the
/// preceding 30 days; each draw with `y` returns in `[T0, T0 + cp)`, inside
/// the first `op` days exactly when it is labeled.
pub fn cohort_log(rng: &mut ChaCha8Rng, draws: &[Draw], op: u32, cp: u32) -> (EventLog, Vec<Profile>) {
    let horizon = Horizon::new(T0 - days(40), T0 + days(i64::from(cp) + 1)).unwrap();
    let mut raw = Vec::new();
    let mut profiles = Vec::new();
    for (i, d) in draws.iter().enumerate() {
        let user_id = format!("u{i:06}");
        raw.push(RawEvent {
            user_id: user_id.clone(),
            ts: T0 - days(5),
            kind: EventKind::Login,
        });
        if d.y {
            let (lo, hi) = if d.s {
                (T0, T0 + days(i64::from(op)))
            } else {
                (T0 + days(i64::from(op)), T0 + days(i64::from(cp)))
            };
            raw.push(RawEvent {
                user_id: user_id.clone(),
                ts: rng.random_range(lo..hi),
                kind: EventKind::Login,
            });
        }
        profiles.push(Profile {
            user_id,
            age: 30,
            gender: Gender::Unknown,
            city: 0,
            register_ts: T0 - days(40),
            user_level: 1,
        });
    }
    (EventLog::from_raw(horizon, raw).unwrap(), profiles)
}
