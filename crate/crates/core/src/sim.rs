//! Synthetic populations and event logs with known churn times.
//!
//! Each user has a log-normal engagement level. Logins follow a daily
//! Poisson process with rate `median * engagement * m(day)`; churn is an
//! absorbing daily-hazard process whose hazard falls with engagement and
//! rises with a profile risk score. The risk score is a time-varying
//! rotation between a city effect and an age-by-gender effect, so the
//! profile-to-churn mapping moves when `drift_strength > 0`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{days, Event, EventKind, EventLog, Gender, Horizon, Profile, Timestamp, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::features::{age_bucket, ActivityIndex, AGE_BUCKETS, CITY_SLOTS, GENDERS};

/// 2016-03-04T00:00:00Z.
pub const DEFAULT_START: Timestamp = 1_457_049_600;
/// 2016-10-30T00:00:00Z, 240 days after the default start.
pub const DEFAULT_END: Timestamp = DEFAULT_START + 240 * SECONDS_PER_DAY;

/// Days over which the risk rotation turns by a quarter circle at unit drift.
const ROTATION_PERIOD_DAYS: f64 = 90.0;
/// Log-scale change of the login rate across the horizon at unit drift.
const RATE_TREND: f64 = 0.3;
/// Log-scale change of the pay probability across the horizon at unit drift.
const PAY_TREND: f64 = 0.5;
/// Log-scale rise of the churn hazard across the horizon at unit drift.
const HAZARD_TREND: f64 = 0.3;
/// Weight of the time-invariant level-by-city risk term.
const INTERACTION_WEIGHT: f64 = 0.7;
const LEVELS: usize = 5;
const MAX_REGISTER_AGE_DAYS: i64 = 3 * 365;
const EVENT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoginRate {
    /// Daily logins of a user with engagement 1.
    pub median: f64,
    /// Log-scale spread of engagement across users.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChurnHazard {
    /// Daily churn probability at engagement 1 and zero profile risk.
    pub base: f64,
    /// Hazard scales as `engagement^-engagement_exponent`.
    pub engagement_exponent: f64,
    /// Hazard scales as `exp(profile_effect * risk)`.
    pub profile_effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_users: usize,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub base_login_rate: LoginRate,
    pub pay_prob: f64,
    pub drift_strength: f64,
    pub churn_hazard: ChurnHazard,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 50_000,
            t_start: DEFAULT_START,
            t_end: DEFAULT_END,
            base_login_rate: LoginRate {
                median: 0.3,
                sigma: 0.8,
            },
            pay_prob: 0.3,
            drift_strength: 0.6,
            churn_hazard: ChurnHazard {
                base: 0.002,
                engagement_exponent: 0.0,
                profile_effect: 3.5,
            },
            seed: 7,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        Horizon::new(self.t_start, self.t_end)?;
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        prob("pay_prob", self.pay_prob)?;
        prob("hazard_base", self.churn_hazard.base)?;
        nonneg("base_login_rate", self.base_login_rate.median)?;
        nonneg("engagement_sigma", self.base_login_rate.sigma)?;
        nonneg("drift", self.drift_strength)?;
        nonneg("hazard_engagement_exponent", self.churn_hazard.engagement_exponent)?;
        nonneg("hazard_profile_effect", self.churn_hazard.profile_effect)?;
        Ok(())
    }

    pub fn horizon(&self) -> Horizon {
        Horizon {
            start: self.t_start,
            end: self.t_end,
        }
    }
}

/// Latent ground truth of one simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: String,
    pub engagement: f64,
    pub churn_ts: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChurnLabel {
    Churned,
    Retained,
}

pub fn user_id(index: usize) -> String {
    format!("u{index:07}")
}

/// Population-level latent structure derived from the config seed.
struct World<'a> {
    cfg: &'a SimConfig,
    n_days: usize,
    city_risk: Vec<f64>,
    age_gender_risk: Vec<f64>,
    level_city_risk: Vec<f64>,
}

impl<'a> World<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // Standardized so every seed has the same overall risk spread.
        let mut table = |n: usize| -> Vec<f64> {
            let mut t: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mean = t.iter().sum::<f64>() / n as f64;
            let sd = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            t.iter_mut().for_each(|x| *x = (*x - mean) / sd);
            t
        };
        let city_risk = table(CITY_SLOTS);
        let age_gender_risk = table(AGE_BUCKETS * GENDERS);
        let level_city_risk = table(LEVELS * CITY_SLOTS);
        Self {
            cfg,
            n_days: cfg.horizon().n_days(),
            city_risk,
            age_gender_risk,
            level_city_risk,
        }
    }

    fn user_rng(&self, salt: u64, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ salt);
        rng.set_stream(index as u64 + 1);
        rng
    }

    fn frac(&self, day: usize) -> f64 {
        day as f64 / self.n_days as f64
    }

    fn risk(&self, p: &Profile, day: usize) -> f64 {
        let theta = self.cfg.drift_strength * FRAC_PI_2 * day as f64 / ROTATION_PERIOD_DAYS;
        let city = self.city_risk[p.city as usize % CITY_SLOTS];
        let ag = self.age_gender_risk[age_bucket(p.age) * GENDERS + p.gender.index()];
        let slot =
            (p.user_level as usize).saturating_sub(1).min(LEVELS - 1) * CITY_SLOTS + p.city as usize % CITY_SLOTS;
        theta.cos() * city + theta.sin() * ag + INTERACTION_WEIGHT * self.level_city_risk[slot]
    }

    fn hazard(&self, p: &Profile, engagement: f64, day: usize) -> f64 {
        let h = &self.cfg.churn_hazard;
        if h.base == 0.0 {
            return 0.0;
        }
        let drift = self.cfg.drift_strength * HAZARD_TREND * self.frac(day);
        let log_mult = -h.engagement_exponent * engagement.ln() + h.profile_effect * self.risk(p, day) + drift;
        (h.base * log_mult.exp()).min(1.0)
    }

    fn login_rate(&self, engagement: f64, day: usize) -> f64 {
        let m = (self.cfg.drift_strength * RATE_TREND * (self.frac(day) - 0.5)).exp();
        self.cfg.base_login_rate.median * engagement * m
    }

    fn pay_prob(&self, day: usize) -> f64 {
        let m = (self.cfg.drift_strength * PAY_TREND * (self.frac(day) - 0.5)).exp();
        (self.cfg.pay_prob * m).min(1.0)
    }
}

fn draw_gender(rng: &mut ChaCha8Rng) -> Gender {
    match rng.random_range(0..100) {
        0..=47 => Gender::Male,
        48..=95 => Gender::Female,
        _ => Gender::Unknown,
    }
}

/// Profiles and churn truth for `n_users` users, sorted by user id.
pub fn generate_population(cfg: &SimConfig) -> Result<(Vec<Profile>, Vec<UserTruth>)> {
    cfg.validate()?;
    let world = World::new(cfg);
    let engagement_dist = LogNormal::new(0.0, cfg.base_login_rate.sigma)
        .map_err(|e| Error::Config(format!("engagement distribution: {e}")))?;
    let mut profiles = Vec::with_capacity(cfg.n_users);
    let mut truths = Vec::with_capacity(cfg.n_users);
    for i in 0..cfg.n_users {
        let mut rng = world.user_rng(0, i);
        let engagement: f64 = engagement_dist.sample(&mut rng);
        let noise: f64 = rng.sample::<f64, _>(StandardNormal);
        let level = (2.0 + 1.2 * engagement.ln() + 0.7 * noise).clamp(0.0, 4.99) as u32 + 1;
        let profile = Profile {
            user_id: user_id(i),
            age: rng.random_range(16..=70),
            gender: draw_gender(&mut rng),
            city: rng.random_range(0..CITY_SLOTS as u32),
            register_ts: cfg.t_start
                - days(rng.random_range(0..=MAX_REGISTER_AGE_DAYS))
                - rng.random_range(0..SECONDS_PER_DAY),
            user_level: level,
        };
        let mut churn_ts = None;
        for day in 0..world.n_days {
            if rng.random::<f64>() < world.hazard(&profile, engagement, day) {
                churn_ts = Some(cfg.t_start + days(day as i64));
                break;
            }
        }
        truths.push(UserTruth {
            user_id: profile.user_id.clone(),
            engagement,
            churn_ts,
        });
        profiles.push(profile);
    }
    Ok((profiles, truths))
}

/// Daily Poisson logins until churn; each login is followed by a pay event
/// at the same instant with the (drifting) pay probability.
pub fn simulate_events(profiles: &[Profile], truths: &[UserTruth], cfg: &SimConfig) -> Result<EventLog> {
    cfg.validate()?;
    if profiles.len() != truths.len() {
        return Err(Error::Invalid(format!(
            "{} profiles but {} truth records",
            profiles.len(),
            truths.len()
        )));
    }
    let world = World::new(cfg);
    let mut order: Vec<usize> = (0..profiles.len()).collect();
    order.sort_by(|&a, &b| profiles[a].user_id.cmp(&profiles[b].user_id));
    let mut users = Vec::with_capacity(profiles.len());
    for w in order.windows(2) {
        if profiles[w[0]].user_id == profiles[w[1]].user_id {
            return Err(Error::Invalid(format!("duplicate user {}", profiles[w[0]].user_id)));
        }
    }
    let amount_dist = LogNormal::new(3.0, 1.0).expect("valid parameters");
    let mut events = Vec::new();
    for (interned, &i) in order.iter().enumerate() {
        let (p, t) = (&profiles[i], &truths[i]);
        if p.user_id != t.user_id {
            return Err(Error::Invalid(format!(
                "profile {} aligned with truth {}",
                p.user_id, t.user_id
            )));
        }
        users.push(p.user_id.clone());
        let mut rng = world.user_rng(EVENT_SEED_SALT, interned);
        let last_day = match t.churn_ts {
            Some(ts) => ((ts - cfg.t_start).max(0) / SECONDS_PER_DAY) as usize,
            None => world.n_days,
        }
        .min(world.n_days);
        for day in 0..last_day {
            let day_start = cfg.t_start + days(day as i64);
            let day_len = SECONDS_PER_DAY.min(cfg.t_end - day_start);
            let lambda = world.login_rate(t.engagement, day) * day_len as f64 / SECONDS_PER_DAY as f64;
            if lambda <= 0.0 {
                continue;
            }
            let n = Poisson::new(lambda)
                .map_err(|e| Error::Config(format!("login rate: {e}")))?
                .sample(&mut rng) as u64;
            let pay_prob = world.pay_prob(day);
            for _ in 0..n {
                let ts = day_start + rng.random_range(0..day_len);
                events.push(Event {
                    ts,
                    user: interned as u32,
                    kind: EventKind::Login,
                });
                if pay_prob > 0.0 && rng.random::<f64>() < pay_prob {
                    events.push(Event {
                        ts,
                        user: interned as u32,
                        kind: EventKind::Pay {
                            amount: amount_dist.sample(&mut rng),
                        },
                    });
                }
            }
        }
    }
    Ok(EventLog::from_interned(cfg.horizon(), users, events))
}

/// Churned iff the user churned by `t` or logs in nowhere in `[t, t + cp)`.
pub fn ground_truth_labels(
    truths: &[(String, Option<Timestamp>)],
    log: &EventLog,
    t: Timestamp,
    cp_days: u32,
) -> Result<BTreeMap<String, ChurnLabel>> {
    let end = t + days(cp_days as i64);
    log.horizon().require_window(t, end)?;
    let index = ActivityIndex::new(log);
    Ok(truths
        .iter()
        .map(|(user, churn_ts)| {
            let churned = churn_ts.is_some_and(|c| c <= t) || !index.any_login(user, t, end);
            let label = if churned {
                ChurnLabel::Churned
            } else {
                ChurnLabel::Retained
            };
            (user.clone(), label)
        })
        .collect())
}
