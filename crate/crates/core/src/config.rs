//! Flat `key = value` configuration files (TOML syntax).
//!
//! Every key is optional and falls back to its default; unknown keys are
//! rejected. Command-line flags are applied on top of a parsed file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TrainConfig;
use crate::pipeline::{Mode, RunConfig};
use crate::pu::CMethod;
use crate::sim::{ChurnHazard, LoginRate, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,

    pub n_users: usize,
    pub t_start: i64,
    pub t_end: i64,
    pub login_median: f64,
    pub login_sigma: f64,
    pub pay_prob: f64,
    pub drift_strength: f64,
    pub hazard_base: f64,
    pub hazard_engagement_exponent: f64,
    pub hazard_profile_effect: f64,

    pub mode: Mode,
    pub ref_time: i64,
    pub op: u32,
    pub cp: u32,
    pub lookbacks: Vec<u32>,
    pub dim: usize,
    pub c_method: CMethod,
    pub platt: bool,
    pub rule_l: u32,
    pub rule_m: u32,
    pub rule_d: u32,

    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_linear: f64,
    pub l2_factor: f64,
    pub k: usize,
    pub init_scale: f64,
    pub shuffle: bool,
}

impl Default for Config {
    fn default() -> Self {
        let sim = SimConfig::default();
        let run = RunConfig::default();
        let train = TrainConfig::default();
        Self {
            seed: sim.seed,
            out_dir: None,
            n_users: sim.n_users,
            t_start: sim.t_start,
            t_end: sim.t_end,
            login_median: sim.base_login_rate.median,
            login_sigma: sim.base_login_rate.sigma,
            pay_prob: sim.pay_prob,
            drift_strength: sim.drift_strength,
            hazard_base: sim.churn_hazard.base,
            hazard_engagement_exponent: sim.churn_hazard.engagement_exponent,
            hazard_profile_effect: sim.churn_hazard.profile_effect,
            mode: run.mode,
            ref_time: run.ref_time,
            op: run.op_days,
            cp: run.cp_days,
            lookbacks: run.lookbacks,
            dim: run.dim,
            c_method: run.c_method,
            platt: run.platt,
            rule_l: run.rule_l,
            rule_m: run.rule_m,
            rule_d: run.rule_d,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            l2_linear: train.l2_linear,
            l2_factor: train.l2_factor,
            k: train.k,
            init_scale: train.init_scale,
            shuffle: train.shuffle,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sim().validate()?;
        self.run().validate()
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            n_users: self.n_users,
            t_start: self.t_start,
            t_end: self.t_end,
            base_login_rate: LoginRate {
                median: self.login_median,
                sigma: self.login_sigma,
            },
            pay_prob: self.pay_prob,
            drift_strength: self.drift_strength,
            churn_hazard: ChurnHazard {
                base: self.hazard_base,
                engagement_exponent: self.hazard_engagement_exponent,
                profile_effect: self.hazard_profile_effect,
            },
            seed: self.seed,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2_linear: self.l2_linear,
            l2_factor: self.l2_factor,
            k: self.k,
            init_scale: self.init_scale,
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }

    pub fn run(&self) -> RunConfig {
        RunConfig {
            mode: self.mode,
            ref_time: self.ref_time,
            op_days: self.op,
            cp_days: self.cp,
            lookbacks: self.lookbacks.clone(),
            dim: self.dim,
            c_method: self.c_method,
            platt: self.platt,
            train: self.train(),
            rule_l: self.rule_l,
            rule_m: self.rule_m,
            rule_d: self.rule_d,
            out_dir: self.out_dir.clone(),
        }
    }
}
