//! Weighted logistic regression, second-order factorization machines and
//! Platt calibration.
//!
//! Both trainers minimize the weighted log loss
//! `sum_i weight_i * logloss(y_i, sigmoid(score(x_i)))` plus L2 penalties
//! `0.5 * l2_linear * |w|^2 + 0.5 * l2_factor * |V|^2` by sequential SGD
//! with a seeded per-epoch shuffle. Rows with identical features and label
//! are merged (weights summed) and zero-weight rows dropped before training,
//! so the optimization only depends on the weighted empirical distribution.
//! Merged rows heavier than 1 are visited in unit-or-smaller chunks.

mod fm;
mod logistic;
mod platt;

pub use fm::{fm_gradient, fm_naive_score, fm_objective, fm_predict, fm_score, fm_train, fm_train_traced, FmModel};
pub use logistic::{lr_gradient, lr_objective, lr_predict, lr_score, lr_train, lr_train_traced, LogisticModel};
pub use platt::{platt_apply, platt_fit, PlattParams};

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::io::create;
use crate::data::FeatureVector;
use crate::error::{Error, Result};
use crate::pu::{LabelFrequency, WeightedTrainingSet};

pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_linear: f64,
    pub l2_factor: f64,
    pub k: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            epochs: 20,
            l2_linear: 1e-6,
            l2_factor: 1e-5,
            k: 8,
            init_scale: 0.05,
            seed: 7,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.l2_linear >= 0.0 && self.l2_factor >= 0.0) {
            return bad("l2 penalties must be >= 0".into());
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!("init_scale must be >= 0, got {}", self.init_scale));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log sigmoid(z)` for a positive label, `-log(1 - sigmoid(z))` otherwise.
#[inline]
pub fn log_loss(z: f64, label: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if label {
        softplus - z
    } else {
        softplus
    }
}

/// A training row after merging duplicates.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub x: &'a FeatureVector,
    pub label: bool,
    pub weight: f64,
}

/// Merge rows with identical features and label, drop zero weights. Output
/// order follows first occurrence.
pub fn prepare_rows(data: &WeightedTrainingSet) -> Result<Vec<Row<'_>>> {
    let mut rows: Vec<Row<'_>> = Vec::with_capacity(data.len());
    let mut seen: HashMap<(bool, Vec<(u32, u64)>), usize> = HashMap::with_capacity(data.len());
    for inst in data.instances() {
        if inst.features.dim() != data.dim {
            return Err(Error::DimensionMismatch {
                expected: data.dim,
                found: inst.features.dim(),
            });
        }
        if inst.weight == 0.0 {
            continue;
        }
        let key = (
            inst.label,
            inst.features.entries().iter().map(|&(i, v)| (i, v.to_bits())).collect(),
        );
        match seen.get(&key) {
            Some(&at) => rows[at].weight += inst.weight,
            None => {
                seen.insert(key, rows.len());
                rows.push(Row {
                    x: &inst.features,
                    label: inst.label,
                    weight: inst.weight,
                });
            }
        }
    }
    Ok(rows)
}

/// Per-epoch SGD steps: each merged row is split into `ceil(weight)` equal
/// chunks so that no single step carries more than unit weight.
fn sgd_steps(rows: &[Row<'_>]) -> Vec<(usize, f64)> {
    let mut steps = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let n = r.weight.ceil().max(1.0);
        let w = r.weight / n;
        steps.extend(std::iter::repeat_n((i, w), n as usize));
    }
    steps
}

/// SGD driver shared by both model families. `step` applies one update for
/// a row at the given weight; `objective` evaluates the full regularized
/// loss.
pub(crate) fn run_sgd<M>(
    model: &mut M,
    rows: &[Row<'_>],
    cfg: &TrainConfig,
    mut step: impl FnMut(&mut M, &Row<'_>, f64),
    objective: impl Fn(&M, &[Row<'_>]) -> f64,
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no training rows with positive weight".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = sgd_steps(rows);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for &(i, w) in &order {
            step(model, &rows[i], w);
        }
        let loss = objective(model, rows);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        losses.push(loss);
    }
    Ok(losses)
}

/// A trained classifier of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic(LogisticModel),
    Fm(FmModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Logistic(m) => m.dim(),
            Model::Fm(m) => m.dim(),
        }
    }

    /// Pre-sigmoid score.
    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            Model::Logistic(m) => lr_score(m, x),
            Model::Fm(m) => fm_score(m, x),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        self.score(x).map(sigmoid)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Logistic(_) => "lr",
            Model::Fm(_) => "fm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorMode {
    DivideByC,
    Raw,
}

/// Churn-model probability, optionally converted from a P-versus-U score to
/// `p(y = 1 | x)` by dividing by `c` (capped at 1).
pub fn predict_posterior(model: &Model, x: &FeatureVector, c: &LabelFrequency, mode: PosteriorMode) -> Result<f64> {
    let p = model.predict(x)?;
    Ok(posterior_from_score(p, c, mode))
}

pub fn posterior_from_score(p: f64, c: &LabelFrequency, mode: PosteriorMode) -> f64 {
    match mode {
        PosteriorMode::Raw => p,
        PosteriorMode::DivideByC => (p / c.c()).min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelType {
    Lr,
    Fm,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u64,
    #[serde(rename = "type")]
    model_type: ModelType,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    cfg: TrainConfig,
    w0: f64,
    w: Vec<f64>,
    #[serde(default, rename = "V", skip_serializing_if = "Option::is_none")]
    v: Option<Vec<Vec<f64>>>,
}

/// A model with the settings it was trained under, as persisted on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: Model,
    pub cfg: TrainConfig,
    pub c: Option<f64>,
}

pub fn write_model(saved: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = match &saved.model {
        Model::Logistic(m) => ModelFile {
            version: MODEL_VERSION,
            model_type: ModelType::Lr,
            dim: m.dim(),
            k: None,
            c: saved.c,
            cfg: saved.cfg.clone(),
            w0: m.bias,
            w: m.weights.clone(),
            v: None,
        },
        Model::Fm(m) => ModelFile {
            version: MODEL_VERSION,
            model_type: ModelType::Fm,
            dim: m.dim(),
            k: Some(m.k()),
            c: saved.c,
            cfg: saved.cfg.clone(),
            w0: m.w0,
            w: m.w.clone(),
            v: Some(m.v.chunks(m.k()).map(<[f64]>::to_vec).collect()),
        },
    };
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &file).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| Error::io(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if file.version != MODEL_VERSION {
        return Err(Error::Version {
            found: file.version,
            expected: MODEL_VERSION,
        });
    }
    if file.w.len() != file.dim {
        return Err(Error::DimensionMismatch {
            expected: file.dim,
            found: file.w.len(),
        });
    }
    let model = match file.model_type {
        ModelType::Lr => Model::Logistic(LogisticModel {
            bias: file.w0,
            weights: file.w,
        }),
        ModelType::Fm => {
            let k = file.k.ok_or_else(|| Error::parse(path, 1, "fm model lacks k"))?;
            let rows = file.v.ok_or_else(|| Error::parse(path, 1, "fm model lacks V"))?;
            if rows.len() != file.dim || rows.iter().any(|r| r.len() != k) || k == 0 {
                return Err(Error::parse(path, 1, "V must be dim x k"));
            }
            Model::Fm(FmModel::from_parts(file.w0, file.w, rows.concat(), k))
        }
    };
    Ok(SavedModel {
        model,
        cfg: file.cfg,
        c: file.c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_loss_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((log_loss(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_loss(-800.0, true).is_finite());
        assert!(log_loss(800.0, false).is_finite());
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let fm = FmModel::from_parts(
            0.1,
            vec![1.0 / 3.0, -2.5e-17],
            vec![0.1, 0.2, 0.3, std::f64::consts::PI],
            2,
        );
        let saved = SavedModel {
            model: Model::Fm(fm),
            cfg: TrainConfig::default(),
            c: Some(0.37),
        };
        let p = dir.path().join("m.json");
        write_model(&saved, &p).unwrap();
        assert_eq!(read_model(&p).unwrap(), saved);
        let lr = SavedModel {
            model: Model::Logistic(LogisticModel {
                bias: -0.3,
                weights: vec![0.7, 1e-300],
            }),
            cfg: TrainConfig::default(),
            c: None,
        };
        write_model(&lr, &p).unwrap();
        assert_eq!(read_model(&p).unwrap(), lr);
    }

    #[test]
    fn posterior_modes() {
        let c = LabelFrequency::new(0.6, crate::pu::CMethod::Historical, 1).unwrap();
        assert!((posterior_from_score(0.3, &c, PosteriorMode::DivideByC) - 0.5).abs() < 1e-15);
        let c = LabelFrequency::new(0.5, crate::pu::CMethod::Historical, 1).unwrap();
        assert_eq!(posterior_from_score(0.9, &c, PosteriorMode::DivideByC), 1.0);
        assert_eq!(posterior_from_score(0.9, &c, PosteriorMode::Raw), 0.9);
    }
}
