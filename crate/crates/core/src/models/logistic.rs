use crate::data::FeatureVector;
use crate::error::{Error, Result};
use crate::pu::WeightedTrainingSet;

use super::{log_loss, prepare_rows, run_sgd, sigmoid, Row, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            bias: 0.0,
            weights: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[inline]
pub(crate) fn linear(bias: f64, w: &[f64], x: &FeatureVector) -> f64 {
    bias + x.entries().iter().map(|&(j, v)| w[j as usize] * v).sum::<f64>()
}

fn check_dim(expected: usize, x: &FeatureVector) -> Result<()> {
    if x.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.dim(),
        });
    }
    Ok(())
}

pub fn lr_score(model: &LogisticModel, x: &FeatureVector) -> Result<f64> {
    check_dim(model.dim(), x)?;
    Ok(linear(model.bias, &model.weights, x))
}

pub fn lr_predict(model: &LogisticModel, x: &FeatureVector) -> Result<f64> {
    lr_score(model, x).map(sigmoid)
}

/// Gradient step for the linear part, shared with the FM trainer.
#[inline]
pub(crate) fn linear_step(bias: &mut f64, w: &mut [f64], x: &FeatureVector, g: f64, lr: f64, l2: f64) {
    *bias -= lr * g;
    for &(j, v) in x.entries() {
        let wj = &mut w[j as usize];
        *wj -= lr * (g * v + l2 * *wj);
    }
}

pub fn lr_train(data: &WeightedTrainingSet, cfg: &TrainConfig) -> Result<LogisticModel> {
    lr_train_traced(data, cfg).map(|(m, _)| m)
}

/// Trains and returns the regularized objective after each epoch.
pub fn lr_train_traced(data: &WeightedTrainingSet, cfg: &TrainConfig) -> Result<(LogisticModel, Vec<f64>)> {
    cfg.validate()?;
    let rows = prepare_rows(data)?;
    let mut model = LogisticModel::zeros(data.dim);
    let lr = cfg.learning_rate;
    let l2 = cfg.l2_linear;
    let losses = run_sgd(
        &mut model,
        &rows,
        cfg,
        |m, row, weight| {
            let z = linear(m.bias, &m.weights, row.x);
            let g = weight * (sigmoid(z) - f64::from(u8::from(row.label)));
            linear_step(&mut m.bias, &mut m.weights, row.x, g, lr, l2);
        },
        |m, rows| objective_rows(m, rows, l2),
    )?;
    Ok((model, losses))
}

fn objective_rows(m: &LogisticModel, rows: &[Row<'_>], l2: f64) -> f64 {
    let data: f64 = rows
        .iter()
        .map(|r| r.weight * log_loss(linear(m.bias, &m.weights, r.x), r.label))
        .sum();
    data + 0.5 * l2 * m.weights.iter().map(|w| w * w).sum::<f64>()
}

/// `sum_i w_i * logloss_i + 0.5 * l2 * |w|^2` over the whole set.
pub fn lr_objective(m: &LogisticModel, data: &WeightedTrainingSet, l2: f64) -> Result<f64> {
    let rows = prepare_rows(data)?;
    Ok(objective_rows(m, &rows, l2))
}

/// Analytic gradient of [`lr_objective`]: `(d/d bias, d/d w)`.
pub fn lr_gradient(m: &LogisticModel, data: &WeightedTrainingSet, l2: f64) -> Result<(f64, Vec<f64>)> {
    let rows = prepare_rows(data)?;
    let mut gb = 0.0;
    let mut gw: Vec<f64> = m.weights.iter().map(|w| l2 * w).collect();
    for r in &rows {
        let g = r.weight * (sigmoid(linear(m.bias, &m.weights, r.x)) - f64::from(u8::from(r.label)));
        gb += g;
        for &(j, v) in r.x.entries() {
            gw[j as usize] += g * v;
        }
    }
    Ok((gb, gw))
}
