use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::FeatureVector;
use crate::error::{Error, Result};
use crate::pu::WeightedTrainingSet;

use super::logistic::{linear, linear_step};
use super::{log_loss, prepare_rows, run_sgd, sigmoid, Row, TrainConfig};

/// Second-order factorization machine. `v` is row-major `dim x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FmModel {
    pub w0: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    k: usize,
}

impl FmModel {
    pub fn from_parts(w0: f64, w: Vec<f64>, v: Vec<f64>, k: usize) -> Self {
        assert!(k > 0 && v.len() == w.len() * k, "V must be dim x k");
        Self { w0, w, v, k }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn factor(&self, j: usize) -> &[f64] {
        &self.v[j * self.k..(j + 1) * self.k]
    }

    fn init(dim: usize, cfg: &TrainConfig) -> Self {
        let mut v = vec![0.0; dim * cfg.k];
        if cfg.init_scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            let normal = Normal::new(0.0, cfg.init_scale).expect("finite scale");
            v.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        }
        Self::from_parts(0.0, vec![0.0; dim], v, cfg.k)
    }
}

/// Pairwise term via `0.5 * sum_f [(sum_j v_jf x_j)^2 - sum_j v_jf^2 x_j^2]`;
/// fills `sums` with the per-factor `sum_j v_jf x_j`.
fn pairwise(m: &FmModel, x: &FeatureVector, sums: &mut [f64]) -> f64 {
    sums.iter_mut().for_each(|s| *s = 0.0);
    let mut sq = 0.0;
    for &(j, xj) in x.entries() {
        for (s, &vjf) in sums.iter_mut().zip(m.factor(j as usize)) {
            let t = vjf * xj;
            *s += t;
            sq += t * t;
        }
    }
    0.5 * (sums.iter().map(|s| s * s).sum::<f64>() - sq)
}

fn score_with(m: &FmModel, x: &FeatureVector, sums: &mut [f64]) -> f64 {
    linear(m.w0, &m.w, x) + pairwise(m, x, sums)
}

pub fn fm_score(m: &FmModel, x: &FeatureVector) -> Result<f64> {
    if x.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: x.dim(),
        });
    }
    let mut sums = vec![0.0; m.k];
    Ok(score_with(m, x, &mut sums))
}

pub fn fm_predict(m: &FmModel, x: &FeatureVector) -> Result<f64> {
    fm_score(m, x).map(sigmoid)
}

/// Direct `O(nnz^2 k)` evaluation of the pairwise sum, for cross-checking.
pub fn fm_naive_score(m: &FmModel, x: &FeatureVector) -> f64 {
    let e = x.entries();
    let mut s = linear(m.w0, &m.w, x);
    for a in 0..e.len() {
        for b in a + 1..e.len() {
            let dot: f64 = m
                .factor(e[a].0 as usize)
                .iter()
                .zip(m.factor(e[b].0 as usize))
                .map(|(p, q)| p * q)
                .sum();
            s += dot * e[a].1 * e[b].1;
        }
    }
    s
}

pub fn fm_train(data: &WeightedTrainingSet, cfg: &TrainConfig) -> Result<FmModel> {
    fm_train_traced(data, cfg).map(|(m, _)| m)
}

pub fn fm_train_traced(data: &WeightedTrainingSet, cfg: &TrainConfig) -> Result<(FmModel, Vec<f64>)> {
    cfg.validate()?;
    let rows = prepare_rows(data)?;
    let mut model = FmModel::init(data.dim, cfg);
    let (lr, l2, l2f, k) = (cfg.learning_rate, cfg.l2_linear, cfg.l2_factor, cfg.k);
    let mut sums = vec![0.0; k];
    let losses = run_sgd(
        &mut model,
        &rows,
        cfg,
        |m, row, weight| {
            let z = score_with(m, row.x, &mut sums);
            let g = weight * (sigmoid(z) - f64::from(u8::from(row.label)));
            linear_step(&mut m.w0, &mut m.w, row.x, g, lr, l2);
            for &(j, xj) in row.x.entries() {
                let vj = &mut m.v[j as usize * k..(j as usize + 1) * k];
                for (vjf, &s) in vj.iter_mut().zip(&sums) {
                    *vjf -= lr * (g * xj * (s - *vjf * xj) + l2f * *vjf);
                }
            }
        },
        |m, rows| objective_rows(m, rows, l2, l2f),
    )?;
    Ok((model, losses))
}

fn objective_rows(m: &FmModel, rows: &[Row<'_>], l2: f64, l2f: f64) -> f64 {
    let mut sums = vec![0.0; m.k];
    let data: f64 = rows
        .iter()
        .map(|r| r.weight * log_loss(score_with(m, r.x, &mut sums), r.label))
        .sum();
    data + 0.5 * l2 * m.w.iter().map(|w| w * w).sum::<f64>() + 0.5 * l2f * m.v.iter().map(|v| v * v).sum::<f64>()
}

/// Weighted log loss plus `0.5 * l2 * |w|^2 + 0.5 * l2f * |V|^2`.
pub fn fm_objective(m: &FmModel, data: &WeightedTrainingSet, l2: f64, l2f: f64) -> Result<f64> {
    let rows = prepare_rows(data)?;
    Ok(objective_rows(m, &rows, l2, l2f))
}

/// Analytic gradient of [`fm_objective`] as an [`FmModel`]-shaped value.
pub fn fm_gradient(m: &FmModel, data: &WeightedTrainingSet, l2: f64, l2f: f64) -> Result<FmModel> {
    let rows = prepare_rows(data)?;
    let mut grad = FmModel::from_parts(
        0.0,
        m.w.iter().map(|w| l2 * w).collect(),
        m.v.iter().map(|v| l2f * v).collect(),
        m.k,
    );
    let mut sums = vec![0.0; m.k];
    for r in &rows {
        let g = r.weight * (sigmoid(score_with(m, r.x, &mut sums)) - f64::from(u8::from(r.label)));
        grad.w0 += g;
        for &(j, xj) in r.x.entries() {
            let j = j as usize;
            grad.w[j] += g * xj;
            let row = j * m.k..(j + 1) * m.k;
            for ((gv, v), s) in grad.v[row.clone()].iter_mut().zip(&m.v[row]).zip(&sums) {
                *gv += g * xj * (s - v * xj);
            }
        }
    }
    Ok(grad)
}
