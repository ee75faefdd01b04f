#![allow(dead_code)]

pub mod scar;

use pu_churn::data::{FeatureVector, WeightedInstance};
use pu_churn::pu::{Provenance, WeightedRow, WeightedTrainingSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fv(dim: usize, entries: &[(u32, f64)]) -> FeatureVector {
    FeatureVector::new(dim, entries.to_vec()).unwrap()
}

pub fn dense(x: &[f64]) -> FeatureVector {
    let entries = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, &v)| (j as u32, v))
        .collect::<Vec<_>>();
    FeatureVector::new(x.len(), entries).unwrap()
}

pub fn weighted(dim: usize, rows: Vec<(FeatureVector, bool, f64)>) -> WeightedTrainingSet {
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, (x, label, weight))| WeightedRow {
            user_id: format!("r{i}"),
            instance: WeightedInstance::new(x, label, weight).unwrap(),
            provenance: if label {
                Provenance::Positive
            } else {
                Provenance::Negative
            },
        })
        .collect();
    WeightedTrainingSet {
        dim,
        label_frequency: None,
        rows,
    }
}

/// Random sparse vector with about `density` of `dim` coordinates set.
pub fn random_fv(rng: &mut ChaCha8Rng, dim: usize, density: f64) -> FeatureVector {
    let mut entries = Vec::new();
    for j in 0..dim as u32 {
        if rng.random::<f64>() < density {
            entries.push((j, rng.random_range(-1.5..1.5)));
        }
    }
    FeatureVector::new(dim, entries).unwrap()
}

/// Random weighted set of `n` rows over `dim` features.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> WeightedTrainingSet {
    let rows = (0..n)
        .map(|_| {
            (
                random_fv(rng, dim, 0.5),
                rng.random::<bool>(),
                rng.random_range(0.0..=1.0),
            )
        })
        .collect();
    weighted(dim, rows)
}

/// Relative error with an absolute floor, per coordinate.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
