//! Positive-unlabeled weighting under the selected-completely-at-random
//! assumption: label-frequency estimation and the duplicated, weighted
//! training set fed to the final classifier.
//!
//! Notation: `g'` is the raw output of the logistic model trained on P
//! versus U, `g = c * g'`, and an unlabeled instance receives positive
//! weight `w = ((1 - c) / c) * g / (1 - g)`, i.e. `(1 - c) g' / (1 - c g')`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::io::{create, lines, parse_line, write_json_line};
use crate::data::{FeatureVector, Sample, WeightedInstance};
use crate::error::{Error, Result};

pub const WEIGHTED_SET_VERSION: u64 = 1;

/// Smallest usable label frequency; lower estimates are raised to it.
pub const MIN_C: f64 = 0.01;
/// `g'` is clamped to `[G_PRIME_EPS, 1 - G_PRIME_EPS]` before weighting.
pub const G_PRIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CMethod {
    E1,
    E2,
    E3,
    Historical,
}

impl fmt::Display for CMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CMethod::E1 => "e1",
            CMethod::E2 => "e2",
            CMethod::E3 => "e3",
            CMethod::Historical => "historical",
        })
    }
}

impl FromStr for CMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e1" => Ok(CMethod::E1),
            "e2" => Ok(CMethod::E2),
            "e3" => Ok(CMethod::E3),
            "historical" => Ok(CMethod::Historical),
            other => Err(Error::Config(format!(
                "unknown c method `{other}` (expected e1, e2, e3 or historical)"
            ))),
        }
    }
}

/// Estimated `c = p(s = 1 | y = 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelFrequency {
    c: f64,
    method: CMethod,
    support: usize,
}

impl LabelFrequency {
    /// Values in `(0, MIN_C)` are raised to `MIN_C`; values above 1 or not
    /// positive are errors.
    pub fn new(c: f64, method: CMethod, support: usize) -> Result<Self> {
        if !c.is_finite() || c > 1.0 {
            return Err(Error::InsufficientData(format!(
                "label frequency {c} exceeds 1 ({method} estimate)"
            )));
        }
        if c < 0.0 {
            return Err(Error::Invalid(format!("negative label frequency {c}")));
        }
        Ok(Self {
            c: c.max(MIN_C),
            method,
            support,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn method(&self) -> CMethod {
        self.method
    }

    pub fn support(&self) -> usize {
        self.support
    }
}

/// Weight of the positive copy of an unlabeled instance with raw score `g'`.
///
/// Monotone nondecreasing in `g'`, always in `[0, 1]`; `c = 1` gives 0 for
/// every `g' < 1`.
pub fn compute_weight(g_prime: f64, c: &LabelFrequency) -> f64 {
    weight_closed_form(g_prime.clamp(G_PRIME_EPS, 1.0 - G_PRIME_EPS), c.c())
}

/// `(1 - c) g' / (1 - c g')`, unclamped.
pub fn weight_closed_form(g_prime: f64, c: f64) -> f64 {
    ((1.0 - c) * g_prime / (1.0 - c * g_prime)).clamp(0.0, 1.0)
}

/// Mean of `g` over labeled validation positives.
pub fn estimate_c_e1(g_scores_labeled: &[f64]) -> Result<LabelFrequency> {
    if g_scores_labeled.is_empty() {
        return Err(Error::InsufficientData("e1 needs at least one labeled score".into()));
    }
    let mean = g_scores_labeled.iter().sum::<f64>() / g_scores_labeled.len() as f64;
    LabelFrequency::new(mean, CMethod::E1, g_scores_labeled.len())
}

/// Sum of `g` over labeled validation positives divided by the sum over the
/// whole validation set.
pub fn estimate_c_e2(g_scores_labeled: &[f64], g_scores_validation: &[f64]) -> Result<LabelFrequency> {
    let num: f64 = g_scores_labeled.iter().sum();
    let den: f64 = g_scores_validation.iter().sum();
    if den <= 0.0 {
        return Err(Error::DegenerateScores("validation scores sum to zero".into()));
    }
    LabelFrequency::new(num / den, CMethod::E2, g_scores_validation.len())
}

/// Maximum of `g` over the validation set.
pub fn estimate_c_e3(g_scores_validation: &[f64]) -> Result<LabelFrequency> {
    let max = g_scores_validation
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or_else(|| Error::InsufficientData("e3 needs at least one score".into()))?;
    LabelFrequency::new(max, CMethod::E3, g_scores_validation.len())
}

/// Ratio of short-window to full-window positives of a prior cohort.
pub fn estimate_c_historical(p_short: usize, p_full: usize) -> Result<LabelFrequency> {
    if p_full == 0 {
        return Err(Error::NoHistory);
    }
    if p_short > p_full {
        return Err(Error::InconsistentCohort {
            short: p_short,
            full: p_full,
        });
    }
    LabelFrequency::new(p_short as f64 / p_full as f64, CMethod::Historical, p_full)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Positive,
    UnlabeledAsPositive,
    UnlabeledAsNegative,
    /// Confirmed negative of a fully labeled window.
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRow {
    pub user_id: String,
    pub instance: WeightedInstance,
    pub provenance: Provenance,
}

/// Rows consumed by the trainers. `label_frequency` is `None` for fully
/// labeled (supervised) sets.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrainingSet {
    pub dim: usize,
    pub label_frequency: Option<LabelFrequency>,
    pub rows: Vec<WeightedRow>,
}

impl WeightedTrainingSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn instances(&self) -> impl Iterator<Item = &WeightedInstance> {
        self.rows.iter().map(|r| &r.instance)
    }

    /// Unit-weight rows of a fully labeled window.
    pub fn supervised(dim: usize, positives: &[Sample], negatives: &[Sample]) -> Result<Self> {
        let mut rows = Vec::with_capacity(positives.len() + negatives.len());
        for (samples, label, provenance) in [
            (positives, true, Provenance::Positive),
            (negatives, false, Provenance::Negative),
        ] {
            for s in samples {
                rows.push(row(dim, s, label, 1.0, provenance)?);
            }
        }
        Ok(Self {
            dim,
            label_frequency: None,
            rows,
        })
    }
}

fn row(dim: usize, s: &Sample, label: bool, weight: f64, provenance: Provenance) -> Result<WeightedRow> {
    if s.features.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: s.features.dim(),
        });
    }
    Ok(WeightedRow {
        user_id: s.user_id.clone(),
        instance: WeightedInstance::new(s.features.clone(), label, weight)?,
        provenance,
    })
}

/// P rows with unit weight, then for each unlabeled sample (in the given
/// order) a positive copy weighted `w` and a negative copy weighted `1 - w`.
pub fn build_weighted_training_set(
    dim: usize,
    positives: &[Sample],
    unlabeled: &[Sample],
    g_prime: &HashMap<String, f64>,
    c: LabelFrequency,
) -> Result<WeightedTrainingSet> {
    let mut rows = Vec::with_capacity(positives.len() + 2 * unlabeled.len());
    for s in positives {
        rows.push(row(dim, s, true, 1.0, Provenance::Positive)?);
    }
    for s in unlabeled {
        let score = *g_prime
            .get(&s.user_id)
            .ok_or_else(|| Error::IncompleteScores(s.user_id.clone()))?;
        let w = compute_weight(score, &c);
        rows.push(row(dim, s, true, w, Provenance::UnlabeledAsPositive)?);
        rows.push(row(dim, s, false, 1.0 - w, Provenance::UnlabeledAsNegative)?);
    }
    Ok(WeightedTrainingSet {
        dim,
        label_frequency: Some(c),
        rows,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u64,
    c: f64,
    c_method: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowLine {
    user_id: String,
    label: u8,
    weight: f64,
    provenance: Provenance,
    features: Vec<(u32, f64)>,
}

/// Fully labeled sets are written with `c = 1` and method `none`.
pub fn write_weighted_set(set: &WeightedTrainingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let (c, c_method) = match &set.label_frequency {
        Some(lf) => (lf.c(), lf.method().to_string()),
        None => (1.0, "none".to_string()),
    };
    let header = Header {
        version: WEIGHTED_SET_VERSION,
        c,
        c_method,
        dim: set.dim,
    };
    write_json_line(&mut w, path, &header)?;
    for r in &set.rows {
        let line = RowLine {
            user_id: r.user_id.clone(),
            label: r.instance.label as u8,
            weight: r.instance.weight,
            provenance: r.provenance,
            features: r.instance.features.entries().to_vec(),
        };
        write_json_line(&mut w, path, &line)?;
    }
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_weighted_set(path: impl AsRef<Path>) -> Result<WeightedTrainingSet> {
    let path = path.as_ref();
    let mut it = lines(path)?;
    let (line_no, first) = it
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing weighted-set header"))??;
    let header: Header = parse_line(path, line_no, &first)?;
    if header.version != WEIGHTED_SET_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: WEIGHTED_SET_VERSION,
        });
    }
    let label_frequency = match header.c_method.as_str() {
        "none" => None,
        m => Some(LabelFrequency::new(header.c, m.parse()?, 0)?),
    };
    let mut rows = Vec::new();
    for item in it {
        let (line_no, line) = item?;
        let rec: RowLine = parse_line(path, line_no, &line)?;
        let features =
            FeatureVector::new(header.dim, rec.features).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let label = match rec.label {
            0 => false,
            1 => true,
            other => return Err(Error::parse(path, line_no, format!("label {other} is not 0 or 1"))),
        };
        rows.push(WeightedRow {
            user_id: rec.user_id,
            instance: WeightedInstance::new(features, label, rec.weight)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?,
            provenance: rec.provenance,
        });
    }
    Ok(WeightedTrainingSet {
        dim: header.dim,
        label_frequency,
        rows,
    })
}
