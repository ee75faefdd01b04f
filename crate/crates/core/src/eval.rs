//! AUC, the recency and frequency rule baselines, and evaluation reports.
//!
//! Throughout, the positive class is "active" (a login inside the test
//! window) and scores rank users from most to least likely to stay. Rules
//! predict churn, so their scores are `1 - prediction`.

use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::create;
use crate::data::{days, FeatureVector, SampleSet, Timestamp};
use crate::error::{Error, Result};
use crate::features::{days_since_last_login, ActivityIndex};
use crate::models::Model;

/// Area under the ROC curve with `labels[i] == true` as the positive class.
/// Tied scores are credited one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Invalid(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "need both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based average ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// 1 (churn) iff the user has not logged in for at least `l` days. Users
/// with no login on record count as churned.
pub fn recency_predict(days_since_last_login: Option<i64>, l: u32) -> u8 {
    match days_since_last_login {
        Some(d) => u8::from(d >= i64::from(l)),
        None => 1,
    }
}

/// 1 (churn) iff the user logged in fewer than `m` times in the last `D` days.
pub fn frequency_predict(login_count: usize, m: u32) -> u8 {
    u8::from(login_count < m as usize)
}

pub const RECENCY_GRID: [u32; 5] = [1, 3, 7, 15, 30];
pub const FREQUENCY_GRID: [u32; 5] = [1, 2, 3, 4, 5];
pub const FREQUENCY_DAYS: u32 = 15;
pub const FREQUENCY_DAYS_GRID: [u32; 3] = [7, 15, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Rule {
    Recency { l: u32 },
    Frequency { m: u32, d: u32 },
}

impl Rule {
    pub fn method(&self) -> &'static str {
        match self {
            Rule::Recency { .. } => "Recency rule",
            Rule::Frequency { .. } => "Frequency rule",
        }
    }

    pub fn params(&self) -> String {
        match self {
            Rule::Recency { l } => format!("L={l}"),
            Rule::Frequency { m, d } => format!("M={m}, D={d}"),
        }
    }
}

/// A fully labeled evaluation population observed at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub t: Timestamp,
    pub users: Vec<String>,
    pub features: Vec<FeatureVector>,
    pub active: Vec<bool>,
}

impl TestSet {
    /// From a fully labeled sample set whose candidates were selected at `t`.
    pub fn from_sample_set(set: &SampleSet, t: Timestamp) -> Result<Self> {
        if !set.is_fully_labeled() {
            return Err(Error::Invalid(format!(
                "test set has {} unlabeled samples",
                set.unlabeled.len()
            )));
        }
        let mut out = TestSet {
            t,
            users: Vec::with_capacity(set.len()),
            features: Vec::with_capacity(set.len()),
            active: Vec::with_capacity(set.len()),
        };
        for (m, s) in set.iter() {
            out.users.push(s.user_id.clone());
            out.features.push(s.features.clone());
            out.active.push(m == crate::data::Membership::P);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn n_neg(&self) -> usize {
        self.len() - self.n_pos()
    }
}

/// Rule churn predictions for every test user.
pub fn rule_predictions(rule: Rule, index: &ActivityIndex<'_>, test: &TestSet) -> Vec<u8> {
    test.users
        .iter()
        .map(|u| match rule {
            Rule::Recency { l } => recency_predict(days_since_last_login(index, u, test.t), l),
            Rule::Frequency { m, d } => {
                frequency_predict(index.count_logins(u, test.t - days(i64::from(d)), test.t), m)
            }
        })
        .collect()
}

fn rule_scores(rule: Rule, index: &ActivityIndex<'_>, test: &TestSet) -> Vec<f64> {
    rule_predictions(rule, index, test)
        .into_iter()
        .map(|p| 1.0 - f64::from(p))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub params: String,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn evaluate_scores(method: &str, params: &str, scores: &[f64], test: &TestSet) -> Result<EvalRow> {
    Ok(EvalRow {
        method: method.to_owned(),
        params: params.to_owned(),
        auc: auc(scores, &test.active)?,
        n_pos: test.n_pos(),
        n_neg: test.n_neg(),
    })
}

pub fn model_scores(model: &Model, test: &TestSet) -> Result<Vec<f64>> {
    test.features.iter().map(|x| model.predict(x)).collect()
}

pub fn evaluate_model(method: &str, params: &str, model: &Model, test: &TestSet) -> Result<EvalRow> {
    evaluate_scores(method, params, &model_scores(model, test)?, test)
}

/// Scores one rule setting. Settings that predict one class for everybody
/// have no usable ranking and are rejected.
pub fn evaluate_rule(rule: Rule, index: &ActivityIndex<'_>, test: &TestSet) -> Result<EvalRow> {
    let scores = rule_scores(rule, index, test);
    if scores.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::UndefinedAuc(format!(
            "{} with {} predicts the same class for every user",
            rule.method(),
            rule.params()
        )));
    }
    evaluate_scores(rule.method(), &rule.params(), &scores, test)
}

/// AUC for each rule; degenerate settings score 0.5.
pub fn rule_curve(rules: &[Rule], index: &ActivityIndex<'_>, test: &TestSet) -> Result<Vec<(Rule, f64)>> {
    rules
        .iter()
        .map(|&r| auc(&rule_scores(r, index, test), &test.active).map(|a| (r, a)))
        .collect()
}

pub fn recency_rules() -> Vec<Rule> {
    RECENCY_GRID.iter().map(|&l| Rule::Recency { l }).collect()
}

pub fn frequency_rules(d: u32) -> Vec<Rule> {
    FREQUENCY_GRID.iter().map(|&m| Rule::Frequency { m, d }).collect()
}

/// The best-scoring setting among `rules`, ties going to the earliest.
pub fn best_rule(rules: &[Rule], index: &ActivityIndex<'_>, test: &TestSet) -> Result<EvalRow> {
    let curve = rule_curve(rules, index, test)?;
    let (rule, _) = curve
        .iter()
        .copied()
        .fold(None::<(Rule, f64)>, |best, (r, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((r, a)),
        })
        .ok_or_else(|| Error::Invalid("no rule settings to search".into()))?;
    evaluate_rule(rule, index, test)
}

/// Result rows against one evaluation population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reference: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(reference: impl Into<String>) -> Self {
        Self {
            reference: reference.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: EvalRow) {
        self.rows.push(row);
    }

    pub fn get(&self, method: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_table(&self) -> String {
        let header = ("Method", "Parameters", "AUC");
        let w0 = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .chain([header.0.len()])
            .max()
            .unwrap_or(0);
        let w1 = self
            .rows
            .iter()
            .map(|r| r.params.len())
            .chain([header.1.len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$} | {:<w1$} | {}", header.0, header.1, header.2);
        let _ = writeln!(out, "{}-+-{}-+-{}", "-".repeat(w0), "-".repeat(w1), "-".repeat(6));
        for r in &self.rows {
            let _ = writeln!(out, "{:<w0$} | {:<w1$} | {:.4}", r.method, r.params, r.auc);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_table(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_table())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &(self.to_json() + "\n"))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
