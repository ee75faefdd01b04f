//! End-to-end runs: the PU churn model, full-label baselines, rule
//! baselines, the observation-period sweep and the one-command reproduction.
//!
//! Every window ends at the shared reference time `T`. Training with an
//! observation period `op` selects candidates at `T - op`; the held-out test
//! population is selected at `T` and labeled over `[T, T + cp)`.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{days, write_sample_set, EventLog, Profile, Sample, SampleSet, Timestamp};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    best_rule, evaluate_model, evaluate_rule, frequency_rules, recency_rules, rule_curve, write_text, EvalReport,
    EvalRow, Rule, TestSet, FREQUENCY_DAYS, FREQUENCY_DAYS_GRID,
};
use crate::features::{
    build_sample_set, select_candidates, ActivityIndex, FeatureLayout, WindowSpec, DEFAULT_DIM, DEFAULT_LOOKBACKS,
};
use crate::models::{
    fm_train, lr_train, platt_apply, platt_fit, sigmoid, write_model, FmModel, LogisticModel, Model, PlattParams,
    SavedModel, TrainConfig,
};
use crate::pu::{
    build_weighted_training_set, estimate_c_e1, estimate_c_e2, estimate_c_e3, estimate_c_historical,
    write_weighted_set, CMethod, LabelFrequency, WeightedTrainingSet,
};
use crate::sim::{generate_population, simulate_events, ChurnLabel, SimConfig, DEFAULT_START};

/// Default shared window end: 150 days into the default simulation horizon.
pub const DEFAULT_REF_TIME: Timestamp = DEFAULT_START + 150 * crate::data::SECONDS_PER_DAY;
pub const DEFAULT_OP_GRID: [u32; 6] = [3, 7, 15, 30, 60, 90];

/// Every fifth P and U sample is held out when `c` is estimated from scores.
const C_HOLDOUT_STRIDE: usize = 5;

pub const TCCP: &str = "TCCP";
pub const SUPERVISED_LR: &str = "LR";
pub const SUPERVISED_FM: &str = "FM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tccp,
    Lr,
    Fm,
    Recency,
    Frequency,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Tccp => "tccp",
            Mode::Lr => "lr",
            Mode::Fm => "fm",
            Mode::Recency => "recency",
            Mode::Frequency => "frequency",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tccp" => Ok(Mode::Tccp),
            "lr" => Ok(Mode::Lr),
            "fm" => Ok(Mode::Fm),
            "recency" => Ok(Mode::Recency),
            "frequency" => Ok(Mode::Frequency),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected tccp, lr, fm, recency or frequency)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub ref_time: Timestamp,
    pub op_days: u32,
    pub cp_days: u32,
    pub lookbacks: Vec<u32>,
    pub dim: usize,
    pub c_method: CMethod,
    pub platt: bool,
    pub train: TrainConfig,
    pub rule_l: u32,
    pub rule_m: u32,
    pub rule_d: u32,
    /// Where intermediate artifacts go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tccp,
            ref_time: DEFAULT_REF_TIME,
            op_days: 15,
            cp_days: 90,
            lookbacks: DEFAULT_LOOKBACKS.to_vec(),
            dim: DEFAULT_DIM,
            c_method: CMethod::Historical,
            platt: false,
            train: TrainConfig::default(),
            rule_l: 7,
            rule_m: 1,
            rule_d: FREQUENCY_DAYS,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Tccp && self.op_days >= self.cp_days {
            return Err(Error::Config(format!(
                "tccp needs op < cp (got op={}, cp={}); use mode lr or fm for full-label training",
                self.op_days, self.cp_days
            )));
        }
        self.train_window()?;
        self.test_window()?;
        FeatureLayout::new(self.dim, self.lookbacks.clone())?;
        self.train.validate()?;
        if self.rule_d == 0 {
            return Err(Error::Config("rule_d must be >= 1".into()));
        }
        Ok(())
    }

    /// Training window for the configured mode. Full-label modes ignore `op`.
    pub fn train_window(&self) -> Result<WindowSpec> {
        let op = match self.mode {
            Mode::Tccp => self.op_days,
            _ => self.cp_days,
        };
        WindowSpec::new(self.ref_time, op, self.cp_days, self.lookbacks.clone())
    }

    pub fn test_window(&self) -> Result<WindowSpec> {
        WindowSpec::new(
            self.ref_time + days(i64::from(self.cp_days)),
            self.cp_days,
            self.cp_days,
            self.lookbacks.clone(),
        )
    }

    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::new(self.dim, self.lookbacks.clone())
    }

    pub fn rule(&self) -> Option<Rule> {
        match self.mode {
            Mode::Recency => Some(Rule::Recency { l: self.rule_l }),
            Mode::Frequency => Some(Rule::Frequency {
                m: self.rule_m,
                d: self.rule_d,
            }),
            _ => None,
        }
    }

    fn artifact(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(name))
    }
}

/// Inputs shared by every run on one event log.
pub struct Experiment<'a> {
    index: ActivityIndex<'a>,
    profiles: &'a [Profile],
    truths: Option<&'a [(String, Option<Timestamp>)]>,
}

impl<'a> Experiment<'a> {
    pub fn new(log: &'a EventLog, profiles: &'a [Profile]) -> Self {
        Self {
            index: ActivityIndex::new(log),
            profiles,
            truths: None,
        }
    }

    /// Cross-check test labels against simulator ground truth.
    pub fn with_truths(mut self, truths: &'a [(String, Option<Timestamp>)]) -> Self {
        self.truths = Some(truths);
        self
    }

    pub fn index(&self) -> &ActivityIndex<'a> {
        &self.index
    }

    pub fn profiles(&self) -> &'a [Profile] {
        self.profiles
    }

    pub fn sample_set(&self, spec: &WindowSpec, layout: &FeatureLayout) -> Result<SampleSet> {
        build_sample_set(&self.index, self.profiles, spec, layout)
    }

    pub fn test_set(&self, cfg: &RunConfig) -> Result<TestSet> {
        let spec = cfg.test_window()?;
        let set = self.sample_set(&spec, &cfg.layout()?)?;
        let test = TestSet::from_sample_set(&set, spec.op_start())?;
        if let Some(truths) = self.truths {
            let truth = crate::sim::ground_truth_labels(truths, self.index.log(), test.t, cfg.cp_days)?;
            for (user, &active) in test.users.iter().zip(&test.active) {
                let expected = truth.get(user).map(|l| *l == ChurnLabel::Retained);
                if expected != Some(active) {
                    return Err(Error::Invalid(format!(
                        "test label of {user} disagrees with ground truth"
                    )));
                }
            }
        }
        Ok(test)
    }

    /// Label frequency from the cohort selected `cp` days before `T`: the
    /// share of its full-window positives already active in the first `op`
    /// days.
    pub fn historical_c(&self, spec: &WindowSpec) -> Result<LabelFrequency> {
        let t0 = spec.ref_time - days(i64::from(spec.cp_days));
        let cohort = select_candidates(&self.index, self.profiles, t0)?;
        let short_end = t0 + days(i64::from(spec.op_days));
        self.index.log().horizon().require_window(t0, spec.ref_time)?;
        let (mut short, mut full) = (0, 0);
        for user in &cohort {
            if self.index.any_login(user, t0, spec.ref_time) {
                full += 1;
                if self.index.any_login(user, t0, short_end) {
                    short += 1;
                }
            }
        }
        estimate_c_historical(short, full)
    }
}

#[derive(Debug, Clone)]
pub struct TccpOutcome {
    pub train_set: SampleSet,
    pub g_model: LogisticModel,
    pub platt: Option<PlattParams>,
    pub c: LabelFrequency,
    pub weighted: WeightedTrainingSet,
    pub model: FmModel,
    pub row: EvalRow,
}

#[derive(Debug, Clone)]
pub struct SupervisedOutcome {
    pub train_set: SampleSet,
    pub model: Model,
    pub row: EvalRow,
}

/// P versus U as a unit-weight binary problem.
fn unlabeled_training(dim: usize, positives: &[Sample], unlabeled: &[Sample]) -> Result<WeightedTrainingSet> {
    WeightedTrainingSet::supervised(dim, positives, unlabeled)
}

fn split_holdout(samples: &[Sample]) -> (Vec<Sample>, Vec<Sample>) {
    let (mut fit, mut hold) = (Vec::new(), Vec::new());
    for (i, s) in samples.iter().enumerate() {
        if i % C_HOLDOUT_STRIDE == C_HOLDOUT_STRIDE - 1 {
            hold.push(s.clone());
        } else {
            fit.push(s.clone());
        }
    }
    (fit, hold)
}

fn lr_scores(model: &LogisticModel, samples: &[Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| crate::models::lr_score(model, &s.features))
        .collect()
}

/// Trains `g'` on P versus U and estimates `c`. With a score-based
/// estimator, `g'` is fit without the held-out fifth used for `c`.
fn train_nontraditional(
    exp: &Experiment<'_>,
    cfg: &RunConfig,
    spec: &WindowSpec,
    set: &SampleSet,
) -> Result<(LogisticModel, LabelFrequency)> {
    if cfg.c_method == CMethod::Historical {
        let data = unlabeled_training(set.dim, &set.positives, &set.unlabeled)?;
        let g = lr_train(&data, &cfg.train).stage("train_g")?;
        let c = exp.historical_c(spec).stage("estimate_c")?;
        return Ok((g, c));
    }
    let (p_fit, p_hold) = split_holdout(&set.positives);
    let (u_fit, u_hold) = split_holdout(&set.unlabeled);
    let data = unlabeled_training(set.dim, &p_fit, &u_fit)?;
    let g = lr_train(&data, &cfg.train).stage("train_g")?;
    let estimate = || -> Result<LabelFrequency> {
        let sp: Vec<f64> = lr_scores(&g, &p_hold)?.into_iter().map(sigmoid).collect();
        let su: Vec<f64> = lr_scores(&g, &u_hold)?.into_iter().map(sigmoid).collect();
        let all: Vec<f64> = sp.iter().chain(&su).copied().collect();
        match cfg.c_method {
            CMethod::E1 => estimate_c_e1(&sp),
            CMethod::E2 => estimate_c_e2(&sp, &all),
            CMethod::E3 => estimate_c_e3(&all),
            CMethod::Historical => unreachable!(),
        }
    };
    let c = estimate().stage("estimate_c")?;
    Ok((g, c))
}

pub fn run_tccp(exp: &Experiment<'_>, cfg: &RunConfig) -> Result<TccpOutcome> {
    if cfg.mode != Mode::Tccp {
        return Err(Error::Config(format!("run_tccp called with mode {}", cfg.mode)));
    }
    cfg.validate()?;
    let spec = cfg.train_window()?;
    let layout = cfg.layout()?;
    let set = exp.sample_set(&spec, &layout).stage("featurize")?;
    if set.positives.is_empty() || set.unlabeled.is_empty() {
        return Err(Error::InsufficientData(format!(
            "training window has {} positive and {} unlabeled samples",
            set.positives.len(),
            set.unlabeled.len()
        ))
        .in_stage("featurize"));
    }
    let (g_model, c) = train_nontraditional(exp, cfg, &spec, &set)?;

    let raw = lr_scores(&g_model, &set.unlabeled).stage("weight")?;
    let platt = if cfg.platt {
        let scores: Vec<f64> = lr_scores(&g_model, &set.positives)
            .map(|p| p.into_iter().chain(raw.iter().copied()).collect())
            .stage("calibrate")?;
        let labels: Vec<bool> = (0..scores.len()).map(|i| i < set.positives.len()).collect();
        Some(platt_fit(&scores, &labels).stage("calibrate")?)
    } else {
        None
    };
    let g_prime: HashMap<String, f64> = set
        .unlabeled
        .iter()
        .zip(&raw)
        .map(|(s, &z)| {
            let p = platt.as_ref().map_or_else(|| sigmoid(z), |pp| platt_apply(pp, z));
            (s.user_id.clone(), p)
        })
        .collect();
    let weighted = build_weighted_training_set(set.dim, &set.positives, &set.unlabeled, &g_prime, c).stage("weight")?;
    let model = fm_train(&weighted, &cfg.train).stage("train_f")?;

    let test = exp.test_set(cfg).stage("evaluate")?;
    let params = format!("OP={}, c={}", cfg.op_days, c.method());
    let row = evaluate_model(TCCP, &params, &Model::Fm(model.clone()), &test).stage("evaluate")?;

    let out = TccpOutcome {
        train_set: set,
        g_model,
        platt,
        c,
        weighted,
        model,
        row,
    };
    persist_tccp(cfg, &out).stage("persist")?;
    Ok(out)
}

fn persist_tccp(cfg: &RunConfig, out: &TccpOutcome) -> Result<()> {
    let Some(dir) = cfg.out_dir.as_deref() else {
        return Ok(());
    };
    write_sample_set(&out.train_set, dir.join("train_set.jsonl"))?;
    write_model(
        &SavedModel {
            model: Model::Logistic(out.g_model.clone()),
            cfg: cfg.train.clone(),
            c: None,
        },
        dir.join("g_model.json"),
    )?;
    let c_json = serde_json::json!({
        "c": out.c.c(),
        "method": out.c.method().to_string(),
        "support": out.c.support(),
        "platt": out.platt,
    });
    write_text(&dir.join("c.json"), &format!("{c_json}\n"))?;
    write_weighted_set(&out.weighted, dir.join("weighted.jsonl"))?;
    write_model(
        &SavedModel {
            model: Model::Fm(out.model.clone()),
            cfg: cfg.train.clone(),
            c: Some(out.c.c()),
        },
        dir.join("f_model.json"),
    )?;
    write_row_report(dir, &out.row)
}

fn write_row_report(dir: &Path, row: &EvalRow) -> Result<()> {
    let mut report = EvalReport::new("test");
    report.push(row.clone());
    report.write_json(dir.join("report.json"))?;
    report.write_table(dir.join("report.txt"))
}

/// Full-label training on the window `[T - cp, T)`.
pub fn run_supervised(exp: &Experiment<'_>, cfg: &RunConfig) -> Result<SupervisedOutcome> {
    let method = match cfg.mode {
        Mode::Lr => SUPERVISED_LR,
        Mode::Fm => SUPERVISED_FM,
        other => return Err(Error::Config(format!("run_supervised called with mode {other}"))),
    };
    cfg.validate()?;
    let spec = cfg.train_window()?;
    let set = exp.sample_set(&spec, &cfg.layout()?).stage("featurize")?;
    if set.negatives.is_empty() || set.positives.is_empty() {
        return Err(Error::InsufficientData(format!(
            "full-label window has {} positive and {} negative samples",
            set.positives.len(),
            set.negatives.len()
        ))
        .in_stage("featurize"));
    }
    let data = WeightedTrainingSet::supervised(set.dim, &set.positives, &set.negatives)?;
    let model = match cfg.mode {
        Mode::Lr => Model::Logistic(lr_train(&data, &cfg.train).stage("train")?),
        _ => Model::Fm(fm_train(&data, &cfg.train).stage("train")?),
    };
    let test = exp.test_set(cfg).stage("evaluate")?;
    let params = format!("OP={}", cfg.cp_days);
    let row = evaluate_model(method, &params, &model, &test).stage("evaluate")?;
    if let Some(dir) = cfg.out_dir.as_deref() {
        let persist = || -> Result<()> {
            write_sample_set(&set, dir.join("train_set.jsonl"))?;
            write_model(
                &SavedModel {
                    model: model.clone(),
                    cfg: cfg.train.clone(),
                    c: None,
                },
                dir.join("model.json"),
            )?;
            write_row_report(dir, &row)
        };
        persist().stage("persist")?;
    }
    Ok(SupervisedOutcome {
        train_set: set,
        model,
        row,
    })
}

/// One rule setting on the test population.
pub fn run_rule(exp: &Experiment<'_>, cfg: &RunConfig) -> Result<EvalRow> {
    let rule = cfg
        .rule()
        .ok_or_else(|| Error::Config(format!("run_rule called with mode {}", cfg.mode)))?;
    cfg.validate()?;
    let test = exp.test_set(cfg).stage("evaluate")?;
    let row = evaluate_rule(rule, exp.index(), &test).stage("evaluate")?;
    if let Some(dir) = cfg.artifact("") {
        write_row_report(&dir, &row).stage("persist")?;
    }
    Ok(row)
}

/// Test AUC of the PU model for each observation period; `op >= cp` falls
/// back to full-label FM training.
pub fn sweep_op(exp: &Experiment<'_>, cfg: &RunConfig, ops: &[u32]) -> Result<Vec<(u32, f64)>> {
    ops.iter()
        .map(|&op| {
            let mut run = cfg.clone();
            run.op_days = op;
            run.out_dir = None;
            let auc = if op < cfg.cp_days {
                run.mode = Mode::Tccp;
                run_tccp(exp, &run)?.row.auc
            } else {
                run.mode = Mode::Fm;
                run_supervised(exp, &run)?.row.auc
            };
            Ok((op, auc))
        })
        .collect()
}

/// Everything needed for the comparison table and the sweep curve.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: EvalReport,
    pub sweep: Vec<(u32, f64)>,
    pub recency_curve: Vec<(Rule, f64)>,
    pub frequency_curve: Vec<(Rule, f64)>,
}

impl Comparison {
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("op,auc\n");
        for (op, auc) in &self.sweep {
            s.push_str(&format!("{op},{auc}\n"));
        }
        s
    }

    pub fn rule_curves_csv(&self) -> String {
        let mut s = String::from("rule,params,auc\n");
        for (rule, auc) in self.recency_curve.iter().chain(&self.frequency_curve) {
            s.push_str(&format!("{},\"{}\",{auc}\n", rule.method(), rule.params()));
        }
        s
    }
}

/// Rules, full-label LR and FM, and the PU model on one log, plus the OP
/// sweep. Rows are in a fixed order: rules, LR, FM, TCCP.
pub fn compare(exp: &Experiment<'_>, cfg: &RunConfig, ops: &[u32]) -> Result<Comparison> {
    let base = RunConfig {
        out_dir: None,
        ..cfg.clone()
    };
    let test = exp.test_set(&base)?;
    let mut report = EvalReport::new(format!(
        "test window [{}, {})",
        test.t,
        test.t + days(i64::from(cfg.cp_days))
    ));

    let recency = recency_rules();
    let frequency_all: Vec<Rule> = FREQUENCY_DAYS_GRID.iter().flat_map(|&d| frequency_rules(d)).collect();
    report.push(best_rule(&recency, exp.index(), &test).stage("recency")?);
    report.push(best_rule(&frequency_all, exp.index(), &test).stage("frequency")?);
    let recency_curve = rule_curve(&recency, exp.index(), &test)?;
    let frequency_curve = rule_curve(&frequency_rules(FREQUENCY_DAYS), exp.index(), &test)?;

    let lr = run_supervised(
        exp,
        &RunConfig {
            mode: Mode::Lr,
            ..base.clone()
        },
    )?;
    let fm = run_supervised(
        exp,
        &RunConfig {
            mode: Mode::Fm,
            ..base.clone()
        },
    )?;
    report.push(lr.row);
    report.push(fm.row.clone());

    let mut sweep = Vec::with_capacity(ops.len());
    let mut tccp_row = None;
    for &op in ops {
        let auc = if op >= cfg.cp_days {
            fm.row.auc
        } else {
            let run = RunConfig {
                mode: Mode::Tccp,
                op_days: op,
                ..base.clone()
            };
            let row = run_tccp(exp, &run)?.row;
            let auc = row.auc;
            if op == cfg.op_days {
                tccp_row = Some(row);
            }
            auc
        };
        sweep.push((op, auc));
    }
    let tccp_row = match tccp_row {
        Some(r) => r,
        None => {
            run_tccp(
                exp,
                &RunConfig {
                    mode: Mode::Tccp,
                    ..base.clone()
                },
            )?
            .row
        }
    };
    report.push(tccp_row);
    Ok(Comparison {
        report,
        sweep,
        recency_curve,
        frequency_curve,
    })
}

#[derive(Debug, Clone)]
pub struct ReproduceOutcome {
    pub comparison: Comparison,
    pub files: Vec<PathBuf>,
}

/// Simulates a population and writes the comparison table (text and JSON),
/// the OP sweep (`op,auc`) and the rule curves under `out_dir`.
pub fn reproduce(sim: &SimConfig, cfg: &RunConfig, ops: &[u32], out_dir: &Path) -> Result<ReproduceOutcome> {
    sim.validate()?;
    cfg.validate()?;
    let (profiles, truths) = generate_population(sim).stage("simulate")?;
    let log = simulate_events(&profiles, &truths, sim).stage("simulate")?;
    let truth_pairs: Vec<(String, Option<Timestamp>)> =
        truths.iter().map(|t| (t.user_id.clone(), t.churn_ts)).collect();
    let exp = Experiment::new(&log, &profiles).with_truths(&truth_pairs);
    let comparison = compare(&exp, cfg, ops)?;
    let files = vec![
        out_dir.join("report.txt"),
        out_dir.join("report.json"),
        out_dir.join("sweep.csv"),
        out_dir.join("rule_curves.csv"),
    ];
    let write = || -> Result<()> {
        comparison.report.write_table(&files[0])?;
        comparison.report.write_json(&files[1])?;
        write_text(&files[2], &comparison.sweep_csv())?;
        write_text(&files[3], &comparison.rule_curves_csv())
    };
    write().stage("persist")?;
    Ok(ReproduceOutcome { comparison, files })
}
