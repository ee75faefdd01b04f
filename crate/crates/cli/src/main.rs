use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pu_churn::data::{
    read_event_log, read_profiles, read_truth, write_event_log, write_profiles, write_sample_set, write_truth,
    EventLog, Horizon, Profile, Timestamp,
};
use pu_churn::eval::{evaluate_model, EvalReport};
use pu_churn::models::read_model;
use pu_churn::pipeline::{reproduce, run_rule, run_supervised, run_tccp, sweep_op, Experiment, Mode, DEFAULT_OP_GRID};
use pu_churn::pu::CMethod;
use pu_churn::sim::{generate_population, simulate_events};
use pu_churn::{Config, Error, Result};

const DEFAULT_OUT_DIR: &str = "out";

#[derive(Parser, Debug)]
#[command(
    name = "pu-churn",
    version,
    about = "Churn prediction from positive and unlabeled users"
)]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a population; writes events, profiles and truth files.
    Simulate {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        drift: Option<f64>,
    },
    /// Build the labeled sample set of the training (or test) window.
    Featurize {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        window: WindowFlags,
        /// Build the held-out test window instead of the training window.
        #[arg(long)]
        test: bool,
    },
    /// Train one method and evaluate it on the test window.
    Train {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        window: WindowFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Score a saved model on the test window.
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        window: WindowFlags,
        #[arg(long)]
        model: PathBuf,
    },
    /// Test AUC of the PU model across observation periods.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        window: WindowFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_OP_GRID.to_vec())]
        ops: Vec<u32>,
    },
    /// Render a JSON report as a table.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_table: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Simulate, run every method and the OP sweep, and write the results.
    Reproduce {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_OP_GRID.to_vec())]
        ops: Vec<u32>,
    },
}

#[derive(Args, Debug)]
struct Input {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    /// Simulator truth file; when given, test labels are cross-checked.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WindowFlags {
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    op: Option<u32>,
    #[arg(long)]
    cp: Option<u32>,
    /// Shared window end time (unix seconds).
    #[arg(long)]
    ref_time: Option<Timestamp>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    c_method: Option<CMethod>,
    #[arg(long)]
    platt: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn apply_window(cfg: &mut Config, w: &WindowFlags) {
    if let Some(mode) = w.mode {
        cfg.mode = mode;
    }
    if let Some(op) = w.op {
        cfg.op = op;
    }
    if let Some(cp) = w.cp {
        cfg.cp = cp;
    }
    if let Some(t) = w.ref_time {
        cfg.ref_time = t;
    }
}

fn apply_train(cfg: &mut Config, t: &TrainFlags) {
    if let Some(m) = t.c_method {
        cfg.c_method = m;
    }
    if t.platt {
        cfg.platt = true;
    }
    if let Some(e) = t.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = t.learning_rate {
        cfg.learning_rate = lr;
    }
}

fn out_dir(cfg: &Config) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

struct Loaded {
    log: EventLog,
    profiles: Vec<Profile>,
    truth: Option<Vec<(String, Option<Timestamp>)>>,
}

impl Loaded {
    fn read(input: &Input, cfg: &Config) -> Result<Self> {
        let horizon = Horizon::new(cfg.t_start, cfg.t_end)?;
        Ok(Self {
            log: read_event_log(&input.events, horizon)?,
            profiles: read_profiles(&input.profiles)?,
            truth: input.truth.as_deref().map(read_truth).transpose()?,
        })
    }

    fn experiment(&self) -> Experiment<'_> {
        let exp = Experiment::new(&self.log, &self.profiles);
        match &self.truth {
            Some(t) => exp.with_truths(t),
            None => exp,
        }
    }
}

fn print_row(row: &pu_churn::eval::EvalRow) {
    let mut report = EvalReport::new("test");
    report.push(row.clone());
    print!("{report}");
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate { users, drift } => {
            if let Some(n) = users {
                cfg.n_users = *n;
            }
            if let Some(d) = drift {
                cfg.drift_strength = *d;
            }
            cfg.validate()?;
            let sim = cfg.sim();
            let dir = out_dir(&cfg);
            let (profiles, truths) = generate_population(&sim)?;
            let log = simulate_events(&profiles, &truths, &sim)?;
            write_event_log(&log, dir.join("events.jsonl"))?;
            write_profiles(&profiles, dir.join("profiles.jsonl"))?;
            write_truth(&truths, dir.join("truth.jsonl"))?;
            println!(
                "{} users, {} events written to {}",
                profiles.len(),
                log.len(),
                dir.display()
            );
        }
        Command::Featurize { input, window, test } => {
            apply_window(&mut cfg, window);
            cfg.validate()?;
            let run = cfg.run();
            let data = Loaded::read(input, &cfg)?;
            let exp = data.experiment();
            let spec = if *test { run.test_window()? } else { run.train_window()? };
            let set = exp.sample_set(&spec, &run.layout()?)?;
            let path = out_dir(&cfg).join(if *test { "test_set.jsonl" } else { "train_set.jsonl" });
            write_sample_set(&set, &path)?;
            println!(
                "{} positive, {} unlabeled, {} negative samples written to {}",
                set.positives.len(),
                set.unlabeled.len(),
                set.negatives.len(),
                path.display()
            );
        }
        Command::Train { input, window, train } => {
            apply_window(&mut cfg, window);
            apply_train(&mut cfg, train);
            cfg.out_dir = Some(out_dir(&cfg));
            cfg.validate()?;
            let run = cfg.run();
            let data = Loaded::read(input, &cfg)?;
            let exp = data.experiment();
            let row = match run.mode {
                Mode::Tccp => {
                    let out = run_tccp(&exp, &run)?;
                    println!("c = {} ({})", out.c.c(), out.c.method());
                    out.row
                }
                Mode::Lr | Mode::Fm => run_supervised(&exp, &run)?.row,
                Mode::Recency | Mode::Frequency => run_rule(&exp, &run)?,
            };
            print_row(&row);
        }
        Command::Evaluate { input, window, model } => {
            apply_window(&mut cfg, window);
            cfg.validate()?;
            let run = cfg.run();
            let saved = read_model(model)?;
            let data = Loaded::read(input, &cfg)?;
            let test = data.experiment().test_set(&run)?;
            let row = evaluate_model(saved.model.kind(), &model.display().to_string(), &saved.model, &test)?;
            print_row(&row);
        }
        Command::Sweep {
            input,
            window,
            train,
            ops,
        } => {
            apply_window(&mut cfg, window);
            apply_train(&mut cfg, train);
            cfg.validate()?;
            let data = Loaded::read(input, &cfg)?;
            let sweep = sweep_op(&data.experiment(), &cfg.run(), ops)?;
            let mut csv = String::from("op,auc\n");
            for (op, auc) in &sweep {
                csv.push_str(&format!("{op},{auc}\n"));
            }
            write_file(&out_dir(&cfg).join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Report {
            input,
            out_table,
            out_json,
        } => {
            let report = EvalReport::read_json(input)?;
            if let Some(p) = out_table {
                report.write_table(p)?;
            }
            if let Some(p) = out_json {
                report.write_json(p)?;
            }
            print!("{report}");
        }
        Command::Reproduce { users, ops } => {
            if let Some(n) = users {
                cfg.n_users = *n;
            }
            cfg.validate()?;
            let dir = out_dir(&cfg);
            let mut run = cfg.run();
            run.out_dir = None;
            let out = reproduce(&cfg.sim(), &run, ops, &dir)?;
            print!("{}", out.comparison.report);
            print!("{}", out.comparison.sweep_csv());
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
