//! Runs the full comparison on one simulated population and prints the
//! table, the OP sweep and the rule curves.
//!
//! Usage: `cargo run --release --example compare -- [seed] [users]`

use std::time::Instant;

use pu_churn::data::Timestamp;
use pu_churn::pipeline::{compare, Experiment, DEFAULT_OP_GRID};
use pu_churn::sim::{generate_population, simulate_events};
use pu_churn::Config;

fn main() -> pu_churn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = Config::default();
    if let Some(seed) = args.first().and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    if let Some(n) = args.get(1).and_then(|s| s.parse().ok()) {
        cfg.n_users = n;
    }
    cfg.validate()?;
    let (sim, run) = (cfg.sim(), cfg.run());

    let start = Instant::now();
    let (profiles, truths) = generate_population(&sim)?;
    let log = simulate_events(&profiles, &truths, &sim)?;
    println!("simulated {} events in {:.1?}", log.len(), start.elapsed());
    let pairs: Vec<(String, Option<Timestamp>)> = truths.iter().map(|t| (t.user_id.clone(), t.churn_ts)).collect();
    let exp = Experiment::new(&log, &profiles).with_truths(&pairs);
    let cmp = compare(&exp, &run, &DEFAULT_OP_GRID)?;
    print!("{}", cmp.report);
    let row = &cmp.report.rows[0];
    println!("test population: {} active, {} churned", row.n_pos, row.n_neg);
    print!("{}", cmp.sweep_csv());
    print!("{}", cmp.rule_curves_csv());
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
