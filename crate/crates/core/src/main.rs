use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vocplan::harness::{config_from_kv, grid_search, parse_kv, run_experiment, summarize, write_csv, ExperimentConfig, RegretRecord};
use vocplan::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "vocplan", version, about = "Value-of-computation tree search benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the invariant suites.
    Selftest,
    /// Run a benchmark and write a CSV of records.
    Bench {
        #[command(subcommand)]
        env: BenchEnv,
    },
    /// Grid-search policy parameters, then benchmark the tuned policies.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchEnv {
    BanditTree {
        #[arg(long)]
        depth: Option<u8>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        lengthscale: Option<f64>,
        #[arg(long)]
        signal_var: Option<f64>,
        #[arg(long)]
        noise_var: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    Peg {
        #[arg(long)]
        pegs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma separated, strictly increasing.
    #[arg(long)]
    budgets: Option<String>,
    #[arg(long)]
    instances: Option<usize>,
    /// Comma separated policy names.
    #[arg(long)]
    policies: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Record wall-clock time per row.
    #[arg(long)]
    wall_time: bool,
}

fn read_config(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_kv(&text)
}

fn put<T: ToString>(map: &mut BTreeMap<String, String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), v.to_string());
    }
}

fn common_map(env: &str, c: Common) -> Result<BTreeMap<String, String>> {
    let mut map = match &c.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    map.insert("env".into(), env.into());
    put(&mut map, "horizon", c.horizon);
    put(&mut map, "budgets", c.budgets);
    put(&mut map, "instances", c.instances);
    put(&mut map, "policies", c.policies);
    put(&mut map, "seed", c.seed);
    put(&mut map, "out", c.out.map(|p| p.display().to_string()));
    if c.wall_time {
        map.insert("wall_time".into(), "true".into());
    }
    for kv in c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {kv:?}: expected KEY=VALUE")))?;
        map.insert(k.trim().into(), v.trim().into());
    }
    Ok(map)
}

fn report(records: &[RegretRecord]) {
    let mut keys: Vec<(&str, u64)> = records.iter().map(|r| (r.policy.as_str(), r.budget)).collect();
    keys.dedup();
    eprintln!("{:<16} {:>8} {:>12} {:>10} {:>6}", "policy", "budget", "mean", "se", "n");
    for (policy, budget) in keys {
        let (mean, se, n) = summarize(records.iter().filter(|r| r.policy == policy && r.budget == budget));
        eprintln!("{policy:<16} {budget:>8} {mean:>12.6} {se:>10.6} {n:>6}");
    }
}

fn bench(config: &ExperimentConfig) -> Result<()> {
    let records = run_experiment(config)?;
    report(&records);
    match &config.out {
        Some(path) => write_csv(&records, path),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Selftest => {
            let results = selftest::run_all();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(results.iter().all(|r| r.passed))
        }
        Cmd::Bench { env } => {
            let map = match env {
                BenchEnv::BanditTree {
                    depth,
                    p,
                    kernel,
                    lengthscale,
                    signal_var,
                    noise_var,
                    common,
                } => {
                    let mut map = common_map("bandit-tree", common)?;
                    put(&mut map, "depth", depth);
                    put(&mut map, "p", p);
                    put(&mut map, "kernel", kernel);
                    put(&mut map, "lengthscale", lengthscale);
                    put(&mut map, "signal_var", signal_var);
                    put(&mut map, "noise_var", noise_var);
                    map
                }
                BenchEnv::Peg { pegs, common } => {
                    let mut map = common_map("peg", common)?;
                    put(&mut map, "pegs", pegs);
                    map
                }
            };
            let (config, _) = config_from_kv(&map)?;
            bench(&config)?;
            Ok(true)
        }
        Cmd::Grid { config, out } => {
            let mut map = read_config(&config)?;
            put(&mut map, "out", out.map(|p| p.display().to_string()));
            let (mut config, grid) = config_from_kv(&map)?;
            let outcome = grid_search(&config, &grid)?;
            for row in &outcome.table {
                let point: Vec<String> = row.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<16} {:<40} {:>12.6} {:>10.6}", row.policy, point.join(" "), row.mean, row.std_error);
            }
            config.policies = outcome.best;
            bench(&config)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
