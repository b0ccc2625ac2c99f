//! Benchmark runner: environments, seeding, grid search and CSV output.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{Kernel, KernelKind, NormalPrior};
use crate::error::{Error, Result};
use crate::mdp::{bandit_tree_optimal, peg_apply, peg_legal_moves, peg_min_reachable, ArmPrior, PegBoard, PegSolitaire, BOARD_CELLS};
use crate::normal::RunningStats;
use crate::policies::{plan, MetaPolicyConfig, PolicyKind};
use crate::values::argmax;

/// Instance indices used by [`grid_search`] start here, away from the
/// evaluation block.
pub const HOLDOUT_OFFSET: u64 = 1 << 32;

const ENV_STREAM: u64 = 0x656e76;
const PLAN_STREAM: u64 = 0x706c616e;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    BanditTree {
        depth: u8,
        /// Probability of reaching the intended subtree.
        p: f64,
        kernel: Kernel,
        arm_noise_var: f64,
    },
    Peg {
        pegs: usize,
    },
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::BanditTree { .. } => "bandit_tree",
            EnvSpec::Peg { .. } => "peg",
        }
    }

    pub fn metric(&self) -> &'static str {
        match self {
            EnvSpec::BanditTree { .. } => "simple_regret",
            EnvSpec::Peg { .. } => "pegs_remaining",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::BanditTree { depth, p, kernel, arm_noise_var } => {
                if *depth == 0 || *depth > 16 {
                    return Err(Error::Config(format!("depth {depth} must be in 1..=16")));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config(format!("p {p} outside [0, 1]")));
                }
                if !(*arm_noise_var >= 0.0) {
                    return Err(Error::Config(format!("noise_var {arm_noise_var} must be >= 0")));
                }
                kernel.validate()
            }
            EnvSpec::Peg { pegs } => {
                if *pegs == 0 || *pegs > BOARD_CELLS {
                    return Err(Error::Config(format!("pegs {pegs} must be in 1..={BOARD_CELLS}")));
                }
                Ok(())
            }
        }
    }
}

/// A planner under test.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Meta(MetaPolicyConfig),
    /// Reads the hidden environment: best arm, or exhaustive peg search.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub label: String,
    pub policy: Policy,
}

impl PolicyEntry {
    pub fn meta(config: MetaPolicyConfig) -> Self {
        Self {
            label: config.kind.name().to_string(),
            policy: Policy::Meta(config),
        }
    }

    pub fn oracle() -> Self {
        Self {
            label: "oracle".into(),
            policy: Policy::Oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub policies: Vec<PolicyEntry>,
    /// Strictly increasing. For peg solitaire this is the per-move budget.
    pub budgets: Vec<usize>,
    pub instances: usize,
    /// Index of the first instance; instance seeds depend on the index.
    pub first_instance: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Record wall-clock time per row. Off keeps output byte-reproducible.
    pub wall_time: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("budgets {:?} must be non-empty and strictly increasing", self.budgets)));
        }
        if self.instances == 0 {
            return Err(Error::Config("need at least one instance".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("need at least one policy".into()));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::Config(format!("duplicate policy label {:?}", p.label)));
            }
            if let Policy::Meta(cfg) = &p.policy {
                let mut cfg = cfg.clone();
                cfg.budget = Some(self.budgets[0]);
                cfg.stop_threshold = None;
                cfg.validate()?;
            }
        }
        Ok(())
    }
}

/// One measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub env: String,
    pub policy: String,
    pub budget: u64,
    pub instance: u64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_ns: u64,
}

pub const CSV_HEADER: [&str; 8] = ["env", "policy", "budget", "instance", "seed", "metric", "value", "wall_ns"];

/// Mixes `parts` into `master` with the splitmix64 finalizer.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    parts
        .iter()
        .fold(mix(master), |acc, &p| mix(acc.wrapping_add(0x9e3779b97f4a7c15) ^ p))
}

fn label_key(label: &str) -> u64 {
    // FNV-1a, stable across platforms and builds.
    label
        .bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Seed of the hidden environment of `instance`, shared by all policies.
pub fn instance_seed(master: u64, instance: u64) -> u64 {
    derive_seed(master, &[ENV_STREAM, instance])
}

/// Seed of the planner's randomness for one record.
pub fn plan_seed(master: u64, instance: u64, budget: usize, label: &str) -> u64 {
    derive_seed(master, &[PLAN_STREAM, instance, budget as u64, label_key(label)])
}

/// Runs the experiment and returns records in canonical order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RegretRecord>> {
    match config.env {
        EnvSpec::BanditTree { .. } => run_bandit_tree(config),
        EnvSpec::Peg { .. } => run_peg(config),
    }
}

fn instance_range(config: &ExperimentConfig) -> Vec<u64> {
    (config.first_instance..config.first_instance + config.instances as u64).collect()
}

fn elapsed(start: Instant, keep: bool) -> u64 {
    if keep {
        start.elapsed().as_nanos() as u64
    } else {
        0
    }
}

pub fn run_bandit_tree(config: &ExperimentConfig) -> Result<Vec<RegretRecord>> {
    config.validate()?;
    let EnvSpec::BanditTree { depth, p, kernel, arm_noise_var } = config.env else {
        return Err(Error::Config("not a bandit-tree experiment".into()));
    };
    let prior = ArmPrior::new(depth, &kernel)?;
    let per_instance: Result<Vec<Vec<RegretRecord>>> = instance_range(config)
        .into_par_iter()
        .map(|inst| {
            let mut env_rng = ChaCha8Rng::seed_from_u64(instance_seed(config.seed, inst));
            let env = prior.sample(p, arm_noise_var, &mut env_rng)?;
            let q = bandit_tree_optimal(&env);
            let best = q[0].max(q[1]);
            let mut out = Vec::new();
            for entry in &config.policies {
                for &budget in &config.budgets {
                    let seed = plan_seed(config.seed, inst, budget, &entry.label);
                    let start = Instant::now();
                    let index = match &entry.policy {
                        Policy::Oracle => argmax(&q),
                        Policy::Meta(cfg) => {
                            let mut cfg = cfg.clone();
                            cfg.budget = Some(budget);
                            cfg.stop_threshold = None;
                            plan(&env, &env.root(), &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?.action_index
                        }
                    };
                    out.push(RegretRecord {
                        env: config.env.name().into(),
                        policy: entry.label.clone(),
                        budget: budget as u64,
                        instance: inst,
                        seed,
                        metric: "simple_regret".into(),
                        value: best - q[index],
                        wall_ns: elapsed(start, config.wall_time),
                    });
                }
            }
            Ok(out)
        })
        .collect();
    Ok(canonical(per_instance?.into_iter().flatten().collect()))
}

/// Move that keeps the fewest pegs reachable, first in move order on ties.
pub fn peg_oracle_move(board: &PegBoard) -> Option<crate::mdp::Move> {
    peg_legal_moves(board)
        .into_iter()
        .min_by_key(|m| peg_min_reachable(&peg_apply(board, m)))
}

pub fn run_peg(config: &ExperimentConfig) -> Result<Vec<RegretRecord>> {
    config.validate()?;
    let EnvSpec::Peg { pegs } = config.env else {
        return Err(Error::Config("not a peg solitaire experiment".into()));
    };
    let per_instance: Result<Vec<Vec<RegretRecord>>> = instance_range(config)
        .into_par_iter()
        .map(|inst| {
            let mut env_rng = ChaCha8Rng::seed_from_u64(instance_seed(config.seed, inst));
            let start_board = PegBoard::random(pegs, &mut env_rng);
            let mut out = Vec::new();
            for entry in &config.policies {
                for &budget in &config.budgets {
                    let seed = plan_seed(config.seed, inst, budget, &entry.label);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let start = Instant::now();
                    let mut board = start_board;
                    loop {
                        let mv = match &entry.policy {
                            Policy::Oracle => peg_oracle_move(&board),
                            Policy::Meta(cfg) => {
                                if peg_legal_moves(&board).is_empty() {
                                    None
                                } else {
                                    let mut cfg = cfg.clone();
                                    cfg.budget = Some(budget);
                                    cfg.stop_threshold = None;
                                    Some(plan(&PegSolitaire, &board, &cfg, &mut rng)?.action)
                                }
                            }
                        };
                        match mv {
                            Some(m) => board = peg_apply(&board, &m),
                            None => break,
                        }
                    }
                    out.push(RegretRecord {
                        env: config.env.name().into(),
                        policy: entry.label.clone(),
                        budget: budget as u64,
                        instance: inst,
                        seed,
                        metric: "pegs_remaining".into(),
                        value: board.pegs() as f64,
                        wall_ns: elapsed(start, config.wall_time),
                    });
                }
            }
            Ok(out)
        })
        .collect();
    Ok(canonical(per_instance?.into_iter().flatten().collect()))
}

/// Sorts by (policy, budget, instance, metric).
pub fn canonical(mut records: Vec<RegretRecord>) -> Vec<RegretRecord> {
    records.sort_by(|a, b| {
        (&a.policy, a.budget, a.instance, &a.metric).cmp(&(&b.policy, b.budget, b.instance, &b.metric))
    });
    records
}

pub fn write_csv(records: &[RegretRecord], path: &Path) -> Result<()> {
    let ctx = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(CSV_HEADER).map_err(ctx)?;
    for r in canonical(records.to_vec()) {
        w.serialize(r).map_err(ctx)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<RegretRecord>> {
    let ctx = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(ctx)?;
    let header = r.headers().map_err(ctx)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidInput(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    r.deserialize().map(|row| row.map_err(ctx)).collect()
}

/// Mean and standard error of the records' values.
pub fn summarize<'a>(records: impl IntoIterator<Item = &'a RegretRecord>) -> (f64, f64, u64) {
    let s: RunningStats = records.into_iter().map(|r| r.value).collect();
    (s.mean(), s.std_error(), s.count())
}

/// Named parameter values whose cartesian product is searched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrid {
    pub params: Vec<(String, Vec<f64>)>,
}

impl ParamGrid {
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        self.params.iter().fold(vec![Vec::new()], |acc, (name, values)| {
            acc.iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((name.clone(), *v));
                        q
                    })
                })
                .collect()
        })
    }
}

/// Sets one tunable parameter on a policy configuration.
pub fn apply_param(cfg: &mut MetaPolicyConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "uct_c" => cfg.uct_c = value,
        "prior_mean" => cfg.prior.mean0 = value,
        "prior_var" => {
            cfg.prior.var0 = value;
            if let Some(k) = cfg.kernel.as_mut() {
                k.signal_var = value;
            }
        }
        "prior_noise" => cfg.prior.noise_var = value,
        "horizon" => cfg.horizon = value as usize,
        "lengthscale" | "signal_var" => {
            let Some(k) = cfg.kernel.as_mut() else {
                // Independent beliefs have no kernel to tune.
                return Ok(());
            };
            if name == "lengthscale" {
                k.lengthscale = value;
            } else {
                k.signal_var = value;
            }
        }
        _ => return Err(Error::Config(format!("unknown grid parameter {name:?}"))),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub policy: String,
    pub point: Vec<(String, f64)>,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// One entry per input policy, meta-policies at their best point.
    pub best: Vec<PolicyEntry>,
    pub table: Vec<GridRow>,
}

/// Tunes every meta-policy on a held-out instance block, minimizing the
/// mean metric over all budgets. Ties go to the lexicographically smallest
/// point so the choice does not depend on grid order.
pub fn grid_search(config: &ExperimentConfig, grid: &ParamGrid) -> Result<GridOutcome> {
    config.validate()?;
    if grid.params.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Config("grid parameters need at least one value".into()));
    }
    let points = grid.points();
    let mut best = Vec::new();
    let mut table = Vec::new();
    for entry in &config.policies {
        let Policy::Meta(base) = &entry.policy else {
            best.push(entry.clone());
            continue;
        };
        let mut scored: Vec<(f64, Vec<(String, f64)>, MetaPolicyConfig)> = Vec::new();
        for point in &points {
            let mut cfg = base.clone();
            for (name, v) in point {
                apply_param(&mut cfg, name, *v)?;
            }
            let sub = ExperimentConfig {
                policies: vec![PolicyEntry {
                    label: entry.label.clone(),
                    policy: Policy::Meta(cfg.clone()),
                }],
                first_instance: HOLDOUT_OFFSET + config.first_instance,
                out: None,
                ..config.clone()
            };
            let records = run_experiment(&sub)?;
            let (mean, std_error, _) = summarize(&records);
            table.push(GridRow {
                policy: entry.label.clone(),
                point: point.clone(),
                mean,
                std_error,
            });
            scored.push((mean, point.clone(), cfg));
        }
        let (_, _, cfg) = scored
            .into_iter()
            .min_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| {
                    a.1.iter()
                        .map(|x| x.1)
                        .zip(b.1.iter().map(|x| x.1))
                        .map(|(x, y)| x.total_cmp(&y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            })
            .expect("at least one grid point");
        best.push(PolicyEntry {
            label: entry.label.clone(),
            policy: Policy::Meta(cfg),
        });
    }
    Ok(GridOutcome { best, table })
}

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
    }
}

fn get_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

const ENV_KEYS: [&str; 13] = [
    "env", "depth", "p", "kernel", "signal_var", "lengthscale", "noise_var", "pegs", "budgets", "instances", "seed", "out",
    "wall_time",
];
const POLICY_KEYS: [&str; 11] = [
    "horizon",
    "uct_c",
    "prior_mean",
    "prior_var",
    "prior_noise",
    "correlated",
    "m_inner",
    "m_final",
    "ueb_tables",
    "ueb_prior_mean",
    "rollout_depth",
];

/// Builds an experiment and a grid from `key = value` settings.
///
/// Policy settings may be scoped to one policy as `key.policy`, e.g.
/// `uct_c.bayes_uct = 0.5`. Grid values are given as `grid.key = a,b,c`.
pub fn config_from_kv(map: &BTreeMap<String, String>) -> Result<(ExperimentConfig, ParamGrid)> {
    let policy_names: Vec<String> = get_list("policies", map.get("policies").map_or("voc_phi,uct", |s| s))?;
    let mut grid = ParamGrid::default();
    for (k, v) in map {
        if let Some(name) = k.strip_prefix("grid.") {
            grid.params.push((name.to_string(), get_list(k, v)?));
            continue;
        }
        let base = k.split_once('.').map_or(k.as_str(), |(b, scope)| {
            if policy_names.iter().any(|p| p == scope) {
                b
            } else {
                k.as_str()
            }
        });
        if base != "policies" && !ENV_KEYS.contains(&base) && !POLICY_KEYS.contains(&base) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
    }

    let env_name: String = get(map, "env", "bandit-tree".to_string())?;
    let signal_var: f64 = get(map, "signal_var", 0.1)?;
    let (env, default_horizon, default_prior, default_ueb_mean, default_rollout) = match env_name.as_str() {
        "bandit-tree" | "bandit_tree" => {
            let depth: u8 = get(map, "depth", 3)?;
            let kernel = match get(map, "kernel", "white".to_string())?.as_str() {
                "white" => Kernel::white(signal_var),
                "rbf" => Kernel::rbf(signal_var, get(map, "lengthscale", 8.0)?),
                other => return Err(Error::Config(format!("unknown kernel {other:?}"))),
            };
            let env = EnvSpec::BanditTree {
                depth,
                p: get(map, "p", 0.9)?,
                kernel,
                arm_noise_var: get(map, "noise_var", 0.01)?,
            };
            let prior = NormalPrior {
                mean0: 0.5,
                var0: signal_var,
                noise_var: 0.01,
            };
            (env, depth.min(3) as usize, prior, 0.5 + 2.0 * signal_var.sqrt(), None)
        }
        "peg" => {
            let pegs: usize = get(map, "pegs", 9)?;
            let prior = NormalPrior {
                mean0: (pegs as f64 - 1.0) / 2.0,
                var0: 4.0,
                noise_var: 4.0,
            };
            (EnvSpec::Peg { pegs }, 2, prior, pegs as f64 - 1.0, Some(16))
        }
        other => return Err(Error::Config(format!("unknown env {other:?}"))),
    };

    let mut policies = Vec::new();
    for name in &policy_names {
        if name == "oracle" {
            policies.push(PolicyEntry::oracle());
            continue;
        }
        let kind: PolicyKind = name.parse()?;
        let scoped = |key: &str| -> String {
            let s = format!("{key}.{name}");
            if map.contains_key(&s) {
                s
            } else {
                key.to_string()
            }
        };
        let g = |key: &str, d: f64| get(map, &scoped(key), d);
        let horizon: usize = get(map, &scoped("horizon"), default_horizon)?;
        let mean_default = if kind == PolicyKind::Ueb { default_ueb_mean } else { default_prior.mean0 };
        let mean_key = if kind == PolicyKind::Ueb && map.contains_key(&scoped("ueb_prior_mean")) {
            scoped("ueb_prior_mean")
        } else {
            scoped("prior_mean")
        };
        let prior = NormalPrior::new(
            get(map, &mean_key, mean_default)?,
            g("prior_var", default_prior.var0)?,
            g("prior_noise", default_prior.noise_var)?,
        )?;
        let mut cfg = MetaPolicyConfig::new(kind, horizon, 0, prior);
        cfg.uct_c = g("uct_c", 1.0)?;
        cfg.m_inner = get(map, &scoped("m_inner"), cfg.m_inner)?;
        cfg.m_final = get(map, &scoped("m_final"), cfg.m_final)?;
        cfg.ueb_tables = get(map, &scoped("ueb_tables"), cfg.ueb_tables)?;
        cfg.rollout_depth = match map.get(&scoped("rollout_depth")) {
            Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("rollout_depth: cannot parse {v:?}")))?),
            None => default_rollout,
        };
        let correlated_capable = matches!(
            kind,
            PolicyKind::VocPhi | PolicyKind::VocPsi | PolicyKind::VocPrimePhi | PolicyKind::BayesUct | PolicyKind::Thompson
        );
        if let EnvSpec::BanditTree { kernel, .. } = &env {
            if kernel.kind == KernelKind::Rbf && correlated_capable && get(map, &scoped("correlated"), true)? {
                cfg.kernel = Some(Kernel::rbf(cfg.prior.var0, kernel.lengthscale));
            }
        }
        policies.push(PolicyEntry {
            label: name.clone(),
            policy: Policy::Meta(cfg),
        });
    }

    let budgets = get_list(
        "budgets",
        map.get("budgets")
            .ok_or_else(|| Error::Config("budgets are required".into()))?,
    )?;
    let config = ExperimentConfig {
        env,
        policies,
        budgets,
        instances: get(map, "instances", 100)?,
        first_instance: 0,
        seed: get(map, "seed", 0)?,
        out: map.get("out").map(PathBuf::from),
        wall_time: get(map, "wall_time", false)?,
    };
    config.validate()?;
    Ok((config, grid))
}
