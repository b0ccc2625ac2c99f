//! Meta-level policies: which computation to perform next, and which root
//! action to take once computation stops.

mod uct;

pub use uct::{argmax_random_tie, rollout, uct_select, ChildStats, UctTree};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::belief::{CorrelatedBelief, FrontierBelief, IndependentBelief, Kernel, NormalPrior, ObservationLog};
use crate::error::{Error, Result};
use crate::graph::{expand, ActionKind, DeterministicTransitionTable, MeanSd, SearchGraph};
use crate::mdp::Mdp;
use crate::normal::expected_improvement;
use crate::values::{argmax, lr_bound_tables, static_value};
use crate::voc::{dynamic_value_crn, phi_vocs, phi_vocs_closed_form, psi_vocs, ueb_scores_tables, CommonNoise, PhiVoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// Greedy in the VOC of the static value.
    VocPhi,
    /// Greedy in the VOC of the dynamic value.
    VocPsi,
    /// Greedy in VOC′ of the static value.
    VocPrimePhi,
    /// Upper expectation bound gradient.
    Ueb,
    Uct,
    /// VOC′ of one-step static values at the root, UCT below.
    Voi,
    BayesUct,
    Thompson,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::VocPhi,
        PolicyKind::VocPsi,
        PolicyKind::VocPrimePhi,
        PolicyKind::Ueb,
        PolicyKind::Uct,
        PolicyKind::Voi,
        PolicyKind::BayesUct,
        PolicyKind::Thompson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::VocPhi => "voc_phi",
            PolicyKind::VocPsi => "voc_psi",
            PolicyKind::VocPrimePhi => "voc_prime_phi",
            PolicyKind::Ueb => "ueb",
            PolicyKind::Uct => "uct",
            PolicyKind::Voi => "voi",
            PolicyKind::BayesUct => "bayes_uct",
            PolicyKind::Thompson => "thompson",
        }
    }

    /// Whether the policy scores computations by a value of computation, so
    /// that a stopping threshold applies.
    pub fn has_voc(self) -> bool {
        matches!(
            self,
            PolicyKind::VocPhi | PolicyKind::VocPsi | PolicyKind::VocPrimePhi | PolicyKind::Voi
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaPolicyConfig {
    pub kind: PolicyKind,
    /// Spatial horizon `n` of the expanded graph. VOI always uses 1.
    pub horizon: usize,
    /// Number of computations; `None` runs until the VOC threshold stops it.
    pub budget: Option<usize>,
    /// Stop once the best VOC falls below this cost.
    pub stop_threshold: Option<f64>,
    pub uct_c: f64,
    /// Frontier prior; `noise_var` is the assumed observation variance.
    pub prior: NormalPrior,
    /// Correlated frontier prior over frontier coordinates.
    pub kernel: Option<Kernel>,
    /// Shared noise rows per VOC(ψ) evaluation.
    pub m_inner: usize,
    /// Noise rows for the final dynamic valuation.
    pub m_final: usize,
    /// Sampled transition tables for UEB on stochastic graphs.
    pub ueb_tables: usize,
    pub rollout_depth: Option<usize>,
}

impl MetaPolicyConfig {
    pub fn new(kind: PolicyKind, horizon: usize, budget: usize, prior: NormalPrior) -> Self {
        Self {
            kind,
            horizon,
            budget: Some(budget),
            stop_threshold: None,
            uct_c: 1.0,
            prior,
            kernel: None,
            m_inner: 64,
            m_final: 1000,
            ueb_tables: 16,
            rollout_depth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.uct_c >= 0.0) {
            return Err(Error::Config(format!("uct_c {} must be >= 0", self.uct_c)));
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
            if !matches!(self.kind, PolicyKind::VocPhi | PolicyKind::VocPsi | PolicyKind::VocPrimePhi | PolicyKind::BayesUct | PolicyKind::Thompson) {
                return Err(Error::Config(format!("{} uses independent beliefs only", self.kind)));
            }
        }
        if let Some(c) = self.stop_threshold {
            if !self.kind.has_voc() {
                return Err(Error::Config(format!("{} has no VOC to threshold", self.kind)));
            }
            if !(c > 0.0) && self.budget.is_none() {
                return Err(Error::Config("an open-ended budget needs a positive threshold".into()));
            }
        }
        if self.budget.is_none() && self.stop_threshold.is_none() {
            return Err(Error::Config("need a budget or a stopping threshold".into()));
        }
        if self.kind == PolicyKind::VocPsi && (self.m_inner < 2 || self.m_final < 2) {
            return Err(Error::Config("VOC(ψ) needs at least two noise rows".into()));
        }
        Ok(())
    }
}

/// Result of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome<A> {
    pub action: A,
    pub action_index: usize,
    /// Computations (rollouts) performed.
    pub computations: usize,
    /// Final valuation of each root action used to pick `action`.
    pub valuation: Vec<f64>,
}

/// Chooses an action at `state` with the configured meta-policy.
pub fn plan<M: Mdp, R: Rng + ?Sized>(
    mdp: &M,
    state: &M::State,
    config: &MetaPolicyConfig,
    rng: &mut R,
) -> Result<PlanOutcome<M::Action>> {
    config.validate()?;
    if mdp.is_terminal(state) {
        return Err(Error::EmptyFrontier(format!("{state:?} is terminal")));
    }
    if config.kind == PolicyKind::Uct {
        return plan_uct(mdp, state, config, rng);
    }
    let horizon = if config.kind == PolicyKind::Voi { 1 } else { config.horizon };
    let graph = expand(mdp, state, horizon)?;
    let belief = initial_belief(&graph, config)?;
    run_hybrid(mdp, graph, belief, config, rng)
}

/// [`plan`] starting from a given frontier belief instead of the configured
/// prior. The belief must cover the frontier of the configured horizon.
pub fn plan_with_belief<M: Mdp, R: Rng + ?Sized>(
    mdp: &M,
    state: &M::State,
    config: &MetaPolicyConfig,
    belief: FrontierBelief,
    rng: &mut R,
) -> Result<PlanOutcome<M::Action>> {
    config.validate()?;
    if config.kind == PolicyKind::Uct {
        return Err(Error::Config("UCT keeps no frontier belief".into()));
    }
    let horizon = if config.kind == PolicyKind::Voi { 1 } else { config.horizon };
    let graph = expand(mdp, state, horizon)?;
    crate::values::check_cover(&graph, &belief)?;
    run_hybrid(mdp, graph, belief, config, rng)
}

fn initial_belief<S, A>(graph: &SearchGraph<S, A>, config: &MetaPolicyConfig) -> Result<FrontierBelief> {
    let n = graph.frontier().len();
    match &config.kernel {
        Some(kernel) if config.kind != PolicyKind::Voi => {
            let coords = graph
                .frontier()
                .iter()
                .map(|f| f.coordinate)
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Config("a kernel prior needs frontier coordinates".into()))?;
            Ok(FrontierBelief::Correlated(CorrelatedBelief::from_kernel(
                config.prior.mean0,
                kernel,
                &coords,
                config.prior.noise_var,
            )?))
        }
        _ => Ok(FrontierBelief::Independent(IndependentBelief::uniform(config.prior, n)?)),
    }
}

fn plan_uct<M: Mdp, R: Rng + ?Sized>(
    mdp: &M,
    state: &M::State,
    config: &MetaPolicyConfig,
    rng: &mut R,
) -> Result<PlanOutcome<M::Action>> {
    let budget = config.budget.expect("validated");
    let mut tree = UctTree::new(state.clone());
    for _ in 0..budget {
        tree.iterate(mdp, config.uct_c, config.rollout_depth, rng);
    }
    let actions = mdp.actions(state);
    let children = tree.root_children();
    let valuation: Vec<f64> = if children.is_empty() {
        vec![f64::NEG_INFINITY; actions.len()]
    } else {
        children
            .iter()
            .map(|(_, s)| if s.visits == 0 { f64::NEG_INFINITY } else { s.mean })
            .collect()
    };
    let action_index = argmax(&valuation);
    Ok(PlanOutcome {
        action: actions[action_index].clone(),
        action_index,
        computations: budget,
        valuation,
    })
}

/// Mutable state of a planning call: graph, belief, observations, and the
/// UCT trees used to sample beyond the horizon.
pub struct HybridState<M: Mdp> {
    pub graph: SearchGraph<M::State, M::Action>,
    pub belief: FrontierBelief,
    pub log: ObservationLog,
    pub trees: HashMap<M::State, UctTree<M::State, M::Action>>,
}

impl<M: Mdp> HybridState<M> {
    pub fn new(graph: SearchGraph<M::State, M::Action>, belief: FrontierBelief) -> Self {
        Self {
            graph,
            belief,
            log: ObservationLog::new(),
            trees: HashMap::new(),
        }
    }

    /// Performs the computation at frontier entry `omega`: step to a
    /// successor, grow its UCT tree by one rollout, and record the return.
    pub fn compute<R: Rng + ?Sized>(
        &mut self,
        mdp: &M,
        omega: usize,
        uct_c: f64,
        rollout_depth: Option<usize>,
        rng: &mut R,
    ) -> Result<f64> {
        let entry = &self.graph.frontier()[omega];
        let (next, reward) = mdp.step(&entry.state, &entry.action, rng);
        let tree = self
            .trees
            .entry(next.clone())
            .or_insert_with(|| UctTree::new(next));
        let g = tree.iterate(mdp, uct_c, rollout_depth, rng);
        let obs = reward + mdp.gamma() * g;
        self.belief.observe(omega, obs)?;
        self.log.push(omega, obs);
        Ok(obs)
    }
}

fn phi_scores<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> Vec<PhiVoc> {
    if graph.is_deterministic() && belief.is_independent() {
        phi_vocs_closed_form(graph, belief).expect("deterministic graph with independent beliefs")
    } else {
        phi_vocs(graph, belief)
    }
}

/// Which frontier entries can be reached below each state and action node.
fn frontier_reach<S, A>(graph: &SearchGraph<S, A>) -> (Vec<bool>, Vec<bool>) {
    let mut states = vec![false; graph.states().len()];
    let mut actions = vec![false; graph.action_nodes().len()];
    for sid in (0..graph.states().len()).rev() {
        for aid in graph.states()[sid].actions.clone() {
            actions[aid] = match &graph.action_nodes()[aid].kind {
                ActionKind::Frontier(_) => true,
                ActionKind::Interior(outs) => outs.iter().any(|o| states[o.next]),
            };
            states[sid] |= actions[aid];
        }
    }
    (states, actions)
}

fn run_hybrid<M: Mdp, R: Rng + ?Sized>(
    mdp: &M,
    graph: SearchGraph<M::State, M::Action>,
    belief: FrontierBelief,
    config: &MetaPolicyConfig,
    rng: &mut R,
) -> Result<PlanOutcome<M::Action>> {
    let kind = config.kind;
    let mut hs: HybridState<M> = HybridState::new(graph, belief);
    let tables: Vec<DeterministicTransitionTable> = if kind == PolicyKind::Ueb && !hs.graph.is_deterministic() {
        (0..config.ueb_tables.max(1))
            .map(|_| hs.graph.sample_transition_table(rng))
            .collect()
    } else {
        Vec::new()
    };
    let (state_reach, action_reach) = frontier_reach(&hs.graph);
    let mut visits = vec![0u64; hs.graph.states().len()];
    let budget = config.budget.unwrap_or(usize::MAX);
    let mut t = 0;
    while t < budget && !hs.graph.frontier().is_empty() {
        let omega = match kind {
            PolicyKind::VocPhi | PolicyKind::VocPrimePhi | PolicyKind::Voi | PolicyKind::VocPsi => {
                let scores: Vec<f64> = match kind {
                    PolicyKind::VocPhi => phi_scores(&hs.graph, &hs.belief).iter().map(|v| v.voc).collect(),
                    PolicyKind::VocPsi => {
                        let noise = CommonNoise::new(config.m_inner, hs.belief.len(), rng);
                        psi_vocs(&hs.graph, &hs.belief, &noise)
                    }
                    _ => phi_scores(&hs.graph, &hs.belief).iter().map(|v| v.voc_prime).collect(),
                };
                if let Some(c) = config.stop_threshold {
                    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if best < c {
                        break;
                    }
                }
                argmax_random_tie(&scores, rng)
            }
            PolicyKind::Ueb => {
                let FrontierBelief::Independent(b) = &hs.belief else {
                    return Err(Error::Config("UEB needs independent beliefs".into()));
                };
                ueb_scores_tables(&hs.graph, b, &tables)?.select()
            }
            PolicyKind::BayesUct | PolicyKind::Thompson => {
                match descend(&hs, kind, config.uct_c, &state_reach, &action_reach, &mut visits, rng) {
                    Some(f) => f,
                    None => break,
                }
            }
            PolicyKind::Uct => unreachable!("handled by plan_uct"),
        };
        hs.compute(mdp, omega, config.uct_c, config.rollout_depth, rng)?;
        t += 1;
    }

    let valuation = match kind {
        PolicyKind::VocPsi => {
            let noise = CommonNoise::new(config.m_final, hs.belief.len().max(1), rng);
            dynamic_value_crn(&hs.graph, &hs.belief, &noise)
        }
        PolicyKind::Ueb => {
            if hs.graph.is_deterministic() {
                crate::values::lr_bound(&hs.graph, &hs.belief)?
                    .iter()
                    .map(|b| b.lambda)
                    .collect()
            } else {
                lr_bound_tables(&hs.graph, &hs.belief, &tables)
            }
        }
        _ => static_value(&hs.graph, &hs.belief),
    };
    let action_index = argmax(&valuation);
    let action = hs
        .graph
        .root_actions()
        .nth(action_index)
        .cloned()
        .expect("non-terminal sink has actions");
    Ok(PlanOutcome {
        action,
        action_index,
        computations: t,
        valuation,
    })
}

/// Walks down the graph with the Bayes-UCT or Thompson rule until a
/// frontier entry is chosen; transitions are sampled from the model among
/// successors that still lead to a frontier entry.
fn descend<M: Mdp, R: Rng + ?Sized>(
    hs: &HybridState<M>,
    kind: PolicyKind,
    uct_c: f64,
    state_reach: &[bool],
    action_reach: &[bool],
    visits: &mut [u64],
    rng: &mut R,
) -> Option<usize> {
    let graph = &hs.graph;
    let values: Vec<MeanSd> = graph.backup(|j| MeanSd {
        mean: hs.belief.mean(j),
        sd: hs.belief.sd(j),
    });
    let mut sid = 0;
    loop {
        let ids: Vec<usize> = graph.states()[sid]
            .actions
            .clone()
            .filter(|&a| action_reach[a])
            .collect();
        if ids.is_empty() {
            return None;
        }
        let stats: Vec<MeanSd> = ids.iter().map(|&a| values[a]).collect();
        let pick = match kind {
            PolicyKind::BayesUct => bayes_uct_select(&stats, visits[sid], uct_c, rng),
            _ => thompson_select(&stats, rng),
        };
        visits[sid] += 1;
        let aid = ids[pick];
        match &graph.action_nodes()[aid].kind {
            ActionKind::Frontier(f) => return Some(*f),
            ActionKind::Interior(outs) => {
                let total: f64 = outs.iter().filter(|o| state_reach[o.next]).map(|o| o.prob).sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut next = None;
                for o in outs.iter().filter(|o| state_reach[o.next]) {
                    acc += o.prob;
                    next = Some(o.next);
                    if u < acc {
                        break;
                    }
                }
                sid = next?;
            }
        }
    }
}

/// Bayes-UCT child choice: `mean + c * sd * sqrt(2 ln N)`, random ties.
pub fn bayes_uct_select<R: Rng + ?Sized>(children: &[MeanSd], parent_visits: u64, uct_c: f64, rng: &mut R) -> usize {
    let bonus = (2.0 * (parent_visits.max(1) as f64).ln()).sqrt();
    let scores: Vec<f64> = children.iter().map(|c| c.mean + uct_c * c.sd * bonus).collect();
    argmax_random_tie(&scores, rng)
}

/// Thompson child choice: one posterior draw per child, largest wins.
pub fn thompson_select<R: Rng + ?Sized>(children: &[MeanSd], rng: &mut R) -> usize {
    let draws: Vec<f64> = children
        .iter()
        .map(|c| c.mean + c.sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    argmax_random_tie(&draws, rng)
}

/// VOC′ of one-step static values for each root action under independent
/// beliefs: the gain from possibly changing the preferred action.
pub fn voi_scores(belief: &IndependentBelief) -> Vec<f64> {
    let means: Vec<f64> = belief.nodes().iter().map(|n| n.post_mean).collect();
    let best = argmax(&means);
    means
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let node = belief.node(i);
            let s = crate::voc::preposterior_sd(node.post_var, belief.prior(i).noise_var);
            if i == best {
                let other = means
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                if other == f64::NEG_INFINITY {
                    0.0
                } else {
                    // E[(other - X)+] for X ~ N(m, s^2).
                    expected_improvement(m, s, other) + other.max(m) - m
                }
            } else {
                expected_improvement(m, s, means[best])
            }
        })
        .collect()
}

/// Root action to sample next under the VOI rule, random ties.
pub fn voi_policy_choose<R: Rng + ?Sized>(belief: &IndependentBelief, rng: &mut R) -> usize {
    argmax_random_tie(&voi_scores(belief), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Kernel;
    use crate::graph::expand;
    use crate::mdp::{BanditTreeEnv, TableMdp, Transition};
    use crate::normal::{cdf, RunningStats};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("nope".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn bayes_uct_examples() {
        let mut r = rng(0);
        let kids = [MeanSd { mean: 0.5, sd: 0.1 }, MeanSd { mean: 0.4, sd: 0.3 }];
        let b = (2.0 * 8f64.ln()).sqrt();
        assert!((0.5 + 0.1 * b - 0.7039).abs() < 1e-4 && (0.4 + 0.3 * b - 1.0118).abs() < 1e-4);
        assert_eq!(bayes_uct_select(&kids, 8, 1.0, &mut r), 1);
        let flat = [MeanSd { mean: 0.5, sd: 0.0 }, MeanSd { mean: 0.4, sd: 0.0 }];
        assert_eq!(bayes_uct_select(&flat, 8, 1.0, &mut r), 0);
        let eq = [MeanSd { mean: 0.5, sd: 0.1 }, MeanSd { mean: 0.5, sd: 0.2 }];
        assert_eq!(bayes_uct_select(&eq, 3, 1.0, &mut r), 1);
    }

    #[test]
    fn thompson_frequencies() {
        let mut r = rng(1);
        let kids = [MeanSd { mean: 0.3, sd: 0.5 }, MeanSd { mean: 0.1, sd: 0.7 }];
        let n = 100_000;
        let s: RunningStats = (0..n).map(|_| (thompson_select(&kids, &mut r) == 0) as u8 as f64).collect();
        let p = cdf(0.2 / (0.25f64 + 0.49).sqrt());
        assert!((s.mean() - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt());
        // Swapping the children swaps the frequencies.
        let swapped = [kids[1], kids[0]];
        let s2: RunningStats = (0..n).map(|_| (thompson_select(&swapped, &mut r) == 1) as u8 as f64).collect();
        assert!((s2.mean() - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt());
        let flat = [MeanSd { mean: 0.3, sd: 0.0 }, MeanSd { mean: 0.1, sd: 0.0 }];
        assert_eq!(thompson_select(&flat, &mut r), 0);
    }

    #[test]
    fn voi_matches_voc_prime_on_one_step_graph() {
        let m = TableMdp::complete_tree(3, 1, |_, _| 0.0, 1.0);
        let g = expand(&m, &0, 1).unwrap();
        let b = IndependentBelief::with_priors(vec![
            NormalPrior::new(0.2, 1.0, 0.5).unwrap(),
            NormalPrior::new(0.5, 0.3, 0.5).unwrap(),
            NormalPrior::new(-0.1, 2.0, 0.5).unwrap(),
        ])
        .unwrap();
        let fb = FrontierBelief::Independent(b.clone());
        let exact: Vec<f64> = phi_vocs(&g, &fb).iter().map(|v| v.voc_prime).collect();
        for (a, e) in voi_scores(&b).iter().zip(&exact) {
            assert!((a - e).abs() < 1e-12);
        }
        // Monte Carlo of the definition for the currently best action.
        let mut r = rng(2);
        let s: RunningStats = (0..1_000_000)
            .map(|_| {
                let o = fb.predictive_sample(1, &mut r);
                let post = fb.updated(1, o).unwrap();
                let mu = post.means();
                mu.iter().copied().fold(f64::NEG_INFINITY, f64::max) - mu[1]
            })
            .collect();
        assert!((s.mean() - exact[1]).abs() <= 3.0 * s.std_error());
    }

    #[test]
    fn voi_dominant_action() {
        let b = IndependentBelief::with_priors(vec![
            NormalPrior::new(100.0, 0.0, 1.0).unwrap(),
            NormalPrior::new(0.0, 1.0, 1.0).unwrap(),
            NormalPrior::new(0.0, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let v = voi_scores(&b);
        assert!(v.iter().all(|x| *x < 1e-12), "{v:?}");
    }

    fn bandit(depth: u8, p: f64, seed: u64) -> BanditTreeEnv {
        BanditTreeEnv::build(depth, p, &Kernel::white(0.1), 0.01, &mut rng(seed)).unwrap()
    }

    #[test]
    fn budget_zero_returns_prior_argmax() {
        let env = bandit(3, 0.9, 0);
        for kind in PolicyKind::ALL {
            let cfg = MetaPolicyConfig::new(kind, 2, 0, NormalPrior::new(0.5, 0.1, 0.01).unwrap());
            let out = plan(&env, &env.root(), &cfg, &mut rng(1)).unwrap();
            assert_eq!(out.computations, 0);
            assert_eq!(out.action_index, 0, "{kind}");
        }
    }

    #[test]
    fn every_policy_spends_the_budget() {
        let env = bandit(4, 0.8, 2);
        for kind in PolicyKind::ALL {
            let mut cfg = MetaPolicyConfig::new(kind, 2, 25, NormalPrior::new(0.5, 0.1, 0.01).unwrap());
            cfg.m_inner = 8;
            cfg.m_final = 50;
            let out = plan(&env, &env.root(), &cfg, &mut rng(3)).unwrap();
            assert_eq!(out.computations, 25, "{kind}");
            let again = plan(&env, &env.root(), &cfg, &mut rng(3)).unwrap();
            assert_eq!(out, again, "{kind} is not deterministic");
        }
    }

    #[test]
    fn correlated_policies_run() {
        let env = BanditTreeEnv::build(5, 0.9, &Kernel::rbf(0.1, 4.0), 0.01, &mut rng(5)).unwrap();
        for kind in [PolicyKind::VocPhi, PolicyKind::VocPsi, PolicyKind::BayesUct, PolicyKind::Thompson] {
            let mut cfg = MetaPolicyConfig::new(kind, 3, 10, NormalPrior::new(0.5, 0.1, 0.01).unwrap());
            cfg.kernel = Some(Kernel::rbf(0.1, 4.0));
            cfg.m_inner = 8;
            cfg.m_final = 50;
            assert_eq!(plan(&env, &env.root(), &cfg, &mut rng(6)).unwrap().computations, 10);
        }
        let mut cfg = MetaPolicyConfig::new(PolicyKind::Ueb, 3, 10, NormalPrior::new(0.5, 0.1, 0.01).unwrap());
        cfg.kernel = Some(Kernel::white(0.1));
        assert!(plan(&env, &env.root(), &cfg, &mut rng(6)).is_err());
    }

    /// L -> X with two unknown frontier actions, R -> Y with one known
    /// frontier action worth -1.
    fn counterexample() -> (TableMdp, FrontierBelief) {
        let rows = vec![
            vec![vec![Transition::new(1, 1.0, 0.0)], vec![Transition::new(2, 1.0, 0.0)]],
            vec![vec![Transition::new(3, 1.0, 0.0)], vec![Transition::new(4, 1.0, 0.0)]],
            vec![vec![Transition::new(5, 1.0, 0.0)]],
            vec![],
            vec![],
            vec![],
        ];
        let b = IndependentBelief::with_priors(vec![
            NormalPrior::new(0.0, 1.0, 1.0).unwrap(),
            NormalPrior::new(0.0, 1.0, 1.0).unwrap(),
            NormalPrior::new(-1.0, 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        (TableMdp::new(rows, 1.0), FrontierBelief::Independent(b))
    }

    #[test]
    fn threshold_mode_on_counterexample() {
        let (m, b) = counterexample();
        let prior = NormalPrior::new(0.0, 1.0, 1.0).unwrap();
        let mut cfg = MetaPolicyConfig::new(PolicyKind::VocPrimePhi, 2, 0, prior);
        cfg.budget = None;
        cfg.stop_threshold = Some(0.1);
        let out = plan_with_belief(&m, &0, &cfg, b.clone(), &mut rng(0)).unwrap();
        assert_eq!((out.computations, out.action_index), (0, 0));
        cfg.kind = PolicyKind::VocPhi;
        let out = plan_with_belief(&m, &0, &cfg, b, &mut rng(0)).unwrap();
        assert!(out.computations >= 1);
    }

    #[test]
    fn config_validation() {
        let prior = NormalPrior::new(0.0, 1.0, 1.0).unwrap();
        let mut cfg = MetaPolicyConfig::new(PolicyKind::Uct, 2, 5, prior);
        cfg.budget = None;
        assert!(cfg.validate().is_err());
        cfg.stop_threshold = Some(0.1);
        assert!(cfg.validate().is_err());
        cfg.kind = PolicyKind::VocPhi;
        assert!(cfg.validate().is_ok());
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
    }
}
