//! Uniform n-step expansion of the current state, its frontier, and backups
//! of frontier values to the root actions.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;

use crate::belief::FrontierBelief;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::pwl::{Line, Pwl};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    Interior(Vec<Outcome>),
    /// Index into [`SearchGraph::frontier`].
    Frontier(usize),
}

#[derive(Debug, Clone)]
pub struct StateNode<S> {
    pub state: S,
    pub depth: usize,
    /// Ids of this state's action nodes; empty for terminal states.
    pub actions: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct ActionNode<A> {
    pub state_node: usize,
    pub action: A,
    pub kind: ActionKind,
}

/// A state-action pair reached after `depth = n - 1` transitions.
#[derive(Debug, Clone)]
pub struct FrontierEntry<S, A> {
    pub state: S,
    pub action: A,
    pub state_node: usize,
    pub action_node: usize,
    pub depth: usize,
    /// Discounted reward along the unique root path; `None` on stochastic
    /// graphs where paths are not unique.
    pub path_reward: Option<f64>,
    /// `gamma^depth`.
    pub scale: f64,
    /// Root action above this entry; `None` on stochastic graphs.
    pub root_action: Option<usize>,
    pub coordinate: Option<f64>,
}

/// A term of a root action's value once transitions are fixed:
/// `offset + scale * value(frontier)` or a constant from a terminal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leaf {
    Frontier { index: usize, offset: f64, scale: f64 },
    Constant(f64),
}

/// One successor per interior action node (by outcome position), drawn from
/// the transition model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicTransitionTable {
    choice: Vec<u32>,
}

impl DeterministicTransitionTable {
    /// Chosen outcome position for an interior action node.
    pub fn choice(&self, action_node: usize) -> usize {
        self.choice[action_node] as usize
    }
}

#[derive(Debug, Clone)]
pub struct SearchGraph<S, A> {
    horizon: usize,
    gamma: f64,
    deterministic: bool,
    states: Vec<StateNode<S>>,
    actions: Vec<ActionNode<A>>,
    frontier: Vec<FrontierEntry<S, A>>,
    /// Per frontier entry, the state nodes whose value depends on it,
    /// deepest first.
    ancestors: Vec<Vec<usize>>,
    root_leaves: Option<Vec<Vec<Leaf>>>,
}

/// Expands `sink` for `horizon` steps. Deterministic MDPs give a pure tree;
/// otherwise equal states at equal depth are merged.
pub fn expand<M: Mdp>(mdp: &M, sink: &M::State, horizon: usize) -> Result<SearchGraph<M::State, M::Action>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if mdp.is_terminal(sink) {
        return Err(Error::EmptyFrontier(format!("{sink:?} is terminal")));
    }
    let graph = match build(mdp, sink, horizon, false) {
        Some(tree) => tree,
        None => build(mdp, sink, horizon, true).expect("merged expansion never aborts"),
    };
    Ok(graph)
}

/// Breadth-first expansion. Without merging, returns `None` as soon as a
/// stochastic transition is met.
fn build<M: Mdp>(mdp: &M, sink: &M::State, horizon: usize, merge: bool) -> Option<SearchGraph<M::State, M::Action>> {
    let gamma = mdp.gamma();
    let mut states = vec![StateNode {
        state: sink.clone(),
        depth: 0,
        actions: 0..0,
    }];
    let mut actions: Vec<ActionNode<M::Action>> = Vec::new();
    let mut frontier = Vec::new();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new()];
    // (discounted path reward, gamma^depth, root action) per state; tree only.
    let mut path: Vec<(f64, f64, Option<usize>)> = vec![(0.0, 1.0, None)];
    let mut deterministic = true;
    let mut layer = vec![0usize];

    for depth in 0..horizon {
        let mut next_layer = Vec::new();
        let mut index: HashMap<M::State, usize> = HashMap::new();
        for &sid in &layer {
            let state = states[sid].state.clone();
            let acts = if mdp.is_terminal(&state) { Vec::new() } else { mdp.actions(&state) };
            let start = actions.len();
            for (k, a) in acts.into_iter().enumerate() {
                let aid = actions.len();
                let root_action = if depth == 0 { Some(k) } else { path[sid].2 };
                if depth + 1 == horizon {
                    let (b, scale, _) = path[sid];
                    frontier.push(FrontierEntry {
                        coordinate: mdp.coordinate(&state, &a),
                        state: state.clone(),
                        action: a.clone(),
                        state_node: sid,
                        action_node: aid,
                        depth,
                        path_reward: Some(b),
                        scale,
                        root_action,
                    });
                    actions.push(ActionNode {
                        state_node: sid,
                        action: a,
                        kind: ActionKind::Frontier(frontier.len() - 1),
                    });
                    continue;
                }
                let mut outcomes = Vec::new();
                for t in mdp.transitions(&state, &a) {
                    if t.prob <= 0.0 {
                        continue;
                    }
                    let existing = if merge { index.get(&t.next).copied() } else { None };
                    let next = existing.unwrap_or_else(|| {
                        let id = states.len();
                        states.push(StateNode {
                            state: t.next.clone(),
                            depth: depth + 1,
                            actions: 0..0,
                        });
                        parents.push(Vec::new());
                        let (b, scale, _) = path[sid];
                        path.push((b + scale * t.reward, scale * gamma, root_action));
                        if merge {
                            index.insert(t.next.clone(), id);
                        }
                        next_layer.push(id);
                        id
                    });
                    if !parents[next].contains(&sid) {
                        parents[next].push(sid);
                    }
                    outcomes.push(Outcome {
                        next,
                        prob: t.prob,
                        reward: t.reward,
                    });
                }
                if outcomes.len() != 1 {
                    deterministic = false;
                    if !merge {
                        return None;
                    }
                }
                actions.push(ActionNode {
                    state_node: sid,
                    action: a,
                    kind: ActionKind::Interior(outcomes),
                });
            }
            states[sid].actions = start..actions.len();
        }
        layer = next_layer;
    }

    if !deterministic {
        for f in &mut frontier {
            f.path_reward = None;
            f.root_action = None;
        }
    }
    let ancestors = frontier
        .iter()
        .map(|f| {
            let mut seen = vec![f.state_node];
            let mut stack = vec![f.state_node];
            while let Some(s) = stack.pop() {
                for &p in &parents[s] {
                    if !seen.contains(&p) {
                        seen.push(p);
                        stack.push(p);
                    }
                }
            }
            seen.sort_unstable_by(|a, b| b.cmp(a));
            seen
        })
        .collect();
    let mut graph = SearchGraph {
        horizon,
        gamma,
        deterministic,
        states,
        actions,
        frontier,
        ancestors,
        root_leaves: None,
    };
    if deterministic {
        let table = DeterministicTransitionTable {
            choice: vec![0; graph.actions.len()],
        };
        graph.root_leaves = Some(graph.table_leaves(&table));
    }
    Some(graph)
}

impl<S, A> SearchGraph<S, A> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Whether every expanded transition had a single successor, in which
    /// case the graph is a tree.
    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn sink(&self) -> &S {
        &self.states[0].state
    }

    pub fn states(&self) -> &[StateNode<S>] {
        &self.states
    }

    pub fn action_nodes(&self) -> &[ActionNode<A>] {
        &self.actions
    }

    pub fn frontier(&self) -> &[FrontierEntry<S, A>] {
        &self.frontier
    }

    pub fn num_root_actions(&self) -> usize {
        self.states[0].actions.len()
    }

    pub fn root_actions(&self) -> impl Iterator<Item = &A> {
        self.actions[self.states[0].actions.clone()].iter().map(|a| &a.action)
    }

    /// State nodes affected by a change of frontier entry `f`, deepest first.
    pub fn ancestors(&self, f: usize) -> &[usize] {
        &self.ancestors[f]
    }

    /// Per root action, the frontier terms and terminal constants whose max
    /// is that action's value. Deterministic graphs only.
    pub fn root_leaves(&self) -> Result<&[Vec<Leaf>]> {
        self.root_leaves
            .as_deref()
            .ok_or_else(|| Error::UnsupportedStructure("root leaves need deterministic transitions".into()))
    }

    /// `b + gamma^d * mean` for a frontier entry of a deterministic graph.
    pub fn y_mean(&self, f: usize, belief: &FrontierBelief) -> Result<f64> {
        let e = &self.frontier[f];
        match e.path_reward {
            Some(b) => Ok(b + e.scale * belief.mean(f)),
            None => Err(Error::UnsupportedStructure("Y is undefined on stochastic graphs".into())),
        }
    }

    pub fn sample_transition_table<R: Rng + ?Sized>(&self, rng: &mut R) -> DeterministicTransitionTable {
        let choice = self
            .actions
            .iter()
            .map(|a| match &a.kind {
                ActionKind::Frontier(_) => u32::MAX,
                ActionKind::Interior(outs) if outs.len() <= 1 => 0,
                ActionKind::Interior(outs) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = outs.len() - 1;
                    for (k, o) in outs.iter().enumerate() {
                        acc += o.prob;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    pick as u32
                }
            })
            .collect();
        DeterministicTransitionTable { choice }
    }

    /// Root-action leaves of the deterministic graph obtained by following
    /// `table`.
    pub fn table_leaves(&self, table: &DeterministicTransitionTable) -> Vec<Vec<Leaf>> {
        self.states[0]
            .actions
            .clone()
            .map(|aid| {
                let mut leaves = Vec::new();
                self.collect_leaves(aid, 0.0, 1.0, table, &mut leaves);
                leaves
            })
            .collect()
    }

    fn collect_leaves(&self, aid: usize, b: f64, scale: f64, table: &DeterministicTransitionTable, out: &mut Vec<Leaf>) {
        match &self.actions[aid].kind {
            ActionKind::Frontier(f) => out.push(Leaf::Frontier {
                index: *f,
                offset: b,
                scale,
            }),
            ActionKind::Interior(outs) => {
                let o = &outs[table.choice(aid)];
                let (b, scale) = (b + scale * o.reward, scale * self.gamma);
                let next = &self.states[o.next];
                if next.actions.is_empty() {
                    out.push(Leaf::Constant(b));
                }
                for child in next.actions.clone() {
                    self.collect_leaves(child, b, scale, table, out);
                }
            }
        }
    }

    /// Values of every action node given a value per frontier entry;
    /// terminal states are worth 0. The root's actions come first.
    pub fn backup<V: Backup>(&self, leaf: impl Fn(usize) -> V) -> Vec<V> {
        let mut state_vals: Vec<Option<V>> = vec![None; self.states.len()];
        let mut action_vals: Vec<Option<V>> = vec![None; self.actions.len()];
        for sid in (0..self.states.len()).rev() {
            let range = self.states[sid].actions.clone();
            if range.is_empty() {
                state_vals[sid] = Some(V::constant(0.0));
                continue;
            }
            for aid in range.clone() {
                let v = match &self.actions[aid].kind {
                    ActionKind::Frontier(f) => leaf(*f),
                    ActionKind::Interior(outs) => {
                        let terms: Vec<(f64, f64, &V)> = outs
                            .iter()
                            .map(|o| (o.prob, o.reward, state_vals[o.next].as_ref().expect("children first")))
                            .collect();
                        V::expectation(&terms, self.gamma)
                    }
                };
                action_vals[aid] = Some(v);
            }
            let vals: Vec<V> = range.map(|aid| action_vals[aid].clone().expect("just set")).collect();
            state_vals[sid] = Some(V::max_of(&vals));
        }
        action_vals.into_iter().map(|v| v.expect("all actions visited")).collect()
    }

    /// Root action values of the graph given `leaf[f]` per frontier entry.
    pub fn root_values(&self, leaf: &[f64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let mut out = Vec::new();
        self.root_values_into(leaf, &mut scratch, &mut out);
        out
    }

    /// Allocation-free form of [`Self::root_values`]: `state_vals` receives
    /// every state's value.
    pub fn root_values_into(&self, leaf: &[f64], state_vals: &mut Vec<f64>, out: &mut Vec<f64>) {
        state_vals.clear();
        state_vals.resize(self.states.len(), 0.0);
        for sid in (0..self.states.len()).rev() {
            let range = self.states[sid].actions.clone();
            let mut best = f64::NEG_INFINITY;
            for aid in range.clone() {
                best = best.max(self.action_value_f64(aid, leaf, state_vals));
            }
            state_vals[sid] = if range.is_empty() { 0.0 } else { best };
        }
        out.clear();
        out.extend(
            self.states[0]
                .actions
                .clone()
                .map(|aid| self.action_value_f64(aid, leaf, state_vals)),
        );
    }

    fn action_value_f64(&self, aid: usize, leaf: &[f64], state_vals: &[f64]) -> f64 {
        match &self.actions[aid].kind {
            ActionKind::Frontier(f) => leaf[*f],
            ActionKind::Interior(outs) => outs
                .iter()
                .map(|o| o.prob * (o.reward + self.gamma * state_vals[o.next]))
                .sum(),
        }
    }

    /// Root action values when only frontier entry `f` takes the value
    /// `value`; all other states keep `base_states` (from
    /// [`Self::root_values_into`] on `leaf`).
    pub fn backup_single<V: Backup>(&self, base_states: &[f64], leaf: &[f64], f: usize, value: V) -> Vec<V> {
        let anc = &self.ancestors[f];
        let mut changed: Vec<(usize, V)> = Vec::with_capacity(anc.len());
        let mut root = Vec::new();
        for &sid in anc {
            let range = self.states[sid].actions.clone();
            let vals: Vec<V> = range
                .map(|aid| match &self.actions[aid].kind {
                    ActionKind::Frontier(g) if *g == f => value.clone(),
                    ActionKind::Frontier(g) => V::constant(leaf[*g]),
                    ActionKind::Interior(outs) => {
                        let consts: Vec<V> = outs.iter().map(|o| V::constant(base_states[o.next])).collect();
                        let terms: Vec<(f64, f64, &V)> = outs
                            .iter()
                            .zip(&consts)
                            .map(|(o, c)| {
                                let v = changed.iter().find(|(s, _)| *s == o.next).map_or(c, |(_, v)| v);
                                (o.prob, o.reward, v)
                            })
                            .collect();
                        V::expectation(&terms, self.gamma)
                    }
                })
                .collect();
            if sid == 0 {
                root = vals;
            } else {
                changed.push((sid, V::max_of(&vals)));
            }
        }
        root
    }
}

/// Value algebra for backups: constants, max over actions, and expectation
/// over successors.
pub trait Backup: Clone {
    fn constant(c: f64) -> Self;
    /// Max over a non-empty list.
    fn max_of(values: &[Self]) -> Self;
    /// `sum prob * (reward + gamma * value)`.
    fn expectation(terms: &[(f64, f64, &Self)], gamma: f64) -> Self;
}

impl Backup for f64 {
    fn constant(c: f64) -> Self {
        c
    }

    fn max_of(values: &[Self]) -> Self {
        values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn expectation(terms: &[(f64, f64, &Self)], gamma: f64) -> Self {
        terms.iter().map(|(p, r, v)| p * (r + gamma * **v)).sum()
    }
}

impl Backup for Pwl {
    fn constant(c: f64) -> Self {
        Pwl::constant(c)
    }

    fn max_of(values: &[Self]) -> Self {
        Pwl::max_of(values)
    }

    fn expectation(terms: &[(f64, f64, &Self)], gamma: f64) -> Self {
        let mut acc = Pwl::constant(0.0);
        let mut offset = 0.0;
        for (p, r, v) in terms {
            offset += p * r;
            if v.is_linear() {
                let l = v.lines()[0];
                acc = acc.add_line(Line::new(p * gamma * l.intercept, p * gamma * l.slope));
            } else {
                acc = acc.add(&v.affine(p * gamma, 0.0));
            }
        }
        acc.affine(1.0, offset)
    }
}

/// Mean and standard deviation of a value, propagated by taking the
/// highest-mean action at states and combining successors as independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl Backup for MeanSd {
    fn constant(c: f64) -> Self {
        MeanSd { mean: c, sd: 0.0 }
    }

    fn max_of(values: &[Self]) -> Self {
        let mut best = values[0];
        for v in &values[1..] {
            if v.mean > best.mean {
                best = *v;
            }
        }
        best
    }

    fn expectation(terms: &[(f64, f64, &Self)], gamma: f64) -> Self {
        let mean = terms.iter().map(|(p, r, v)| p * (r + gamma * v.mean)).sum();
        let var: f64 = terms.iter().map(|(p, _, v)| (p * v.sd).powi(2)).sum();
        MeanSd {
            mean,
            sd: gamma * var.sqrt(),
        }
    }
}
