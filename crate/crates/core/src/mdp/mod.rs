//! Environment interface and the benchmark environments.

mod bandit_tree;
mod peg;
mod table;

pub use bandit_tree::{bandit_tree_optimal, ArmPrior, BanditState, BanditTreeEnv, Side};
pub use peg::{peg_apply, peg_legal_moves, peg_min_reachable, Move, PegBoard, PegSolitaire, BOARD_CELLS, BOARD_SIDE};
pub use table::TableMdp;

use std::fmt::Debug;
use std::hash::Hash;

use rand::Rng;

/// One outcome of taking an action: successor, probability and expected
/// immediate reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub next: S,
    pub prob: f64,
    pub reward: f64,
}

impl<S> Transition<S> {
    pub fn new(next: S, prob: f64, reward: f64) -> Self {
        Self { next, prob, reward }
    }
}

/// A finite Markov decision process with a generative sampler.
pub trait Mdp: Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;
    type Action: Clone + Eq + Debug + Send + Sync;

    /// Available actions; empty exactly when the state is terminal.
    fn actions(&self, state: &Self::State) -> Vec<Self::Action>;

    /// Outcome distribution of `(state, action)` with expected rewards.
    fn transitions(&self, state: &Self::State, action: &Self::Action) -> Vec<Transition<Self::State>>;

    fn gamma(&self) -> f64;

    fn is_terminal(&self, state: &Self::State) -> bool {
        self.actions(state).is_empty()
    }

    /// Samples a successor and a realized reward. The default draws from
    /// [`Mdp::transitions`] and returns the expected reward.
    fn step<R: Rng + ?Sized>(&self, state: &Self::State, action: &Self::Action, rng: &mut R) -> (Self::State, f64) {
        let outcomes = self.transitions(state, action);
        let t = sample_outcome(&outcomes, rng);
        (t.next.clone(), t.reward)
    }

    /// Position of a state-action on a line, for kernel-built priors.
    fn coordinate(&self, _state: &Self::State, _action: &Self::Action) -> Option<f64> {
        None
    }
}

/// Draws one outcome in proportion to its probability.
pub fn sample_outcome<'a, S, R: Rng + ?Sized>(outcomes: &'a [Transition<S>], rng: &mut R) -> &'a Transition<S> {
    debug_assert!(!outcomes.is_empty());
    if outcomes.len() == 1 {
        return &outcomes[0];
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for t in outcomes {
        acc += t.prob;
        if u < acc {
            return t;
        }
    }
    // Round-off: fall back to the last positive-probability outcome.
    outcomes.iter().rev().find(|t| t.prob > 0.0).unwrap_or(&outcomes[0])
}

/// Exact optimal action values `Q*(state, a)` by memo-free recursion over a
/// finite acyclic horizon. Intended for small oracle checks.
pub fn optimal_q_values<M: Mdp>(mdp: &M, state: &M::State) -> Vec<f64> {
    mdp.actions(state)
        .iter()
        .map(|a| {
            mdp.transitions(state, a)
                .iter()
                .map(|t| t.prob * (t.reward + mdp.gamma() * optimal_value(mdp, &t.next)))
                .sum()
        })
        .collect()
}

pub fn optimal_value<M: Mdp>(mdp: &M, state: &M::State) -> f64 {
    optimal_q_values(mdp, state)
        .into_iter()
        .fold(None, |acc: Option<f64>, q| Some(acc.map_or(q, |m| m.max(q))))
        .unwrap_or(0.0)
}
