use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::mdp::Mdp;

/// Visit statistics of one child as seen by a tree policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildStats {
    pub mean: f64,
    pub visits: u64,
}

/// UCB1 child selection: unvisited children first (uniformly at random),
/// otherwise the largest `mean + c * sqrt(2 ln N / n)` with random ties.
pub fn uct_select<R: Rng + ?Sized>(children: &[ChildStats], parent_visits: u64, uct_c: f64, rng: &mut R) -> usize {
    assert!(!children.is_empty(), "selection at a node without children");
    let unvisited: Vec<usize> = (0..children.len()).filter(|&i| children[i].visits == 0).collect();
    if let Some(&i) = unvisited.choose(rng) {
        return i;
    }
    let log_n = (parent_visits.max(1) as f64).ln();
    let scores: Vec<f64> = children
        .iter()
        .map(|c| c.mean + uct_c * (2.0 * log_n / c.visits as f64).sqrt())
        .collect();
    argmax_random_tie(&scores, rng)
}

/// Index of the largest value, uniformly random among exact ties.
pub fn argmax_random_tie<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    match ties.len() {
        0 => 0,
        1 => ties[0],
        _ => *ties.choose(rng).expect("non-empty"),
    }
}

#[derive(Debug, Clone)]
struct Edge<S, A> {
    action: A,
    visits: u64,
    value_sum: f64,
    children: HashMap<S, usize>,
}

#[derive(Debug, Clone)]
struct Node<S, A> {
    state: S,
    visits: u64,
    value_sum: f64,
    edges: Option<Vec<Edge<S, A>>>,
}

/// A UCT search tree grown one node per iteration.
#[derive(Debug, Clone)]
pub struct UctTree<S, A> {
    nodes: Vec<Node<S, A>>,
}

impl<S: Clone + Eq + std::hash::Hash, A: Clone> UctTree<S, A> {
    pub fn new(root: S) -> Self {
        Self {
            nodes: vec![Node {
                state: root,
                visits: 0,
                value_sum: 0.0,
                edges: None,
            }],
        }
    }

    pub fn root_state(&self) -> &S {
        &self.nodes[0].state
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of iterations that passed through the root.
    pub fn root_visits(&self) -> u64 {
        self.nodes[0].visits
    }

    /// Mean return of all iterations, 0 before the first.
    pub fn root_mean(&self) -> f64 {
        let n = &self.nodes[0];
        if n.visits == 0 {
            0.0
        } else {
            n.value_sum / n.visits as f64
        }
    }

    /// Per root action statistics, in the MDP's action order. Empty before
    /// the first iteration or at a terminal root.
    pub fn root_children(&self) -> Vec<(A, ChildStats)> {
        self.nodes[0]
            .edges
            .as_ref()
            .map(|edges| edges.iter().map(|e| (e.action.clone(), edge_stats(e))).collect())
            .unwrap_or_default()
    }

    /// One select-expand-rollout-backup pass. Returns the discounted return
    /// from the root.
    pub fn iterate<M, R>(&mut self, mdp: &M, uct_c: f64, rollout_depth: Option<usize>, rng: &mut R) -> f64
    where
        M: Mdp<State = S, Action = A>,
        R: Rng + ?Sized,
    {
        if mdp.is_terminal(&self.nodes[0].state) {
            return 0.0;
        }
        let gamma = mdp.gamma();
        let mut path: Vec<(usize, usize, f64)> = Vec::new();
        let mut node = 0;
        let leaf_value = loop {
            if mdp.is_terminal(&self.nodes[node].state) {
                break 0.0;
            }
            if self.nodes[node].edges.is_none() {
                let edges = mdp
                    .actions(&self.nodes[node].state)
                    .into_iter()
                    .map(|action| Edge {
                        action,
                        visits: 0,
                        value_sum: 0.0,
                        children: HashMap::new(),
                    })
                    .collect();
                self.nodes[node].edges = Some(edges);
            }
            let edges = self.nodes[node].edges.as_ref().expect("initialized above");
            let stats: Vec<ChildStats> = edges.iter().map(edge_stats).collect();
            let e = uct_select(&stats, self.nodes[node].visits, uct_c, rng);
            let action = edges[e].action.clone();
            let (next, reward) = mdp.step(&self.nodes[node].state, &action, rng);
            path.push((node, e, reward));
            if let Some(&child) = edges[e].children.get(&next) {
                node = child;
                continue;
            }
            let id = self.nodes.len();
            self.nodes[node].edges.as_mut().expect("initialized")[e]
                .children
                .insert(next.clone(), id);
            self.nodes.push(Node {
                state: next.clone(),
                visits: 0,
                value_sum: 0.0,
                edges: None,
            });
            let value = rollout(mdp, &next, rollout_depth, rng);
            // The new node is counted by the backup below.
            self.nodes[id].visits += 1;
            self.nodes[id].value_sum += value;
            break value;
        };
        let mut g = leaf_value;
        for &(node, e, reward) in path.iter().rev() {
            g = reward + gamma * g;
            let n = &mut self.nodes[node];
            n.visits += 1;
            n.value_sum += g;
            let edge = &mut n.edges.as_mut().expect("visited")[e];
            edge.visits += 1;
            edge.value_sum += g;
        }
        g
    }
}

fn edge_stats<S, A>(e: &Edge<S, A>) -> ChildStats {
    ChildStats {
        mean: if e.visits == 0 { 0.0 } else { e.value_sum / e.visits as f64 },
        visits: e.visits,
    }
}

/// Discounted return of a uniformly random policy from `state`, for at most
/// `max_steps` steps (unbounded when `None`).
pub fn rollout<M: Mdp, R: Rng + ?Sized>(mdp: &M, state: &M::State, max_steps: Option<usize>, rng: &mut R) -> f64 {
    let gamma = mdp.gamma();
    let (mut total, mut discount, mut steps) = (0.0, 1.0, 0);
    let mut s = state.clone();
    while max_steps.is_none_or(|m| steps < m) {
        let actions = mdp.actions(&s);
        let Some(a) = actions.choose(rng) else { break };
        let (next, r) = mdp.step(&s, a, rng);
        total += discount * r;
        discount *= gamma;
        s = next;
        steps += 1;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Kernel;
    use crate::mdp::{BanditTreeEnv, TableMdp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let kids = [ChildStats { mean: 0.5, visits: 3 }, ChildStats { mean: 0.4, visits: 1 }];
        let s0 = 0.5 + (2.0 * 4f64.ln() / 3.0).sqrt();
        let s1 = 0.4 + (2.0 * 4f64.ln()).sqrt();
        assert!((s0 - 1.4614).abs() < 1e-4 && (s1 - 2.0651).abs() < 1e-4);
        assert_eq!(uct_select(&kids, 4, 1.0, &mut rng), 1);
        assert_eq!(uct_select(&kids, 4, 0.0, &mut rng), 0);
        let with_new = [kids[0], ChildStats { mean: 0.0, visits: 0 }, kids[1]];
        assert_eq!(uct_select(&with_new, 4, 1.0, &mut rng), 1);
    }

    #[test]
    fn unvisited_order_is_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kids = [ChildStats { mean: 0.0, visits: 0 }; 3];
        let mut seen = [0; 3];
        for _ in 0..300 {
            seen[uct_select(&kids, 0, 1.0, &mut rng)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 50), "{seen:?}");
    }

    #[test]
    fn one_step_to_terminal() {
        let m = TableMdp::chain(1, 1.0, 1.0);
        let mut t = UctTree::new(0usize);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            assert_eq!(t.iterate(&m, 1.0, None, &mut rng), 1.0);
        }
        assert_eq!(t.root_children()[0].1, ChildStats { mean: 1.0, visits: 5 });
    }

    #[test]
    fn counts_and_running_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = BanditTreeEnv::build(4, 0.8, &Kernel::white(0.1), 0.01, &mut rng).unwrap();
        let mut t = UctTree::new(env.root());
        let returns: Vec<f64> = (0..200).map(|_| t.iterate(&env, 1.0, None, &mut rng)).collect();
        let total: u64 = t.root_children().iter().map(|c| c.1.visits).sum();
        assert_eq!(total, 200);
        assert_eq!(t.root_visits(), 200);
        let mean = returns.iter().sum::<f64>() / 200.0;
        assert!((t.root_mean() - mean).abs() <= 1e-12);
        // At most one new node per iteration.
        assert!(t.num_nodes() <= 201);
    }

    #[test]
    fn terminal_root() {
        let m = TableMdp::chain(1, 1.0, 1.0);
        let mut t = UctTree::new(1usize);
        assert_eq!(t.iterate(&m, 1.0, None, &mut ChaCha8Rng::seed_from_u64(0)), 0.0);
        assert_eq!(t.num_nodes(), 1);
        assert!(t.root_children().is_empty());
    }

    #[test]
    fn rollout_depth_limit() {
        let m = TableMdp::chain(10, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rollout(&m, &0, Some(3), &mut rng), 3.0);
        assert_eq!(rollout(&m, &0, None, &mut rng), 10.0);
    }

    #[test]
    fn root_actions_keep_being_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = BanditTreeEnv::build(3, 0.9, &Kernel::white(0.1), 0.01, &mut rng).unwrap();
        let mut t = UctTree::new(env.root());
        for _ in 0..10_000 {
            t.iterate(&env, 1.0, None, &mut rng);
        }
        let min = t.root_children().iter().map(|c| c.1.visits).min().unwrap();
        assert!(min >= 10, "{min}");
    }
}
