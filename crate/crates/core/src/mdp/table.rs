use super::{Mdp, Transition};

/// A finite MDP given by explicit transition tables. States are indices;
/// actions are indices into each state's action list.
#[derive(Debug, Clone, PartialEq)]
pub struct TableMdp {
    rows: Vec<Vec<Vec<Transition<usize>>>>,
    gamma: f64,
    coords: Option<Vec<Vec<f64>>>,
}

impl TableMdp {
    /// `rows[s][a]` lists the outcomes of action `a` in state `s`. A state
    /// with no actions is terminal.
    pub fn new(rows: Vec<Vec<Vec<Transition<usize>>>>, gamma: f64) -> Self {
        Self {
            rows,
            gamma,
            coords: None,
        }
    }

    pub fn with_coordinates(mut self, coords: Vec<Vec<f64>>) -> Self {
        self.coords = Some(coords);
        self
    }

    /// Deterministic complete tree with `branching` actions per state and
    /// `depth` levels of decisions. Action `a` in state `s` leads to child
    /// `s * branching + a + 1` (heap numbering) with the given reward.
    pub fn complete_tree(branching: usize, depth: usize, reward: impl Fn(usize, usize) -> f64, gamma: f64) -> Self {
        let internal: usize = (0..depth).map(|d| branching.pow(d as u32)).sum();
        let total = internal + branching.pow(depth as u32);
        let mut rows = vec![Vec::new(); total];
        for (s, row) in rows.iter_mut().enumerate().take(internal) {
            *row = (0..branching)
                .map(|a| vec![Transition::new(s * branching + a + 1, 1.0, reward(s, a))])
                .collect();
        }
        Self::new(rows, gamma)
    }

    /// Deterministic chain `0 -> 1 -> ... -> len`, one action per state.
    pub fn chain(len: usize, reward: f64, gamma: f64) -> Self {
        let mut rows: Vec<Vec<Vec<Transition<usize>>>> = (0..len)
            .map(|s| vec![vec![Transition::new(s + 1, 1.0, reward)]])
            .collect();
        rows.push(Vec::new());
        Self::new(rows, gamma)
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }
}

impl Mdp for TableMdp {
    type State = usize;
    type Action = usize;

    fn actions(&self, state: &usize) -> Vec<usize> {
        (0..self.rows[*state].len()).collect()
    }

    fn transitions(&self, state: &usize, action: &usize) -> Vec<Transition<usize>> {
        self.rows[*state][*action].clone()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn coordinate(&self, state: &usize, action: &usize) -> Option<f64> {
        self.coords.as_ref().map(|c| c[*state][*action])
    }
}
