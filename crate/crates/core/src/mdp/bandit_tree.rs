use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Mdp, Transition};
use crate::belief::{kernel_matrix, min_eigenvalue, psd_sqrt, Kernel};
use crate::error::{Error, Result};

/// A node of the bandit tree. `depth == tree depth` marks a bandit arm,
/// which is terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BanditState {
    pub depth: u8,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn offset(self) -> u32 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// Complete binary tree MDP whose leaves are Gaussian bandit arms.
///
/// `LEFT` reaches the left subtree with probability `p` and the right one
/// otherwise; `RIGHT` is the mirror image. Entering an arm pays its mean
/// plus Normal noise and ends the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTreeEnv {
    depth: u8,
    p: f64,
    arm_means: Vec<f64>,
    arm_noise_var: f64,
    kernel: Kernel,
}

/// Mean vector and square-root covariance of the arm-mean distribution, so
/// many instances can be drawn without refactorizing the kernel matrix.
#[derive(Debug, Clone)]
pub struct ArmPrior {
    depth: u8,
    kernel: Kernel,
    factor: DMatrix<f64>,
}

pub const ARM_PRIOR_MEAN: f64 = 0.5;

impl ArmPrior {
    pub fn new(depth: u8, kernel: &Kernel) -> Result<Self> {
        if depth == 0 || depth > 24 {
            return Err(Error::Config(format!("bandit-tree depth {depth} must be in 1..=24")));
        }
        let n = 1usize << depth;
        let coords: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let k = kernel_matrix(kernel, &coords)?;
        let min = min_eigenvalue(&k);
        if min < -1e-9 * k.trace() {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self {
            depth,
            kernel: *kernel,
            factor: psd_sqrt(&k),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: f64, arm_noise_var: f64, rng: &mut R) -> Result<BanditTreeEnv> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("transition probability {p} outside [0, 1]")));
        }
        if !(arm_noise_var >= 0.0) {
            return Err(Error::Config(format!("arm noise variance {arm_noise_var} must be >= 0")));
        }
        let n = self.factor.nrows();
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = &self.factor * eps;
        Ok(BanditTreeEnv {
            depth: self.depth,
            p,
            arm_means: draw.iter().map(|x| ARM_PRIOR_MEAN + x).collect(),
            arm_noise_var,
            kernel: self.kernel,
        })
    }
}

impl BanditTreeEnv {
    /// Draws arm means from `N(0.5, K)` with `K` the kernel over arm
    /// coordinates `0..2^depth`.
    pub fn build<R: Rng + ?Sized>(depth: u8, p: f64, kernel: &Kernel, arm_noise_var: f64, rng: &mut R) -> Result<Self> {
        ArmPrior::new(depth, kernel)?.sample(p, arm_noise_var, rng)
    }

    /// Environment with explicit arm means, for fixtures.
    pub fn with_arm_means(depth: u8, p: f64, arm_means: Vec<f64>, arm_noise_var: f64) -> Result<Self> {
        if depth == 0 || arm_means.len() != 1usize << depth {
            return Err(Error::Config(format!(
                "depth {depth} needs {} arm means, got {}",
                1usize << depth,
                arm_means.len()
            )));
        }
        Ok(Self {
            depth,
            p,
            arm_means,
            arm_noise_var,
            kernel: Kernel::white(1.0),
        })
    }

    pub fn root(&self) -> BanditState {
        BanditState { depth: 0, index: 0 }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Probability of landing in the unintended subtree.
    pub fn swap_prob(&self) -> f64 {
        1.0 - self.p
    }

    pub fn num_arms(&self) -> usize {
        self.arm_means.len()
    }

    pub fn num_internal_states(&self) -> usize {
        (1usize << self.depth) - 1
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Hidden arm means. Only oracles should read these.
    pub fn arm_means(&self) -> &[f64] {
        &self.arm_means
    }

    pub fn arm_noise_var(&self) -> f64 {
        self.arm_noise_var
    }

    fn outcomes(&self, state: &BanditState, side: Side) -> [(BanditState, f64); 2] {
        let d = state.depth + 1;
        let intended = BanditState {
            depth: d,
            index: 2 * state.index + side.offset(),
        };
        let other = BanditState {
            depth: d,
            index: 2 * state.index + 1 - side.offset(),
        };
        [(intended, self.p), (other, 1.0 - self.p)]
    }

    fn entry_reward(&self, s: &BanditState) -> f64 {
        if s.depth == self.depth {
            self.arm_means[s.index as usize]
        } else {
            0.0
        }
    }
}

impl Mdp for BanditTreeEnv {
    type State = BanditState;
    type Action = Side;

    fn actions(&self, state: &BanditState) -> Vec<Side> {
        if state.depth >= self.depth {
            Vec::new()
        } else {
            vec![Side::Left, Side::Right]
        }
    }

    fn transitions(&self, state: &BanditState, action: &Side) -> Vec<Transition<BanditState>> {
        assert!(state.depth < self.depth, "action taken at an arm");
        self.outcomes(state, *action)
            .into_iter()
            .filter(|(_, prob)| *prob > 0.0)
            .map(|(s, prob)| Transition::new(s, prob, self.entry_reward(&s)))
            .collect()
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn is_terminal(&self, state: &BanditState) -> bool {
        state.depth >= self.depth
    }

    fn step<R: Rng + ?Sized>(&self, state: &BanditState, action: &Side, rng: &mut R) -> (BanditState, f64) {
        assert!(state.depth < self.depth, "action taken at an arm");
        let [(intended, p), (other, _)] = self.outcomes(state, *action);
        let next = if p >= 1.0 || rng.random::<f64>() < p { intended } else { other };
        let mut reward = self.entry_reward(&next);
        if next.depth == self.depth && self.arm_noise_var > 0.0 {
            reward += self.arm_noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        (next, reward)
    }

    /// Center of the intended child's arm range, in arm coordinates.
    fn coordinate(&self, state: &BanditState, action: &Side) -> Option<f64> {
        let child_depth = state.depth as u32 + 1;
        let width = (1u64 << (self.depth as u32 - child_depth)) as f64;
        let child = (2 * state.index + action.offset()) as f64;
        Some(child * width + (width - 1.0) / 2.0)
    }
}

/// Exact `Q*(ROOT, LEFT)` and `Q*(ROOT, RIGHT)` by dynamic programming over
/// the whole tree.
pub fn bandit_tree_optimal(env: &BanditTreeEnv) -> [f64; 2] {
    let p = env.p;
    // Values of the level below, starting from the arms (value 0 after entry,
    // entry reward = arm mean).
    let mut below: Vec<f64> = env.arm_means.clone();
    let mut level_q: Vec<[f64; 2]> = Vec::new();
    for _ in (0..env.depth).rev() {
        level_q = below
            .chunks(2)
            .map(|pair| {
                let (l, r) = (pair[0], pair[1]);
                [p * l + (1.0 - p) * r, p * r + (1.0 - p) * l]
            })
            .collect();
        below = level_q.iter().map(|q| q[0].max(q[1])).collect();
    }
    level_q[0]
}
