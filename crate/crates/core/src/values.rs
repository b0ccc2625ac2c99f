//! Static and dynamic values of root actions, the Lai-Robbins upper bound on
//! the expected maximum, and Bayesian simple regret.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::belief::FrontierBelief;
use crate::error::{Error, Result};
use crate::graph::{DeterministicTransitionTable, Leaf, SearchGraph};
use crate::normal::{cdf, expected_excess, pdf, survival, Estimate, RunningStats};

/// Root action values with every frontier value replaced by its posterior
/// mean.
pub fn static_value<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> Vec<f64> {
    graph.root_values(&belief.means())
}

/// Reusable draws of the joint frontier posterior, without observation
/// noise.
pub struct FrontierSampler {
    sampler: crate::belief::JointSampler,
    eps: Vec<f64>,
    draw: Vec<f64>,
    states: Vec<f64>,
    roots: Vec<f64>,
}

impl FrontierSampler {
    pub fn new(belief: &FrontierBelief) -> Self {
        let n = belief.len();
        Self {
            sampler: belief.sampler(),
            eps: vec![0.0; n],
            draw: vec![0.0; n],
            states: Vec::new(),
            roots: Vec::new(),
        }
    }

    /// One sample of the root action backups; returns the root values.
    pub fn sample<S, A, R: Rng + ?Sized>(&mut self, graph: &SearchGraph<S, A>, rng: &mut R) -> &[f64] {
        for e in &mut self.eps {
            *e = rng.sample(StandardNormal);
        }
        self.sampler.draw(&self.eps, &mut self.draw);
        graph.root_values_into(&self.draw, &mut self.states, &mut self.roots);
        &self.roots
    }
}

/// Monte Carlo estimate of the dynamic value of each root action: the mean
/// backup over joint posterior draws of the frontier values.
pub fn dynamic_value_mc<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    m: usize,
    rng: &mut R,
) -> Vec<Estimate> {
    assert!(m >= 2, "need at least two samples for a standard error");
    let k = graph.num_root_actions();
    let mut stats = vec![RunningStats::new(); k];
    let mut sampler = FrontierSampler::new(belief);
    for _ in 0..m {
        for (s, v) in stats.iter_mut().zip(sampler.sample(graph, rng)) {
            s.push(*v);
        }
    }
    stats
        .iter()
        .map(|s| Estimate {
            value: s.mean(),
            std_error: s.std_error(),
        })
        .collect()
}

/// Solves `sum_i P(Y_i > c) = 1` by bisection for Normal `Y_i` given as
/// `(mean, sd)`; point masses are allowed. Clamps to the search bracket when
/// there is no root inside it.
pub fn optimal_c(ys: &[(f64, f64)]) -> f64 {
    assert!(!ys.is_empty(), "optimal c of an empty frontier");
    let max_sd = ys.iter().map(|y| y.1).fold(0.0, f64::max);
    let spread = 10.0 * max_sd;
    let mut lo = ys.iter().map(|y| y.0).fold(f64::INFINITY, f64::min) - spread;
    let mut hi = ys.iter().map(|y| y.0).fold(f64::NEG_INFINITY, f64::max) + spread;
    let g = |c: f64| ys.iter().map(|&(m, s)| survival(m, s, c)).sum::<f64>() - 1.0;
    if g(lo) <= 0.0 {
        return lo;
    }
    if g(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v.abs() <= 1e-9 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Lai-Robbins bound and its optimizing `c` for one root action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrBound {
    pub lambda: f64,
    pub c_star: f64,
}

/// `(mean, sd)` of each leaf's Y variable.
pub fn leaf_moments(leaves: &[Leaf], belief: &FrontierBelief) -> Vec<(f64, f64)> {
    leaves
        .iter()
        .map(|l| match *l {
            Leaf::Frontier { index, offset, scale } => (offset + scale * belief.mean(index), scale * belief.sd(index)),
            Leaf::Constant(b) => (b, 0.0),
        })
        .collect()
}

/// `c + sum E[(Y - c)+]` at the optimal `c`.
pub fn lr_bound_leaves(leaves: &[Leaf], belief: &FrontierBelief) -> LrBound {
    let ys = leaf_moments(leaves, belief);
    let c = optimal_c(&ys);
    let lambda = c + ys.iter().map(|&(m, s)| expected_excess(m, s, c)).sum::<f64>();
    LrBound { lambda, c_star: c }
}

/// Per root action bound on a deterministic graph.
pub fn lr_bound<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> Result<Vec<LrBound>> {
    Ok(graph
        .root_leaves()?
        .iter()
        .map(|leaves| lr_bound_leaves(leaves, belief))
        .collect())
}

/// Per root action average of the bound over sampled deterministic
/// transition tables.
pub fn lr_bound_tables<S, A>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    tables: &[DeterministicTransitionTable],
) -> Vec<f64> {
    assert!(!tables.is_empty());
    let mut sums = vec![0.0; graph.num_root_actions()];
    for t in tables {
        for (s, leaves) in sums.iter_mut().zip(graph.table_leaves(t)) {
            *s += lr_bound_leaves(&leaves, belief).lambda;
        }
    }
    sums.iter().map(|s| s / tables.len() as f64).collect()
}

/// Bound for stochastic transitions from `k` freshly sampled tables.
/// Deterministic graphs return [`lr_bound`] exactly.
pub fn lr_bound_stochastic<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    k: usize,
    rng: &mut R,
) -> Vec<f64> {
    if graph.is_deterministic() {
        return lr_bound(graph, belief)
            .expect("deterministic graph has root leaves")
            .iter()
            .map(|b| b.lambda)
            .collect();
    }
    let tables: Vec<_> = (0..k.max(1)).map(|_| graph.sample_transition_table(rng)).collect();
    lr_bound_tables(graph, belief, &tables)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valuation {
    Static,
    Dynamic,
}

/// `E[max_a Upsilon(a)] - max_a f(a)` with `f` the static or dynamic value.
/// Both terms are estimated on the same posterior draws.
pub fn bsr_star<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    valuation: Valuation,
    m: usize,
    rng: &mut R,
) -> Estimate {
    assert!(m >= 2);
    let k = graph.num_root_actions();
    let mut sampler = FrontierSampler::new(belief);
    let mut per_action = vec![0.0; k];
    let mut draws_max = Vec::with_capacity(m);
    let mut draws_actions = Vec::with_capacity(m);
    for _ in 0..m {
        let roots = sampler.sample(graph, rng);
        draws_max.push(roots.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        draws_actions.push(roots.to_vec());
        for (acc, v) in per_action.iter_mut().zip(roots) {
            *acc += v;
        }
    }
    match valuation {
        Valuation::Static => {
            let best = static_value(graph, belief).into_iter().fold(f64::NEG_INFINITY, f64::max);
            let stats: RunningStats = draws_max.iter().map(|v| v - best).collect();
            Estimate {
                value: stats.mean(),
                std_error: stats.std_error(),
            }
        }
        Valuation::Dynamic => {
            let best = argmax(&per_action);
            let stats: RunningStats = draws_max.iter().zip(&draws_actions).map(|(mx, a)| mx - a[best]).collect();
            Estimate {
                value: stats.mean(),
                std_error: stats.std_error(),
            }
        }
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Values of every root action in one report.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub static_value: Vec<f64>,
    pub dynamic_est: Vec<Estimate>,
    pub lambda: Vec<f64>,
    /// Optimizing `c` per root action; `None` when the bound is an average
    /// over sampled transition tables.
    pub c_star: Vec<Option<f64>>,
}

pub fn value_report<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    m: usize,
    tables: usize,
    rng: &mut R,
) -> ValueReport {
    let (lambda, c_star) = match lr_bound(graph, belief) {
        Ok(b) => (b.iter().map(|x| x.lambda).collect(), b.iter().map(|x| Some(x.c_star)).collect()),
        Err(_) => (
            lr_bound_stochastic(graph, belief, tables, rng),
            vec![None; graph.num_root_actions()],
        ),
    };
    ValueReport {
        static_value: static_value(graph, belief),
        dynamic_est: dynamic_value_mc(graph, belief, m, rng),
        lambda,
        c_star,
    }
}

/// Gradient pieces of a single Normal term `E[(Y - c)+]` with
/// `Y ~ N(b + s*mu, (s*sigma)^2)`: derivatives with respect to `sigma` and
/// `mu` at fixed `c`.
pub fn excess_partials(offset: f64, scale: f64, mu: f64, sigma: f64, c: f64) -> (f64, f64) {
    let (m, s) = (offset + scale * mu, scale * sigma);
    if s <= 0.0 {
        let step = if m > c { 1.0 } else { 0.0 };
        return (0.0, scale * step);
    }
    let z = (m - c) / s;
    (scale * pdf(z), scale * cdf(z))
}

/// Rejects beliefs that do not cover the graph's frontier.
pub fn check_cover<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> Result<()> {
    if belief.len() != graph.frontier().len() {
        return Err(Error::InvalidInput(format!(
            "belief has {} nodes but the frontier has {}",
            belief.len(),
            graph.frontier().len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{IndependentBelief, NormalPrior};
    use crate::graph::expand;
    use crate::mdp::TableMdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

    fn two_arms(m: (f64, f64), v: (f64, f64)) -> (SearchGraph<usize, usize>, FrontierBelief) {
        let g = expand(&TableMdp::complete_tree(2, 1, |_, _| 0.0, 1.0), &0, 1).unwrap();
        let b = IndependentBelief::with_priors(vec![
            NormalPrior::new(m.0, v.0, 1.0).unwrap(),
            NormalPrior::new(m.1, v.1, 1.0).unwrap(),
        ])
        .unwrap();
        (g, FrontierBelief::Independent(b))
    }

    #[test]
    fn static_is_posterior_mean_at_horizon_one() {
        let (g, b) = two_arms((0.2, 0.5), (1.0, 2.0));
        assert_eq!(static_value(&g, &b), vec![0.2, 0.5]);
    }

    #[test]
    fn dynamic_two_standard_normals() {
        // One root action over two standard-normal frontier entries.
        let g = expand(&TableMdp::complete_tree(2, 2, |_, _| 0.0, 1.0), &0, 2).unwrap();
        let b = FrontierBelief::Independent(
            IndependentBelief::uniform(NormalPrior::new(0.0, 1.0, 1.0).unwrap(), 4).unwrap(),
        );
        let est = dynamic_value_mc(&g, &b, 100_000, &mut ChaCha8Rng::seed_from_u64(3));
        for e in est {
            assert!((e.value - INV_SQRT_PI).abs() <= 3.0 * e.std_error, "{e:?}");
        }
    }

    #[test]
    fn degenerate_dynamic_equals_static() {
        let (g, b) = two_arms((0.3, -0.1), (0.0, 0.0));
        let est = dynamic_value_mc(&g, &b, 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(est[0].value, 0.3);
        assert_eq!(est[1].value, -0.1);
        assert_eq!(est[0].std_error, 0.0);
    }

    #[test]
    fn optimal_c_examples() {
        assert!(optimal_c(&[(0.0, 1.0), (0.0, 1.0)]).abs() < 1e-8);
        assert_eq!(optimal_c(&[(0.0, 1.0)]), -10.0);
        let c = optimal_c(&[(0.7, 0.0), (0.7, 0.0)]);
        assert!((c - 0.7).abs() < 1e-9, "{c}");
    }

    #[test]
    fn lr_bound_examples() {
        let leaves = [
            Leaf::Frontier { index: 0, offset: 0.0, scale: 1.0 },
            Leaf::Frontier { index: 1, offset: 0.0, scale: 1.0 },
        ];
        let (_, b) = two_arms((0.0, 0.0), (1.0, 1.0));
        let bound = lr_bound_leaves(&leaves, &b);
        assert!((bound.lambda - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-8);
        let single = lr_bound_leaves(&leaves[..1], &b);
        assert!(single.lambda.abs() < 1e-6);
        let (_, point) = two_arms((0.4, 0.0), (0.0, 1.0));
        assert!((lr_bound_leaves(&leaves[..1], &point).lambda - 0.4).abs() < 1e-12);
    }

    #[test]
    fn excess_partials_match_finite_differences() {
        let (b, s, mu, sigma, c) = (0.3, 0.81, 0.2, 0.7, 0.5);
        let f = |mu: f64, sigma: f64| expected_excess(b + s * mu, s * sigma, c);
        let (dsig, dmu) = excess_partials(b, s, mu, sigma, c);
        let h = 1e-5;
        let fd_sig = (f(mu, sigma + h) - f(mu, sigma - h)) / (2.0 * h);
        let fd_mu = (f(mu + h, sigma) - f(mu - h, sigma)) / (2.0 * h);
        assert!((dsig - fd_sig).abs() / fd_sig.abs() < 1e-6);
        assert!((dmu - fd_mu).abs() / fd_mu.abs() < 1e-6);
    }

    #[test]
    fn bsr_two_arms() {
        let (g, b) = two_arms((0.0, 0.0), (1.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = bsr_star(&g, &b, Valuation::Static, 100_000, &mut rng);
        assert!((e.value - INV_SQRT_PI).abs() <= 3.0 * e.std_error, "{e:?}");
        let (g, b) = two_arms((0.4, 0.1), (0.0, 0.0));
        let e = bsr_star(&g, &b, Valuation::Dynamic, 10, &mut rng);
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn argmax_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
