//! Invariant suite run by `vocplan selftest` and the acceptance target.
//! Every check draws from its own fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{
    kernel_matrix, min_eigenvalue, update_independent, CorrelatedBelief, FrontierBelief, IndependentBelief, Kernel,
    NodeBelief, NormalPrior,
};
use crate::graph::{expand, Leaf, SearchGraph};
use crate::mdp::{BanditTreeEnv, TableMdp};
use crate::normal::{expected_excess, survival, RunningStats};
use crate::values::{dynamic_value_mc, lr_bound, lr_bound_leaves, optimal_c, static_value};
use crate::voc::{phi_vocs, ueb_scores};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, failures: Vec<String>, ok_detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            ok_detail
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        psi_dominates_phi(),
        martingale(),
        dominance(),
        lr_bound_dominates_psi(),
        optimal_c_residual(),
        white_kernel_equivalence(),
        ueb_chain(),
        psd_preservation(),
        batch_vs_sequential(),
    ]
}

/// Random deterministic tree with random rewards and per-entry priors.
fn random_instance(rng: &mut ChaCha8Rng) -> (SearchGraph<usize, usize>, FrontierBelief) {
    let branching = rng.random_range(2..=3);
    let depth = rng.random_range(1..=3);
    let gamma = rng.random_range(0.7..=1.0);
    let rewards: Vec<f64> = (0..200).map(|_| rng.random_range(-0.5..0.5)).collect();
    let m = TableMdp::complete_tree(branching, depth, |s, a| rewards[(s * 3 + a) % rewards.len()], gamma);
    let g = expand(&m, &0, depth).expect("non-terminal root");
    let priors = (0..g.frontier().len())
        .map(|_| {
            NormalPrior::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.1..1.0))
                .expect("valid prior")
        })
        .collect();
    (g, FrontierBelief::Independent(IndependentBelief::with_priors(priors).expect("valid priors")))
}

fn random_stochastic(rng: &mut ChaCha8Rng) -> (SearchGraph<crate::mdp::BanditState, crate::mdp::Side>, FrontierBelief) {
    let p = rng.random_range(0.5..0.95);
    let env = BanditTreeEnv::build(3, p, &Kernel::white(0.1), 0.01, rng).expect("valid env");
    let g = expand(&env, &env.root(), 2).expect("non-terminal root");
    let priors = (0..g.frontier().len())
        .map(|_| NormalPrior::new(rng.random_range(0.0..1.0), rng.random_range(0.0..0.5), 0.1).expect("valid prior"))
        .collect();
    (g, FrontierBelief::Independent(IndependentBelief::with_priors(priors).expect("valid priors")))
}

/// psi >= phi per root action on 100 instances, within 3 SE.
pub fn psi_dominates_phi() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut failures = Vec::new();
    for i in 0..100 {
        let (phi, psi) = if i % 4 == 3 {
            let (g, b) = random_stochastic(&mut rng);
            (static_value(&g, &b), dynamic_value_mc(&g, &b, 2000, &mut rng))
        } else {
            let (g, b) = random_instance(&mut rng);
            (static_value(&g, &b), dynamic_value_mc(&g, &b, 2000, &mut rng))
        };
        for (a, (f, p)) in phi.iter().zip(&psi).enumerate() {
            if p.value + 3.0 * p.std_error + 1e-12 < *f {
                failures.push(format!("instance {i} action {a}: psi {} (se {}) < phi {f}", p.value, p.std_error));
            }
        }
    }
    check("psi_dominates_phi", failures, "100 instances".into())
}

/// The posterior mean after one predictive draw averages to the current
/// mean, for independent and correlated beliefs.
pub fn martingale() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut failures = Vec::new();
    let prior = NormalPrior::new(0.3, 0.8, 0.5).expect("valid prior");
    let node = NodeBelief::from_observations(&prior, &[0.1, 0.9, 0.4]).expect("finite");
    let s: RunningStats = (0..10_000)
        .map(|_| {
            let y = crate::belief::predictive_sample(&node, prior.noise_var, &mut rng);
            update_independent(&node, &prior, y).expect("finite").post_mean
        })
        .collect();
    if (s.mean() - node.post_mean).abs() > 3.0 * s.std_error() {
        failures.push(format!("independent: {} vs {}", s.mean(), node.post_mean));
    }
    let coords: Vec<f64> = (0..6).map(|i| i as f64).collect();
    let mut corr = CorrelatedBelief::from_kernel(0.5, &Kernel::rbf(1.0, 2.0), &coords, 0.2).expect("psd");
    corr.update(2, 0.9).expect("finite");
    let fb = FrontierBelief::Correlated(corr);
    for j in 0..6 {
        let s: RunningStats = (0..10_000)
            .map(|_| {
                let y = fb.predictive_sample(4, &mut rng);
                fb.updated(4, y).expect("finite").mean(j)
            })
            .collect();
        if (s.mean() - fb.mean(j)).abs() > 3.0 * s.std_error() {
            failures.push(format!("correlated node {j}: {} vs {}", s.mean(), fb.mean(j)));
        }
    }
    check("martingale", failures, "10^4 draws, 3 SE".into())
}

/// One observation never lowers the expected best static value: resampled
/// check of E[max phi'] >= max phi, and the exact VOC is non-negative.
pub fn dominance() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut failures = Vec::new();
    for i in 0..5 {
        let (g, b) = random_instance(&mut rng);
        let before = static_value(&g, &b).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let omega = rng.random_range(0..g.frontier().len());
        let s: RunningStats = (0..10_000)
            .map(|_| {
                let y = b.predictive_sample(omega, &mut rng);
                let after = b.updated(omega, y).expect("finite");
                static_value(&g, &after).into_iter().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        if s.mean() + 3.0 * s.std_error() + 1e-12 < before {
            failures.push(format!("instance {i}: {} < {before}", s.mean()));
        }
        if let Some(v) = phi_vocs(&g, &b).iter().find(|v| v.voc < -1e-12 || v.voc_prime < -1e-12) {
            failures.push(format!("instance {i}: negative VOC {v:?}"));
        }
    }
    check("dominance", failures, "10^4 draws, 3 SE".into())
}

/// The Lai-Robbins bound is above the dynamic value.
pub fn lr_bound_dominates_psi() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut failures = Vec::new();
    for i in 0..50 {
        let (g, b) = random_instance(&mut rng);
        let lambda = lr_bound(&g, &b).expect("deterministic");
        let psi = dynamic_value_mc(&g, &b, 2000, &mut rng);
        for (a, (l, p)) in lambda.iter().zip(&psi).enumerate() {
            if l.lambda + 3.0 * p.std_error + 1e-12 < p.value {
                failures.push(format!("instance {i} action {a}: lambda {} < psi {}", l.lambda, p.value));
            }
        }
    }
    check("lr_bound_dominates_psi", failures, "50 instances".into())
}

/// The optimizing threshold solves sum P(Y > c) = 1.
pub fn optimal_c_residual() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..200 {
        let n = rng.random_range(2..=12);
        let ys: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.05..1.5)))
            .collect();
        let c = optimal_c(&ys);
        let r = (ys.iter().map(|&(m, s)| survival(m, s, c)).sum::<f64>() - 1.0).abs();
        worst = worst.max(r);
        if r > 1e-6 {
            failures.push(format!("set {i}: residual {r:e}"));
        }
    }
    check("optimal_c_residual", failures, format!("worst {worst:.1e}"))
}

/// A white-kernel correlated belief is the independent belief.
pub fn white_kernel_equivalence() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut failures = Vec::new();
    let m = TableMdp::complete_tree(3, 2, |s, a| 0.1 * ((s + 2 * a) % 5) as f64, 0.95);
    let g = expand(&m, &0, 2).expect("non-terminal root");
    let n = g.frontier().len();
    let prior = NormalPrior::new(0.2, 0.7, 0.3).expect("valid prior");
    let coords: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut ind = FrontierBelief::Independent(IndependentBelief::uniform(prior, n).expect("valid"));
    let mut cor = FrontierBelief::Correlated(
        CorrelatedBelief::from_kernel(prior.mean0, &Kernel::white(prior.var0), &coords, prior.noise_var).expect("psd"),
    );
    let mut worst = 0.0f64;
    for step in 0..30 {
        let i = rng.random_range(0..n);
        let y = rng.random_range(-1.0..1.0);
        ind.observe(i, y).expect("finite");
        cor.observe(i, y).expect("finite");
        for j in 0..n {
            worst = worst.max((ind.mean(j) - cor.mean(j)).abs()).max((ind.var(j) - cor.var(j)).abs());
        }
        for (a, b) in phi_vocs(&g, &ind).iter().zip(phi_vocs(&g, &cor)) {
            worst = worst.max((a.voc - b.voc).abs()).max((a.voc_prime - b.voc_prime).abs());
        }
        if worst > 1e-9 {
            failures.push(format!("step {step}: difference {worst:e}"));
            break;
        }
    }
    check("white_kernel_equivalence", failures, format!("worst {worst:.1e}"))
}

/// UEB scores agree with central finite differences of the bound in the
/// sample count, at the optimal threshold held fixed.
pub fn ueb_chain() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut failures = Vec::new();
    let mut checked = 0;
    for inst in 0..20 {
        let rewards: Vec<f64> = (0..32).map(|_| rng.random_range(0.0..0.5)).collect();
        let m = TableMdp::complete_tree(2, 2, |s, a| rewards[(s * 2 + a) % 32], 0.9);
        let g = expand(&m, &0, 2).expect("non-terminal root");
        let prior = NormalPrior::new(1.5, rng.random_range(0.2..1.0), rng.random_range(0.1..0.5)).expect("valid");
        let mut belief = IndependentBelief::uniform(prior, 4).expect("valid");
        for _ in 0..rng.random_range(0..8) {
            let i = rng.random_range(0..4);
            belief.observe(i, rng.random_range(0.0..1.0)).expect("finite");
        }
        let score = ueb_scores(&g, &belief).expect("deterministic");
        let leaves = g.root_leaves().expect("deterministic")[score.alpha].clone();
        let c = lr_bound_leaves(&leaves, &FrontierBelief::Independent(belief.clone())).c_star;
        for leaf in &leaves {
            let Leaf::Frontier { index, .. } = *leaf else { continue };
            let node = *belief.node(index);
            let rhat = if node.count == 0 { prior.mean0 } else { node.sample_mean };
            let lam = |n: f64| {
                let sigma = (prior.noise_var * prior.var0 / (n * prior.var0 + prior.noise_var)).sqrt();
                let mu = (prior.noise_var * prior.mean0 + n * prior.var0 * rhat) / (prior.noise_var + n * prior.var0);
                c + leaves
                    .iter()
                    .map(|l| match *l {
                        Leaf::Frontier { index: j, offset, scale } => {
                            let (mj, sj) = if j == index {
                                (mu, sigma)
                            } else {
                                (belief.node(j).post_mean, belief.node(j).post_sd())
                            };
                            expected_excess(offset + scale * mj, scale * sj, c)
                        }
                        Leaf::Constant(b) => (b - c).max(0.0),
                    })
                    .sum::<f64>()
            };
            let n = node.count as f64;
            let h = 1e-4;
            // One-sided at n = 0, where the count cannot go negative.
            let fd = if node.count == 0 {
                (-3.0 * lam(n) + 4.0 * lam(n + h) - lam(n + 2.0 * h)) / (2.0 * h)
            } else {
                (lam(n + h) - lam(n - h)) / (2.0 * h)
            };
            let got = score.dlambda_dn[index];
            checked += 1;
            if (got - fd).abs() > 1e-4 * fd.abs().max(1e-8) {
                failures.push(format!("instance {inst} entry {index}: {got} vs {fd}"));
            }
        }
    }
    check("ueb_chain", failures, format!("{checked} derivatives"))
}

/// Correlated updates keep the covariance symmetric positive semi-definite.
pub fn psd_preservation() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut failures = Vec::new();
    for inst in 0..10 {
        let n = rng.random_range(4..=24);
        let coords: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let kernel = Kernel::rbf(rng.random_range(0.05..2.0), rng.random_range(0.5..10.0));
        let mut b = CorrelatedBelief::from_kernel(0.5, &kernel, &coords, rng.random_range(0.001..0.5)).expect("psd");
        let scale = kernel_matrix(&kernel, &coords).expect("valid").trace();
        for step in 0..60 {
            let i = rng.random_range(0..n);
            b.update(i, rng.random_range(-1.0..2.0)).expect("finite");
            let asym = (&b.cov - b.cov.transpose()).abs().max();
            let min = min_eigenvalue(&b.cov);
            if asym > 1e-12 || min < -1e-9 * scale {
                failures.push(format!("instance {inst} step {step}: asym {asym:e}, min eig {min:e}"));
                break;
            }
        }
    }
    check("psd_preservation", failures, "10 beliefs x 60 updates".into())
}

/// Sequential conjugate updates equal the batch posterior.
pub fn batch_vs_sequential() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let prior =
            NormalPrior::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0), rng.random_range(0.05..2.0)).expect("valid");
        let obs: Vec<f64> = (0..rng.random_range(1..40)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let batch = NodeBelief::from_observations(&prior, &obs).expect("finite");
        let seq = obs
            .iter()
            .try_fold(NodeBelief::from_prior(&prior), |b, &y| update_independent(&b, &prior, y))
            .expect("finite");
        let d = (batch.post_mean - seq.post_mean).abs().max((batch.post_var - seq.post_var).abs());
        worst = worst.max(d);
        if d > 1e-12 {
            failures.push(format!("instance {inst}: difference {d:e}"));
        }
    }
    check("batch_vs_sequential", failures, format!("worst {worst:.1e}"))
}
