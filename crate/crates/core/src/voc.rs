//! Value of computation: expected gain in the best root valuation from one
//! more observation at a frontier entry.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::belief::{psd_sqrt, CorrelatedBelief, FrontierBelief, IndependentBelief, JointSampler};
use crate::error::{Error, Result};
use crate::graph::{DeterministicTransitionTable, Leaf, SearchGraph};
use crate::normal::{expected_improvement, Estimate, RunningStats};
use crate::pwl::{Pwl, PwlSum};
use crate::values::{argmax, excess_partials, leaf_moments, optimal_c, static_value, Valuation};

/// VOC and VOC′ of the static value for one computation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhiVoc {
    pub voc: f64,
    pub voc_prime: f64,
}

/// `E[max(k, Y)]` for `Y ~ N(mean, sd^2)`, allowing `k = -inf`.
fn expected_max(k: f64, mean: f64, sd: f64) -> f64 {
    if k == f64::NEG_INFINITY {
        mean
    } else {
        k.max(mean) + expected_improvement(mean, sd, k)
    }
}

/// Standard deviation of the change in a posterior mean caused by one more
/// observation.
pub fn preposterior_sd(post_var: f64, noise_var: f64) -> f64 {
    let total = post_var + noise_var;
    if post_var <= 0.0 || total <= 0.0 {
        0.0
    } else {
        post_var / total.sqrt()
    }
}

/// Closed-form VOC of the static value on a deterministic graph with
/// independent beliefs.
pub fn voc_phi_independent<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief, omega: usize) -> Result<f64> {
    Ok(phi_vocs_closed_form(graph, belief)?[omega].voc)
}

/// Closed-form VOC and VOC′ of every frontier entry. Requires a
/// deterministic graph and independent beliefs.
pub fn phi_vocs_closed_form<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> Result<Vec<PhiVoc>> {
    if !belief.is_independent() {
        return Err(Error::UnsupportedStructure("closed form needs independent beliefs".into()));
    }
    let leaves = graph.root_leaves()?;
    let moments: Vec<Vec<(f64, f64)>> = leaves.iter().map(|l| leaf_moments(l, belief)).collect();
    // Best and second-best leaf value per root action.
    let tops: Vec<(f64, usize, f64)> = moments
        .iter()
        .map(|ys| {
            let (mut t1, mut i1, mut t2) = (f64::NEG_INFINITY, usize::MAX, f64::NEG_INFINITY);
            for (i, &(m, _)) in ys.iter().enumerate() {
                if m > t1 {
                    t2 = t1;
                    t1 = m;
                    i1 = i;
                } else if m > t2 {
                    t2 = m;
                }
            }
            (t1, i1, t2)
        })
        .collect();
    let phi: Vec<f64> = tops.iter().map(|t| t.0).collect();
    let best = argmax(&phi);
    let mut out = vec![PhiVoc::default(); graph.frontier().len()];
    for (a, leaf_list) in leaves.iter().enumerate() {
        let c_out = phi
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        for (pos, leaf) in leaf_list.iter().enumerate() {
            let Leaf::Frontier { index, scale, .. } = *leaf else {
                continue;
            };
            let beta = moments[a][pos].0;
            let s = scale * preposterior_sd(belief.var(index), belief.noise_var(index));
            let c_in = if pos == tops[a].1 { tops[a].2 } else { tops[a].0 };
            let c_all = c_in.max(c_out);
            let voc = expected_max(c_all, beta, s) - c_all.max(beta);
            let voc_prime = if a == best {
                expected_max(c_all, beta, s) - expected_max(c_in, beta, s)
            } else {
                expected_improvement(beta, s, phi[best])
            };
            out[index] = PhiVoc {
                voc: voc.max(0.0),
                voc_prime: voc_prime.max(0.0),
            };
        }
    }
    Ok(out)
}

/// Exact VOC and VOC′ of the static value for every frontier entry, on any
/// graph and belief model. Each root value is piecewise linear in the
/// standardized observation, so expectations are computed segment by
/// segment.
pub fn phi_vocs<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> Vec<PhiVoc> {
    let means = belief.means();
    let mut states = Vec::new();
    let mut phi = Vec::new();
    graph.root_values_into(&means, &mut states, &mut phi);
    let best = argmax(&phi);
    let k = graph.num_root_actions();
    (0..graph.frontier().len())
        .map(|omega| {
            let Some(resp) = belief.observation_response(omega) else {
                return PhiVoc::default();
            };
            let roots: Vec<Pwl> = if belief.is_independent() {
                let slope = resp.slopes.first().map_or(0.0, |s| s.1);
                graph.backup_single(&states, &means, omega, Pwl::line(means[omega], slope))
            } else {
                let mut slopes = vec![0.0; means.len()];
                for (j, s) in &resp.slopes {
                    slopes[*j] = *s;
                }
                let mut all = graph.backup(|j| Pwl::line(means[j], slopes[j]));
                all.truncate(k);
                all
            };
            let top = Pwl::max_of(&roots).expect_std_normal();
            PhiVoc {
                voc: (top - phi[best]).max(0.0),
                voc_prime: (top - roots[best].expect_std_normal()).max(0.0),
            }
        })
        .collect()
}

/// VOC of the static value for one computation, exact on any graph.
pub fn voc_phi<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief, omega: usize) -> f64 {
    phi_vocs(graph, belief)[omega].voc
}

/// Exact VOC of the static value under correlated beliefs on a
/// deterministic graph.
pub fn voc_phi_correlated<S, A>(graph: &SearchGraph<S, A>, belief: &CorrelatedBelief, omega: usize) -> Result<f64> {
    if !graph.is_deterministic() {
        return Err(Error::UnsupportedStructure("expected a deterministic graph".into()));
    }
    Ok(voc_phi(graph, &FrontierBelief::Correlated(belief.clone()), omega))
}

/// Standard-normal noise shared by every dynamic-value estimate of one
/// comparison batch: `m` rows of one draw per frontier entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonNoise {
    rows: Vec<Vec<f64>>,
}

impl CommonNoise {
    pub fn new<R: Rng + ?Sized>(m: usize, width: usize, rng: &mut R) -> Self {
        assert!(m >= 2, "need at least two inner samples");
        let rows = (0..m)
            .map(|_| (0..width).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Dynamic value of every root action averaged over the shared noise rows.
pub fn dynamic_value_crn<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief, noise: &CommonNoise) -> Vec<f64> {
    mean_backup(graph, &belief.sampler(), noise)
}

fn mean_backup<S, A>(graph: &SearchGraph<S, A>, sampler: &JointSampler, noise: &CommonNoise) -> Vec<f64> {
    let mut draw = vec![0.0; sampler.len()];
    let (mut states, mut roots) = (Vec::new(), Vec::new());
    let mut acc = vec![0.0; graph.num_root_actions()];
    for eps in noise.rows() {
        sampler.draw(eps, &mut draw);
        graph.root_values_into(&draw, &mut states, &mut roots);
        for (a, v) in acc.iter_mut().zip(&roots) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / noise.len() as f64).collect()
}

/// VOC of the dynamic value for every frontier entry.
///
/// The dynamic value after the observation is estimated with the shared
/// noise rows; as a function of the standardized observation it is then an
/// average of piecewise-linear backups, whose expected maximum is exact.
/// The baseline is the same estimator's expectation, which is the current
/// dynamic value on the shared noise.
pub fn psi_vocs<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief, noise: &CommonNoise) -> Vec<f64> {
    let n = belief.len();
    let means = belief.means();
    let k = graph.num_root_actions();
    let weight = 1.0 / noise.len() as f64;
    let finish = |sums: Vec<PwlSum>| -> f64 {
        let psi: Vec<Pwl> = sums.into_iter().map(PwlSum::finish).collect();
        let baseline = psi.iter().map(Pwl::expect_std_normal).fold(f64::NEG_INFINITY, f64::max);
        (Pwl::max_of(&psi).expect_std_normal() - baseline).max(0.0)
    };
    match belief {
        FrontierBelief::Independent(_) => {
            let sds: Vec<f64> = (0..n).map(|i| belief.sd(i)).collect();
            // Base draws and state values per noise row, shared by all
            // candidates.
            let base: Vec<(Vec<f64>, Vec<f64>)> = noise
                .rows()
                .iter()
                .map(|eps| {
                    let leaf: Vec<f64> = (0..n).map(|j| means[j] + sds[j] * eps[j]).collect();
                    let (mut states, mut roots) = (Vec::new(), Vec::new());
                    graph.root_values_into(&leaf, &mut states, &mut roots);
                    (leaf, states)
                })
                .collect();
            (0..n)
                .map(|omega| {
                    let Some(resp) = belief.observation_response(omega) else {
                        return 0.0;
                    };
                    let slope = resp.slopes[0].1;
                    let sd_after = (belief.var(omega) - slope * slope).max(0.0).sqrt();
                    let mut sums: Vec<PwlSum> = (0..k).map(|_| PwlSum::new()).collect();
                    for ((leaf, states), eps) in base.iter().zip(noise.rows()) {
                        let v = Pwl::line(means[omega] + sd_after * eps[omega], slope);
                        let roots: Vec<Pwl> = graph.backup_single(states, leaf, omega, v);
                        for (s, r) in sums.iter_mut().zip(&roots) {
                            s.add(r, weight);
                        }
                    }
                    finish(sums)
                })
                .collect()
        }
        FrontierBelief::Correlated(b) => (0..n)
            .map(|omega| {
                let Some(resp) = belief.observation_response(omega) else {
                    return 0.0;
                };
                let mut slopes = vec![0.0; n];
                for (j, s) in &resp.slopes {
                    slopes[*j] = *s;
                }
                let mut cov = b.cov.clone();
                for i in 0..n {
                    for j in 0..n {
                        cov[(i, j)] -= slopes[i] * slopes[j];
                    }
                }
                let sampler = JointSampler::Full {
                    mean: means.clone(),
                    factor: psd_sqrt(&cov),
                };
                let mut draw = vec![0.0; n];
                let mut sums: Vec<PwlSum> = (0..k).map(|_| PwlSum::new()).collect();
                for eps in noise.rows() {
                    sampler.draw(eps, &mut draw);
                    let all = graph.backup(|j| Pwl::line(draw[j], slopes[j]));
                    for (s, r) in sums.iter_mut().zip(&all[..k]) {
                        s.add(r, weight);
                    }
                }
                finish(sums)
            })
            .collect(),
    }
}

/// VOC of the dynamic value for one computation with shared inner noise.
pub fn voc_psi_crn<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief, omega: usize, noise: &CommonNoise) -> f64 {
    psi_vocs(graph, belief, noise)[omega]
}

/// Nested Monte Carlo VOC of the dynamic value: `m_outer` predictive
/// observations, each followed by an inner estimate of the updated dynamic
/// values over `m_inner` shared noise rows.
pub fn voc_psi_mc<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    omega: usize,
    m_outer: usize,
    m_inner: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let (gain, _) = psi_outer(graph, belief, omega, m_outer, m_inner, rng)?;
    Ok(gain)
}

/// Shared nested loop: returns (VOC, VOC′) estimates on the same draws.
fn psi_outer<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    omega: usize,
    m_outer: usize,
    m_inner: usize,
    rng: &mut R,
) -> Result<(Estimate, Estimate)> {
    if m_outer < 2 {
        return Err(Error::Config("m_outer must be at least 2".into()));
    }
    let noise = CommonNoise::new(m_inner, belief.len(), rng);
    let current = dynamic_value_crn(graph, belief, &noise);
    let best = argmax(&current);
    let pred_sd = (belief.var(omega) + belief.noise_var(omega)).sqrt();
    if !(pred_sd > 0.0) || belief.var(omega) <= 0.0 {
        return Ok((Estimate::exact(0.0), Estimate::exact(0.0)));
    }
    let mut voc = RunningStats::new();
    let mut voc_prime = RunningStats::new();
    for _ in 0..m_outer {
        let z: f64 = rng.sample(StandardNormal);
        let updated = belief.updated(omega, belief.mean(omega) + pred_sd * z)?;
        let after = dynamic_value_crn(graph, &updated, &noise);
        let top = after.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        voc.push(top - current[best]);
        voc_prime.push(top - after[best]);
    }
    let est = |s: &RunningStats| Estimate {
        value: s.mean(),
        std_error: s.std_error(),
    };
    Ok((est(&voc), est(&voc_prime)))
}

/// VOC′: expected gain over the currently preferred action's new value.
/// Exact for the static value; nested Monte Carlo with `m` outer and inner
/// samples for the dynamic value.
pub fn voc_prime<S, A, R: Rng + ?Sized>(
    graph: &SearchGraph<S, A>,
    belief: &FrontierBelief,
    omega: usize,
    valuation: Valuation,
    m: usize,
    rng: &mut R,
) -> Result<Estimate> {
    match valuation {
        Valuation::Static => Ok(Estimate::exact(phi_vocs(graph, belief)[omega].voc_prime)),
        Valuation::Dynamic => Ok(psi_outer(graph, belief, omega, m, m, rng)?.1),
    }
}

/// Gradient scores of the upper expectation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct UebScore {
    /// `d lambda(alpha) / d n` per frontier entry; 0 off `alpha`'s subtree.
    pub dlambda_dn: Vec<f64>,
    /// Root action with the largest bound.
    pub alpha: usize,
    pub lambda: Vec<f64>,
}

impl UebScore {
    /// Frontier entry with the most negative score, lowest index on ties.
    pub fn select(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.dlambda_dn.iter().enumerate() {
            if *v < self.dlambda_dn[best] {
                best = i;
            }
        }
        best
    }
}

/// `d sigma / d n` of the posterior sd as a function of the sample count.
pub fn dsigma_dn(n: f64, noise_var: f64, var0: f64) -> f64 {
    if var0 <= 0.0 {
        return 0.0;
    }
    let (sigma, sigma0) = (noise_var.sqrt(), var0.sqrt());
    -sigma * sigma0.powi(3) / (2.0 * (n * var0 + noise_var).powf(1.5))
}

/// `d mu / d n` of the posterior mean at a fixed sample mean.
pub fn dmu_dn(n: f64, noise_var: f64, var0: f64, sample_mean: f64, mean0: f64) -> f64 {
    let denom = n * var0 + noise_var;
    if denom <= 0.0 {
        return 0.0;
    }
    noise_var * var0 * (sample_mean - mean0) / (denom * denom)
}

fn frontier_dn(belief: &IndependentBelief, i: usize) -> (f64, f64) {
    let (node, prior) = (belief.node(i), belief.prior(i));
    let n = node.count as f64;
    // With no samples yet the sample mean is taken to be the prior mean.
    let rhat = if node.count == 0 { prior.mean0 } else { node.sample_mean };
    (
        dsigma_dn(n, prior.noise_var, prior.var0),
        dmu_dn(n, prior.noise_var, prior.var0, rhat, prior.mean0),
    )
}

/// UEB scores on a deterministic graph.
pub fn ueb_scores<S, A>(graph: &SearchGraph<S, A>, belief: &IndependentBelief) -> Result<UebScore> {
    let set = graph.root_leaves()?.to_vec();
    Ok(ueb_from_leaf_sets(std::slice::from_ref(&set), belief, graph.frontier().len()))
}

/// UEB scores averaged over sampled transition tables. On deterministic
/// graphs this is [`ueb_scores`].
pub fn ueb_scores_tables<S, A>(
    graph: &SearchGraph<S, A>,
    belief: &IndependentBelief,
    tables: &[DeterministicTransitionTable],
) -> Result<UebScore> {
    if graph.is_deterministic() {
        return ueb_scores(graph, belief);
    }
    if tables.is_empty() {
        return Err(Error::Config("need at least one transition table".into()));
    }
    let sets: Vec<Vec<Vec<Leaf>>> = tables.iter().map(|t| graph.table_leaves(t)).collect();
    Ok(ueb_from_leaf_sets(&sets, belief, graph.frontier().len()))
}

/// Scores from per-table root leaves, averaging bounds and derivatives.
pub fn ueb_from_leaf_sets(sets: &[Vec<Vec<Leaf>>], belief: &IndependentBelief, frontier_len: usize) -> UebScore {
    let fb = FrontierBelief::Independent(belief.clone());
    let k = sets[0].len();
    let weight = 1.0 / sets.len() as f64;
    let mut lambda = vec![0.0; k];
    let mut cs: Vec<Vec<f64>> = Vec::with_capacity(sets.len());
    for set in sets {
        let mut row = Vec::with_capacity(k);
        for (a, leaves) in set.iter().enumerate() {
            let ys = leaf_moments(leaves, &fb);
            let c = optimal_c(&ys);
            lambda[a] += weight
                * (c + ys
                    .iter()
                    .map(|&(m, s)| crate::normal::expected_excess(m, s, c))
                    .sum::<f64>());
            row.push(c);
        }
        cs.push(row);
    }
    let alpha = argmax(&lambda);
    let mut scores = vec![0.0; frontier_len];
    for (set, c_row) in sets.iter().zip(&cs) {
        let c = c_row[alpha];
        for leaf in &set[alpha] {
            let Leaf::Frontier { index, offset, scale } = *leaf else {
                continue;
            };
            let (dl_dsigma, dl_dmu) = excess_partials(offset, scale, fb.mean(index), fb.sd(index), c);
            let (ds, dm) = frontier_dn(belief, index);
            scores[index] += weight * (dl_dsigma * ds + dl_dmu * dm);
        }
    }
    UebScore {
        dlambda_dn: scores,
        alpha,
        lambda,
    }
}

/// Current best root action under the static value, lowest index on ties.
pub fn best_static_action<S, A>(graph: &SearchGraph<S, A>, belief: &FrontierBelief) -> usize {
    argmax(&static_value(graph, belief))
}
