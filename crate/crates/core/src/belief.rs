//! Gaussian beliefs over frontier action values.
//!
//! Two models are supported: independent conjugate Normal beliefs per
//! frontier node, and a joint multivariate Normal whose prior covariance is
//! built from a kernel over node coordinates. Both expose the same
//! [`FrontierBelief`] surface to the value and VOC estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::normal;

/// Prior mean, prior variance and observation-noise variance of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPrior {
    pub mean0: f64,
    pub var0: f64,
    pub noise_var: f64,
}

impl NormalPrior {
    pub fn new(mean0: f64, var0: f64, noise_var: f64) -> Result<Self> {
        let p = Self { mean0, var0, noise_var };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean0.is_finite() {
            return Err(Error::Config(format!("prior mean {} is not finite", self.mean0)));
        }
        if !(self.var0 >= 0.0) || !self.var0.is_finite() {
            return Err(Error::Config(format!("prior variance {} must be >= 0", self.var0)));
        }
        if !(self.noise_var > 0.0) || !self.noise_var.is_finite() {
            return Err(Error::Config(format!("noise variance {} must be > 0", self.noise_var)));
        }
        Ok(())
    }

    pub fn precision0(&self) -> f64 {
        1.0 / self.var0
    }

    pub fn noise_precision(&self) -> f64 {
        1.0 / self.noise_var
    }
}

/// Posterior of one frontier node under an independent conjugate Normal prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeBelief {
    pub count: u64,
    pub sample_mean: f64,
    pub post_mean: f64,
    /// Posterior variance `1 / (n tau + tau0)`.
    pub post_var: f64,
}

impl NodeBelief {
    pub fn from_prior(prior: &NormalPrior) -> Self {
        Self {
            count: 0,
            sample_mean: 0.0,
            post_mean: prior.mean0,
            post_var: prior.var0,
        }
    }

    /// Batch posterior from a full list of observations.
    pub fn from_observations(prior: &NormalPrior, obs: &[f64]) -> Result<Self> {
        if let Some(bad) = obs.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite observation {bad}")));
        }
        if obs.is_empty() {
            return Ok(Self::from_prior(prior));
        }
        let n = obs.len() as f64;
        let sample_mean = obs.iter().sum::<f64>() / n;
        let (post_mean, post_var) = conjugate_posterior(prior, obs.len() as u64, sample_mean);
        Ok(Self {
            count: obs.len() as u64,
            sample_mean,
            post_mean,
            post_var,
        })
    }

    pub fn post_sd(&self) -> f64 {
        self.post_var.sqrt()
    }

    /// Posterior distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - normal::survival(self.post_mean, self.post_sd(), x)
    }
}

fn conjugate_posterior(prior: &NormalPrior, count: u64, sample_mean: f64) -> (f64, f64) {
    if prior.var0 == 0.0 {
        return (prior.mean0, 0.0);
    }
    let tau = prior.noise_precision();
    let tau0 = prior.precision0();
    let n = count as f64;
    let denom = n * tau + tau0;
    ((n * tau * sample_mean + tau0 * prior.mean0) / denom, 1.0 / denom)
}

/// One conjugate update of an independent node belief.
pub fn update_independent(belief: &NodeBelief, prior: &NormalPrior, obs_value: f64) -> Result<NodeBelief> {
    if !obs_value.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite observation {obs_value}")));
    }
    let count = belief.count + 1;
    let sample_mean = belief.sample_mean + (obs_value - belief.sample_mean) / count as f64;
    let (post_mean, post_var) = conjugate_posterior(prior, count, sample_mean);
    Ok(NodeBelief {
        count,
        sample_mean,
        post_mean,
        post_var,
    })
}

/// Draw from the posterior predictive `N(post_mean, post_var + noise_var)`.
pub fn predictive_sample<R: Rng + ?Sized>(belief: &NodeBelief, noise_var: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    belief.post_mean + (belief.post_var + noise_var).sqrt() * z
}

/// Independent conjugate beliefs, one prior per node.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentBelief {
    priors: Vec<NormalPrior>,
    nodes: Vec<NodeBelief>,
}

impl IndependentBelief {
    pub fn uniform(prior: NormalPrior, len: usize) -> Result<Self> {
        Self::with_priors(vec![prior; len])
    }

    pub fn with_priors(priors: Vec<NormalPrior>) -> Result<Self> {
        for p in &priors {
            p.validate()?;
        }
        let nodes = priors.iter().map(NodeBelief::from_prior).collect();
        Ok(Self { priors, nodes })
    }

    pub fn node(&self, i: usize) -> &NodeBelief {
        &self.nodes[i]
    }

    pub fn prior(&self, i: usize) -> &NormalPrior {
        &self.priors[i]
    }

    pub fn nodes(&self) -> &[NodeBelief] {
        &self.nodes
    }

    pub fn observe(&mut self, i: usize, value: f64) -> Result<()> {
        self.nodes[i] = update_independent(&self.nodes[i], &self.priors[i], value)?;
        Ok(())
    }
}

/// Covariance kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    White,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub signal_var: f64,
    /// Only read by the RBF kernel.
    pub lengthscale: f64,
}

impl Kernel {
    pub fn white(signal_var: f64) -> Self {
        Self {
            kind: KernelKind::White,
            signal_var,
            lengthscale: 1.0,
        }
    }

    pub fn rbf(signal_var: f64, lengthscale: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            signal_var,
            lengthscale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0) || !self.signal_var.is_finite() {
            return Err(Error::Config(format!("kernel signal variance {} must be > 0", self.signal_var)));
        }
        if self.kind == KernelKind::Rbf && (!(self.lengthscale > 0.0) || !self.lengthscale.is_finite()) {
            return Err(Error::Config(format!("kernel lengthscale {} must be > 0", self.lengthscale)));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            KernelKind::White => {
                if x == y {
                    self.signal_var
                } else {
                    0.0
                }
            }
            KernelKind::Rbf => {
                let d = x - y;
                self.signal_var * (-d * d / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }
}

/// Gram matrix of `kernel` over `coords`. The white kernel is keyed on the
/// index, not the coordinate value, so repeated coordinates stay independent.
pub fn kernel_matrix(kernel: &Kernel, coords: &[f64]) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if let Some(bad) = coords.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite coordinate {bad}")));
    }
    let n = coords.len();
    Ok(DMatrix::from_fn(n, n, |i, j| match kernel.kind {
        KernelKind::White => {
            if i == j {
                kernel.signal_var
            } else {
                0.0
            }
        }
        KernelKind::Rbf => kernel.eval(coords[i], coords[j]),
    }))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `S` with `S S^T = m` for a PSD `m`, via the symmetric eigendecomposition.
/// Tiny negative eigenvalues from round-off are treated as zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut factor = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-9 * m.trace().abs().max(f64::MIN_POSITIVE)
}

/// Joint multivariate Normal belief over all frontier nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Observation-noise variance per node.
    pub noise_vars: DVector<f64>,
}

impl CorrelatedBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, noise_vars: DVector<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n || noise_vars.len() != n {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: mean {n}, cov {}x{}, noise {}",
                cov.nrows(),
                cov.ncols(),
                noise_vars.len()
            )));
        }
        if noise_vars.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("noise variances must be >= 0".into()));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let min = min_eigenvalue(&sym);
        if min < -psd_tolerance(&sym) {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self {
            mean,
            cov: sym,
            noise_vars,
        })
    }

    /// Prior built from a kernel over node coordinates.
    pub fn from_kernel(mean0: f64, kernel: &Kernel, coords: &[f64], noise_var: f64) -> Result<Self> {
        let n = coords.len();
        Self::new(
            DVector::from_element(n, mean0),
            kernel_matrix(kernel, coords)?,
            DVector::from_element(n, noise_var),
        )
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Rank-one conjugate update after observing `obs_value` at `node`.
    pub fn update(&mut self, node: usize, obs_value: f64) -> Result<()> {
        if node >= self.len() {
            return Err(Error::InvalidInput(format!("node {node} out of range {}", self.len())));
        }
        if !obs_value.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite observation {obs_value}")));
        }
        let denom = self.noise_vars[node] + self.cov[(node, node)];
        if !(denom > 0.0) {
            return Err(Error::DegenerateBelief(format!(
                "predictive variance {denom} at node {node} is not positive"
            )));
        }
        let column = self.cov.column(node).into_owned();
        let innovation = obs_value - self.mean[node];
        self.mean.axpy(innovation / denom, &column, 1.0);
        self.cov.ger(-1.0 / denom, &column, &column, 1.0);
        // Keep the matrix exactly symmetric.
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = s;
                self.cov[(j, i)] = s;
            }
        }
        self.repair_psd();
        Ok(())
    }

    /// Clamp negative eigenvalues to zero once round-off drift exceeds the
    /// PSD tolerance.
    fn repair_psd(&mut self) {
        let tol = psd_tolerance(&self.cov);
        let eig = SymmetricEigen::new(self.cov.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= -tol {
            return;
        }
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        self.cov = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    }
}

/// Either belief model, as seen by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum FrontierBelief {
    Independent(IndependentBelief),
    Correlated(CorrelatedBelief),
}

/// How every posterior mean moves with the standardized outcome `z` of one
/// future observation at a given node.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationResponse {
    /// Standard deviation of the posterior predictive at the observed node.
    pub predictive_sd: f64,
    /// `(node, d mean / d z)` for every node whose mean moves.
    pub slopes: Vec<(usize, f64)>,
}

impl FrontierBelief {
    pub fn len(&self) -> usize {
        match self {
            FrontierBelief::Independent(b) => b.nodes.len(),
            FrontierBelief::Correlated(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, FrontierBelief::Independent(_))
    }

    pub fn mean(&self, i: usize) -> f64 {
        match self {
            FrontierBelief::Independent(b) => b.nodes[i].post_mean,
            FrontierBelief::Correlated(b) => b.mean[i],
        }
    }

    pub fn var(&self, i: usize) -> f64 {
        match self {
            FrontierBelief::Independent(b) => b.nodes[i].post_var,
            FrontierBelief::Correlated(b) => b.cov[(i, i)].max(0.0),
        }
    }

    pub fn sd(&self, i: usize) -> f64 {
        self.var(i).sqrt()
    }

    pub fn noise_var(&self, i: usize) -> f64 {
        match self {
            FrontierBelief::Independent(b) => b.priors[i].noise_var,
            FrontierBelief::Correlated(b) => b.noise_vars[i],
        }
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.mean(i)).collect()
    }

    pub fn observe(&mut self, i: usize, value: f64) -> Result<()> {
        match self {
            FrontierBelief::Independent(b) => b.observe(i, value),
            FrontierBelief::Correlated(b) => b.update(i, value),
        }
    }

    /// Response of the posterior means to one more observation at `i`.
    /// Returns `None` when the predictive distribution is degenerate.
    pub fn observation_response(&self, i: usize) -> Option<ObservationResponse> {
        let pred_var = self.var(i) + self.noise_var(i);
        if !(pred_var > 0.0) {
            return None;
        }
        let predictive_sd = pred_var.sqrt();
        let slopes = match self {
            FrontierBelief::Independent(b) => vec![(i, b.nodes[i].post_var / predictive_sd)],
            FrontierBelief::Correlated(b) => b
                .cov
                .column(i)
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(j, c)| (j, c / predictive_sd))
                .collect(),
        };
        Some(ObservationResponse { predictive_sd, slopes })
    }

    /// Posterior after one hypothetical observation at `i`.
    pub fn updated(&self, i: usize, value: f64) -> Result<FrontierBelief> {
        let mut b = self.clone();
        b.observe(i, value)?;
        Ok(b)
    }

    pub fn predictive_sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean(i) + (self.var(i) + self.noise_var(i)).sqrt() * z
    }

    /// Factorization used to turn standard-normal noise into joint draws
    /// from the current posterior.
    pub fn sampler(&self) -> JointSampler {
        match self {
            FrontierBelief::Independent(b) => JointSampler::Diagonal {
                mean: b.nodes.iter().map(|n| n.post_mean).collect(),
                sd: b.nodes.iter().map(|n| n.post_sd()).collect(),
            },
            FrontierBelief::Correlated(b) => JointSampler::Full {
                mean: b.mean.iter().copied().collect(),
                factor: psd_sqrt(&b.cov),
            },
        }
    }
}

/// Maps a vector of i.i.d. standard-normal draws to a joint posterior draw.
#[derive(Debug, Clone)]
pub enum JointSampler {
    Diagonal { mean: Vec<f64>, sd: Vec<f64> },
    Full { mean: Vec<f64>, factor: DMatrix<f64> },
}

impl JointSampler {
    pub fn len(&self) -> usize {
        match self {
            JointSampler::Diagonal { mean, .. } | JointSampler::Full { mean, .. } => mean.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero-mean perturbation `S eps` written into `out`.
    pub fn perturbation(&self, eps: &[f64], out: &mut [f64]) {
        match self {
            JointSampler::Diagonal { sd, .. } => {
                for ((o, s), e) in out.iter_mut().zip(sd).zip(eps) {
                    *o = s * e;
                }
            }
            JointSampler::Full { factor, .. } => {
                let n = factor.nrows();
                for (i, o) in out.iter_mut().enumerate().take(n) {
                    let mut acc = 0.0;
                    for (j, e) in eps.iter().enumerate().take(n) {
                        acc += factor[(i, j)] * e;
                    }
                    *o = acc;
                }
            }
        }
    }

    pub fn draw(&self, eps: &[f64], out: &mut [f64]) {
        self.perturbation(eps, out);
        let mean = match self {
            JointSampler::Diagonal { mean, .. } | JointSampler::Full { mean, .. } => mean,
        };
        for (o, m) in out.iter_mut().zip(mean) {
            *o += m;
        }
    }
}

/// One recorded computation outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub key: usize,
    pub value: f64,
    pub step: u64,
}

/// Append-only record of computation outcomes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationLog {
    entries: Vec<Observation>,
}

impl ObservationLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an outcome; the step index is assigned as `len + 1`.
    pub fn push(&mut self, key: usize, value: f64) -> u64 {
        let step = self.entries.len() as u64 + 1;
        self.entries.push(Observation { key, value, step });
        step
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values_for(&self, key: usize) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter(move |o| o.key == key).map(|o| o.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior(m: f64, v0: f64, v: f64) -> NormalPrior {
        NormalPrior::new(m, v0, v).unwrap()
    }

    #[test]
    fn single_observation_halves_unit_variance() {
        let p = prior(0.0, 1.0, 1.0);
        let b = update_independent(&NodeBelief::from_prior(&p), &p, 1.0).unwrap();
        assert!((b.post_mean - 0.5).abs() < 1e-15);
        assert!((b.post_var - 0.5).abs() < 1e-15);
        assert_eq!(b.count, 1);
    }

    #[test]
    fn empty_batch_is_prior() {
        let p = prior(0.3, 2.0, 0.5);
        let b = NodeBelief::from_observations(&p, &[]).unwrap();
        assert_eq!(b.post_mean, 0.3);
        assert_eq!(b.post_var, 2.0);
    }

    #[test]
    fn two_precise_observations() {
        let p = prior(0.0, 1.0, 0.25);
        let b = NodeBelief::from_observations(&p, &[0.5, 1.5]).unwrap();
        assert!((b.post_mean - 8.0 / 9.0).abs() < 1e-15);
        assert!((b.post_var - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_observation_rejected() {
        let p = prior(0.0, 1.0, 1.0);
        let b = NodeBelief::from_prior(&p);
        assert!(matches!(update_independent(&b, &p, f64::NAN), Err(Error::InvalidInput(_))));
        assert!(update_independent(&b, &p, f64::INFINITY).is_err());
    }

    #[test]
    fn zero_prior_variance_ignores_data() {
        let p = prior(-1.0, 0.0, 1.0);
        let b = NodeBelief::from_observations(&p, &[5.0, 7.0]).unwrap();
        assert_eq!(b.post_mean, -1.0);
        assert_eq!(b.post_var, 0.0);
    }

    #[test]
    fn kernel_values() {
        let w = kernel_matrix(&Kernel::white(2.0), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(w, DMatrix::identity(3, 3) * 2.0);
        let r = kernel_matrix(&Kernel::rbf(1.0, 1.0), &[0.0, 1.0, 1.0]).unwrap();
        assert!((r[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((r[(0, 1)] - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert_eq!(r[(1, 2)], 1.0);
        assert!(matches!(
            kernel_matrix(&Kernel::rbf(1.0, 0.0), &[0.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn perfectly_correlated_noiseless_update() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let mut b = CorrelatedBelief::new(DVector::zeros(2), cov, DVector::zeros(2)).unwrap();
        b.update(0, 0.7).unwrap();
        assert!((b.mean[0] - 0.7).abs() < 1e-15);
        assert!((b.mean[1] - 0.7).abs() < 1e-15);
        assert!(b.cov.iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn degenerate_update_is_an_error() {
        let mut b = CorrelatedBelief::new(DVector::zeros(1), DMatrix::zeros(1, 1), DVector::zeros(1)).unwrap();
        assert!(matches!(b.update(0, 1.0), Err(Error::DegenerateBelief(_))));
    }

    #[test]
    fn observed_variance_strictly_decreases() {
        let k = Kernel::rbf(1.0, 2.0);
        let mut b = CorrelatedBelief::from_kernel(0.0, &k, &[0.0, 1.0, 2.0, 5.0], 0.1).unwrap();
        for i in 0..4 {
            let before = b.cov[(i, i)];
            b.update(i, 0.3).unwrap();
            assert!(b.cov[(i, i)] < before);
        }
    }

    #[test]
    fn not_psd_is_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CorrelatedBelief::new(DVector::zeros(2), cov, DVector::from_element(2, 1.0)),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn degenerate_predictive_sample_is_the_mean() {
        let b = NodeBelief {
            count: 3,
            sample_mean: 1.0,
            post_mean: 0.25,
            post_var: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(predictive_sample(&b, 0.0, &mut rng), 0.25);
        }
    }

    #[test]
    fn predictive_moments() {
        let b = NodeBelief {
            count: 0,
            sample_mean: 0.0,
            post_mean: 0.0,
            post_var: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let s: crate::normal::RunningStats = (0..n).map(|_| predictive_sample(&b, 1.0, &mut rng)).collect();
        assert!((s.variance() - 2.0).abs() <= 0.06, "variance {}", s.variance());
        assert!(s.mean().abs() <= 3.0 * (2.0f64 / n as f64).sqrt(), "mean {}", s.mean());
    }

    #[test]
    fn log_steps_increase() {
        let mut log = ObservationLog::new();
        assert_eq!(log.push(2, 0.5), 1);
        assert_eq!(log.push(0, 0.1), 2);
        assert!(log.entries().windows(2).all(|w| w[0].step < w[1].step));
        assert_eq!(log.values_for(2).collect::<Vec<_>>(), vec![0.5]);
    }

    proptest! {
        #[test]
        fn sequential_matches_batch(
            obs in prop::collection::vec(-5.0f64..5.0, 0..30),
            m0 in -2.0f64..2.0, v0 in 0.01f64..4.0, v in 0.01f64..4.0,
        ) {
            let p = prior(m0, v0, v);
            let mut seq = NodeBelief::from_prior(&p);
            for &o in &obs {
                seq = update_independent(&seq, &p, o).unwrap();
            }
            let batch = NodeBelief::from_observations(&p, &obs).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            prop_assert!(rel(seq.post_mean, batch.post_mean) <= 1e-12);
            prop_assert!(rel(seq.post_var, batch.post_var) <= 1e-12);
            prop_assert_eq!(seq.count, batch.count);
        }

        #[test]
        fn order_invariance(obs in prop::collection::vec(-5.0f64..5.0, 1..20), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let p = prior(0.2, 1.5, 0.3);
            let mut shuffled = obs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let run = |xs: &[f64]| xs.iter().fold(NodeBelief::from_prior(&p), |b, &o| update_independent(&b, &p, o).unwrap());
            let a = run(&obs);
            let b = run(&shuffled);
            prop_assert!((a.post_mean - b.post_mean).abs() <= 1e-12 * a.post_mean.abs().max(1.0));
            prop_assert!((a.post_var - b.post_var).abs() <= 1e-12 * a.post_var.max(1.0));
        }

        #[test]
        fn variance_strictly_decreases(obs in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let p = prior(0.0, 1.0, 0.5);
            let mut b = NodeBelief::from_prior(&p);
            for &o in &obs {
                let next = update_independent(&b, &p, o).unwrap();
                prop_assert!(next.post_var < b.post_var);
                prop_assert!(next.post_var <= p.var0);
                b = next;
            }
        }

        #[test]
        fn white_kernel_update_matches_independent(
            obs in prop::collection::vec((0usize..4, -3.0f64..3.0), 1..25),
        ) {
            let p = prior(0.4, 0.8, 0.2);
            let coords = [0.0, 1.0, 2.0, 3.0];
            let mut corr = CorrelatedBelief::from_kernel(p.mean0, &Kernel::white(p.var0), &coords, p.noise_var).unwrap();
            let mut ind = IndependentBelief::uniform(p, 4).unwrap();
            for &(i, o) in &obs {
                corr.update(i, o).unwrap();
                ind.observe(i, o).unwrap();
            }
            for i in 0..4 {
                prop_assert!((corr.mean[i] - ind.node(i).post_mean).abs() <= 1e-12);
                prop_assert!((corr.cov[(i, i)] - ind.node(i).post_var).abs() <= 1e-12);
            }
        }

        #[test]
        fn psd_preserved_under_long_update_chains(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coords: Vec<f64> = (0..12).map(|i| i as f64).collect();
            let mut b = CorrelatedBelief::from_kernel(0.5, &Kernel::rbf(1.0, 3.0), &coords, 0.01).unwrap();
            for _ in 0..100 {
                let i = rng.random_range(0..12);
                let o = b.mean[i] + rng.sample::<f64, _>(StandardNormal);
                b.update(i, o).unwrap();
            }
            let tol = 1e-9 * b.cov.trace();
            prop_assert!(min_eigenvalue(&b.cov) >= -tol);
            prop_assert!((&b.cov - b.cov.transpose()).amax() == 0.0);
        }
    }
}
