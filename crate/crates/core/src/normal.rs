//! Standard Normal density, distribution function and the partial
//! expectations that show up in every closed form of this crate.

use statrs::function::erf::erfc;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard Normal density.
#[inline]
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard Normal distribution function, accurate in both tails.
#[inline]
pub fn cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// `E[(X - c)^+]` for `X ~ N(mean, sd^2)`. A zero `sd` is a point mass.
pub fn expected_excess(mean: f64, sd: f64, c: f64) -> f64 {
    if sd <= 0.0 {
        return (mean - c).max(0.0);
    }
    let z = (mean - c) / sd;
    (mean - c) * cdf(z) + sd * pdf(z)
}

/// `E[max(c, X)] - max(c, mean)` for `X ~ N(mean, sd^2)`.
///
/// Written as `sd * (pdf(z) - |z| * cdf(-|z|))` so the result stays
/// non-negative and accurate when `|z|` is large.
pub fn expected_improvement(mean: f64, sd: f64, c: f64) -> f64 {
    if sd <= 0.0 {
        return 0.0;
    }
    let z = ((mean - c) / sd).abs();
    (sd * (pdf(z) - z * cdf(-z))).max(0.0)
}

/// Tail probability of the point mass convention `1 - F(c)`, with the jump
/// of a degenerate distribution assigned to `F`.
#[inline]
pub fn survival(mean: f64, sd: f64, c: f64) -> f64 {
    if sd <= 0.0 {
        if c < mean {
            1.0
        } else {
            0.0
        }
    } else {
        cdf((mean - c) / sd)
    }
}

/// Streaming mean and standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (ddof = 1).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// A Monte Carlo (or exact, with zero error) estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }
}
