//! Continuous piecewise-linear functions of one real variable.
//!
//! After a single observation every posterior mean is affine in the
//! standardized outcome `z`, so static values (maxima and expectations of
//! affine functions) are piecewise linear in `z`. Their expectation under
//! `z ~ N(0, 1)` then has an exact closed form, segment by segment.

use crate::normal::{cdf, pdf};

/// `intercept + slope * z`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

impl Line {
    pub const fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.intercept + self.slope * z
    }

    fn add(self, other: Line) -> Line {
        Line::new(self.intercept + other.intercept, self.slope + other.slope)
    }

    /// Abscissa where `self` and `other` cross, if they are not parallel.
    fn crossing(&self, other: &Line) -> Option<f64> {
        let ds = self.slope - other.slope;
        if ds == 0.0 {
            None
        } else {
            Some((other.intercept - self.intercept) / ds)
        }
    }

    /// `∫_lo^hi (a + b z) pdf(z) dz`
    fn normal_integral(&self, lo: f64, hi: f64) -> f64 {
        let mass = cdf(hi) - cdf(lo);
        let first_moment = pdf(lo) - pdf(hi);
        self.intercept * mass + self.slope * first_moment
    }
}

/// Continuous piecewise-linear function. Segment `k` spans
/// `(breaks[k-1], breaks[k])` and follows `lines[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    breaks: Vec<f64>,
    lines: Vec<Line>,
}

impl Pwl {
    pub fn constant(c: f64) -> Self {
        Self::line(c, 0.0)
    }

    pub fn line(intercept: f64, slope: f64) -> Self {
        Self {
            breaks: Vec::new(),
            lines: vec![Line::new(intercept, slope)],
        }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn is_linear(&self) -> bool {
        self.breaks.is_empty()
    }

    pub fn eval(&self, z: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b < z);
        self.lines[k].eval(z)
    }

    /// Upper envelope `max_i lines[i](z)`.
    pub fn upper_envelope(lines: &[Line]) -> Self {
        assert!(!lines.is_empty(), "envelope of no lines");
        let mut sorted: Vec<Line> = lines.to_vec();
        sorted.sort_by(|a, b| {
            a.slope
                .total_cmp(&b.slope)
                .then(a.intercept.total_cmp(&b.intercept))
        });
        // Keep only the highest intercept per slope.
        let mut dedup: Vec<Line> = Vec::with_capacity(sorted.len());
        for l in sorted {
            match dedup.last_mut() {
                Some(last) if last.slope == l.slope => *last = l,
                _ => dedup.push(l),
            }
        }
        let mut hull: Vec<Line> = Vec::with_capacity(dedup.len());
        let mut starts: Vec<f64> = Vec::with_capacity(dedup.len());
        for l in dedup {
            loop {
                let Some(top) = hull.last() else {
                    hull.push(l);
                    starts.push(f64::NEG_INFINITY);
                    break;
                };
                let x = top.crossing(&l).expect("distinct slopes");
                if x <= *starts.last().unwrap() {
                    hull.pop();
                    starts.pop();
                } else {
                    hull.push(l);
                    starts.push(x);
                    break;
                }
            }
        }
        Self {
            breaks: starts[1..].to_vec(),
            lines: hull,
        }
    }

    /// Walks the merged segmentation of `self` and `other`, calling `f` with
    /// each segment's bounds and the two active lines.
    fn merged_segments(&self, other: &Pwl, mut f: impl FnMut(f64, f64, Line, Line)) {
        let (mut i, mut j) = (0usize, 0usize);
        let mut lo = f64::NEG_INFINITY;
        loop {
            let bi = self.breaks.get(i).copied().unwrap_or(f64::INFINITY);
            let bj = other.breaks.get(j).copied().unwrap_or(f64::INFINITY);
            let hi = bi.min(bj);
            f(lo, hi, self.lines[i], other.lines[j]);
            if hi == f64::INFINITY {
                break;
            }
            if bi == hi {
                i += 1;
            }
            if bj == hi {
                j += 1;
            }
            lo = hi;
        }
    }

    pub fn add(&self, other: &Pwl) -> Pwl {
        if other.is_linear() {
            return self.add_line(other.lines[0]);
        }
        if self.is_linear() {
            return other.add_line(self.lines[0]);
        }
        let mut out = PwlBuilder::with_capacity(self.breaks.len() + other.breaks.len());
        self.merged_segments(other, |lo, _hi, a, b| out.push(lo, a.add(b)));
        out.finish()
    }

    pub fn add_line(&self, line: Line) -> Pwl {
        Pwl {
            breaks: self.breaks.clone(),
            lines: self.lines.iter().map(|l| l.add(line)).collect(),
        }
    }

    /// `offset + factor * self(z)`
    pub fn affine(&self, factor: f64, offset: f64) -> Pwl {
        if factor == 0.0 {
            return Pwl::constant(offset);
        }
        Pwl {
            breaks: self.breaks.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| Line::new(offset + factor * l.intercept, factor * l.slope))
                .collect(),
        }
    }

    /// Pointwise maximum.
    pub fn max(&self, other: &Pwl) -> Pwl {
        let mut out = PwlBuilder::with_capacity(self.breaks.len() + other.breaks.len() + 2);
        self.merged_segments(other, |lo, hi, a, b| {
            let cross = a.crossing(&b).filter(|&x| x > lo && x < hi);
            match cross {
                Some(x) => {
                    // Left of the crossing the smaller slope wins.
                    let (left, right) = if a.slope < b.slope { (a, b) } else { (b, a) };
                    out.push(lo, left);
                    out.push(x, right);
                }
                None => {
                    let probe = probe_point(lo, hi);
                    let pick = match (a.eval(probe), b.eval(probe)) {
                        (va, vb) if va > vb => a,
                        (va, vb) if vb > va => b,
                        _ => {
                            // Equal at the probe (parallel and identical, or
                            // touching only at a bound): choose by slope toward
                            // the interior.
                            if lo == f64::NEG_INFINITY {
                                if a.slope <= b.slope { a } else { b }
                            } else if a.slope >= b.slope {
                                a
                            } else {
                                b
                            }
                        }
                    };
                    out.push(lo, pick);
                }
            }
        });
        out.finish()
    }

    /// Pointwise maximum of a non-empty list.
    pub fn max_of(values: &[Pwl]) -> Pwl {
        let (first, rest) = values.split_first().expect("max of an empty list");
        rest.iter().fold(first.clone(), |acc, v| acc.max(v))
    }

    pub fn max_constant(&self, c: f64) -> Pwl {
        self.max(&Pwl::constant(c))
    }

    /// `E[self(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect_std_normal(&self) -> f64 {
        let mut total = 0.0;
        let mut lo = f64::NEG_INFINITY;
        for (k, line) in self.lines.iter().enumerate() {
            let hi = self.breaks.get(k).copied().unwrap_or(f64::INFINITY);
            total += line.normal_integral(lo, hi);
            lo = hi;
        }
        total
    }

    /// Leftmost line plus slope jumps, the representation used for sums.
    fn hinges(&self) -> (Line, impl Iterator<Item = (f64, f64)> + '_) {
        let jumps = self
            .breaks
            .iter()
            .zip(self.lines.windows(2))
            .map(|(&z, w)| (z, w[1].slope - w[0].slope));
        (self.lines[0], jumps)
    }
}

fn probe_point(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0 + lo.abs(),
        (false, true) => hi - 1.0 - hi.abs(),
        (false, false) => 0.0,
    }
}

/// Accumulates segments left to right, dropping breakpoints between
/// identical lines.
struct PwlBuilder {
    breaks: Vec<f64>,
    lines: Vec<Line>,
}

impl PwlBuilder {
    fn with_capacity(n: usize) -> Self {
        Self {
            breaks: Vec::with_capacity(n),
            lines: Vec::with_capacity(n + 1),
        }
    }

    fn push(&mut self, start: f64, line: Line) {
        match self.lines.last() {
            None => self.lines.push(line),
            Some(last) if *last == line => {}
            Some(_) => {
                self.breaks.push(start);
                self.lines.push(line);
            }
        }
    }

    fn finish(self) -> Pwl {
        Pwl {
            breaks: self.breaks,
            lines: self.lines,
        }
    }
}

/// Weighted sum of many piecewise-linear functions, assembled in one sort
/// instead of repeated pairwise merges.
#[derive(Debug, Clone)]
pub struct PwlSum {
    left: Line,
    jumps: Vec<(f64, f64)>,
}

impl Default for PwlSum {
    fn default() -> Self {
        Self::new()
    }
}

impl PwlSum {
    pub fn new() -> Self {
        Self {
            left: Line::new(0.0, 0.0),
            jumps: Vec::new(),
        }
    }

    pub fn add(&mut self, f: &Pwl, weight: f64) {
        let (left, jumps) = f.hinges();
        self.left = self
            .left
            .add(Line::new(weight * left.intercept, weight * left.slope));
        self.jumps.extend(jumps.map(|(z, dj)| (z, weight * dj)));
    }

    pub fn finish(mut self) -> Pwl {
        self.jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = PwlBuilder::with_capacity(self.jumps.len());
        let mut line = self.left;
        out.push(f64::NEG_INFINITY, line);
        let mut k = 0;
        while k < self.jumps.len() {
            let z = self.jumps[k].0;
            let mut dj = 0.0;
            while k < self.jumps.len() && self.jumps[k].0 == z {
                dj += self.jumps[k].1;
                k += 1;
            }
            line = Line::new(line.intercept - dj * z, line.slope + dj);
            out.push(z, line);
        }
        out.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_max(lines: &[Line], z: f64) -> f64 {
        lines.iter().map(|l| l.eval(z)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint rule on [-12, 12] with a fine grid.
    fn quadrature(f: impl Fn(f64) -> f64) -> f64 {
        let n = 200_000;
        let h = 24.0 / n as f64;
        (0..n)
            .map(|i| {
                let z = -12.0 + (i as f64 + 0.5) * h;
                f(z) * pdf(z) * h
            })
            .sum()
    }

    #[test]
    fn envelope_of_hinge() {
        let f = Pwl::upper_envelope(&[Line::new(0.0, 0.0), Line::new(0.0, 1.0)]);
        assert_eq!(f.breaks(), &[0.0]);
        // E[max(0, Z)] = pdf(0)
        assert!((f.expect_std_normal() - pdf(0.0)).abs() < 1e-15);
    }

    #[test]
    fn envelope_drops_dominated_lines() {
        let f = Pwl::upper_envelope(&[
            Line::new(0.0, -1.0),
            Line::new(-5.0, 0.0),
            Line::new(0.0, 1.0),
        ]);
        assert_eq!(f.lines().len(), 2);
        assert_eq!(f.eval(-3.0), 3.0);
        assert_eq!(f.eval(2.0), 2.0);
    }

    #[test]
    fn expectation_matches_quadrature() {
        let lines = [
            Line::new(0.2, -0.3),
            Line::new(-0.1, 0.5),
            Line::new(0.0, 1.2),
            Line::new(0.1, 0.1),
        ];
        let f = Pwl::upper_envelope(&lines);
        let q = quadrature(|z| brute_max(&lines, z));
        assert!((f.expect_std_normal() - q).abs() < 1e-9);
    }

    #[test]
    fn sum_matches_pairwise_add() {
        let a = Pwl::upper_envelope(&[Line::new(0.0, 0.0), Line::new(1.0, 1.0)]);
        let b = Pwl::upper_envelope(&[Line::new(0.5, -1.0), Line::new(0.0, 2.0)]);
        let mut s = PwlSum::new();
        s.add(&a, 0.5);
        s.add(&b, 0.5);
        let via_sum = s.finish();
        let via_add = a.add(&b).affine(0.5, 0.0);
        for z in [-3.0, -1.0, -0.2, 0.0, 0.3, 2.0] {
            assert!((via_sum.eval(z) - via_add.eval(z)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn max_and_add_agree_with_pointwise(
            l1 in prop::collection::vec((-3.0f64..3.0, -2.0f64..2.0), 1..5),
            l2 in prop::collection::vec((-3.0f64..3.0, -2.0f64..2.0), 1..5),
            zs in prop::collection::vec(-6.0f64..6.0, 10),
        ) {
            let a: Vec<Line> = l1.iter().map(|&(i, s)| Line::new(i, s)).collect();
            let b: Vec<Line> = l2.iter().map(|&(i, s)| Line::new(i, s)).collect();
            let fa = Pwl::upper_envelope(&a);
            let fb = Pwl::upper_envelope(&b);
            let m = fa.max(&fb);
            let s = fa.add(&fb);
            for z in zs {
                let ea = brute_max(&a, z);
                let eb = brute_max(&b, z);
                prop_assert!((m.eval(z) - ea.max(eb)).abs() < 1e-9);
                prop_assert!((s.eval(z) - (ea + eb)).abs() < 1e-9);
            }
            // Breakpoints stay sorted.
            prop_assert!(m.breaks().windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
