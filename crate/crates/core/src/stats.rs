//! Estimators, confidence intervals and goodness-of-fit statistics.
//!
//! Every interval in the crate is a normal-approximation interval of
//! [`SIGMA_LEVEL`] standard errors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Width of all confidence intervals in standard errors.
pub const SIGMA_LEVEL: f64 = 3.0;

/// Asymptotic 1% critical value of the Kolmogorov distribution.
pub const KS_CRIT_1PCT: f64 = 1.627_624;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator, evaluated in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_err: f64::NAN, n };
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let var = if n > 1 {
            compensated_sum(samples.iter().map(|x| (x - mean).powi(2))) / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std_err: (var / n as f64).sqrt(), n }
    }

    /// Proportion of `hits` out of `n` trials with the binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self { mean: p, std_err: (p * (1.0 - p) / n as f64).sqrt(), n }
    }

    pub fn exact(value: f64) -> Self {
        Self { mean: value, std_err: 0.0, n: 0 }
    }

    pub fn half_width(&self) -> f64 {
        SIGMA_LEVEL * self.std_err
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width()
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width()
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width()
    }

    /// Standard-error-weighted distance to a reference value.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value) / self.std_err
    }

    /// `self - other` for independent estimates.
    pub fn minus(&self, other: &Self) -> Self {
        Self {
            mean: self.mean - other.mean,
            std_err: self.std_err.hypot(other.std_err),
            n: self.n.min(other.n),
        }
    }
}

/// Ratio of the means of two paired samples, with a delta-method standard
/// error that accounts for their covariance.
pub fn ratio_of_means(num: &[f64], den: &[f64]) -> MeanEstimate {
    assert_eq!(num.len(), den.len(), "paired samples must have equal length");
    let n = num.len();
    let a = MeanEstimate::from_samples(num);
    let b = MeanEstimate::from_samples(den);
    let cov = compensated_sum(num.iter().zip(den).map(|(x, y)| (x - a.mean) * (y - b.mean))) / (n - 1) as f64;
    let (va, vb) = (a.std_err.powi(2) * n as f64, b.std_err.powi(2) * n as f64);
    let r = a.mean / b.mean;
    let var = (va - 2.0 * r * cov + r * r * vb) / (b.mean * b.mean * n as f64);
    MeanEstimate { mean: r, std_err: var.max(0.0).sqrt(), n }
}

/// Difference of the means of two paired samples, `mean(a - b)`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> MeanEstimate {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    MeanEstimate::from_samples(&d)
}

/// One-sample Kolmogorov–Smirnov statistic of `samples` against `cdf`.
/// `samples` is sorted in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample Kolmogorov–Smirnov statistic; both slices are sorted in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// 1% critical value for a one-sample test with `n` samples.
pub fn ks_critical(n: usize) -> f64 {
    KS_CRIT_1PCT / (n as f64).sqrt()
}

/// 1% critical value for a two-sample test.
pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_CRIT_1PCT * ((n + m) / (n * m)).sqrt()
}

/// Outcome of a Pearson chi-square test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of `observed` counts against `expected` counts.
///
/// Adjacent bins are pooled until each pooled bin expects at least five
/// counts. When `constrained` the expected counts were scaled to the observed
/// total, which removes one degree of freedom.
pub fn chi_square(observed: &[f64], expected: &[f64], constrained: bool) -> ChiSquare {
    assert_eq!(observed.len(), expected.len());
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= 5.0 {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    let statistic = compensated_sum(pooled.iter().map(|(o, e)| (o - e).powi(2) / e));
    let dof = pooled.len().saturating_sub(usize::from(constrained)).max(1);
    let p_value = ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN);
    ChiSquare { statistic, dof, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn mean_estimate_of_known_sample() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert_relative_eq!(m.std_err, (5.0f64 / 3.0 / 4.0).sqrt(), max_relative = 1e-15);
        assert!(m.contains(2.5 + 2.9 * m.std_err));
        assert!(!m.contains(2.5 + 3.1 * m.std_err));
    }

    #[test]
    fn ratio_of_identical_samples_has_zero_error() {
        let a = [1.0, 2.0, 5.0, 0.5];
        let r = ratio_of_means(&a, &a);
        assert_relative_eq!(r.mean, 1.0);
        assert!(r.std_err < 1e-12);
    }

    #[test]
    fn ks_against_uniform_grid() {
        let mut s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&mut s, |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.005, max_relative = 1e-12);
        let mut t = s.clone();
        assert_eq!(ks_two_sample(&mut s, &mut t), 0.0);
    }

    #[test]
    fn chi_square_reference() {
        // statistic 4 with 1 dof has tail probability 2 * Q(2)
        let c = chi_square(&[60.0, 40.0], &[50.0, 50.0], true);
        assert_relative_eq!(c.statistic, 4.0);
        assert_eq!(c.dof, 1);
        assert_relative_eq!(c.p_value, 2.0 * crate::special::norm_sf(2.0), max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn compensated_sum_is_order_stable(mut v in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let forward = compensated_sum(v.iter().copied());
            v.reverse();
            let backward = compensated_sum(v.iter().copied());
            let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((forward - backward).abs() <= 4.0 * f64::EPSILON * scale);
        }

        #[test]
        fn ks_is_a_distance(mut a in prop::collection::vec(-5f64..5.0, 1..60), mut b in prop::collection::vec(-5f64..5.0, 1..60)) {
            let d = ks_two_sample(&mut a, &mut b);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
