//! Path functionals: exit statistics, first passage, natural occupation
//! time and natural local time.
//!
//! Analytic exit statistics come from the scale and speed densities of a
//! [`LineProfile`]. Monte Carlo estimators stream over paths without storing
//! them and report [`MeanEstimate`]s whose intervals are 3 standard errors
//! wide.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::media::{InterfaceMedium, LineProfile};
use crate::paths::{par_paths, PathSample, SimConfig, SkewDiffusionStepper, Step, Stepper, TimeGrid};
use crate::rng::PathRng;
use crate::stats::{paired_difference, ratio_of_means, MeanEstimate};

/// Exit law of an interval `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub p_exit_left: f64,
    pub p_exit_right: f64,
    pub mean_exit_time: f64,
    /// Half-widths for `(p_exit_left, p_exit_right, mean_exit_time)`; zero for analytic values.
    pub ci_halfwidths: [f64; 3],
}

impl ExitStats {
    /// Whether `other` lies inside this estimate's intervals.
    pub fn brackets(&self, other: &ExitStats) -> bool {
        (self.p_exit_left - other.p_exit_left).abs() <= self.ci_halfwidths[0]
            && (self.p_exit_right - other.p_exit_right).abs() <= self.ci_halfwidths[1]
            && (self.mean_exit_time - other.mean_exit_time).abs() <= self.ci_halfwidths[2]
    }
}

fn check_interval(a: f64, x: f64, b: f64) -> Result<()> {
    if a < x && x < b && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(invalid("interval", format!("need a < x < b with finite ends, got ({a}, {x}, {b})")))
    }
}

/// Integral of `(s0 + slope (y - p)) * m` over `[p, q]`.
fn linear_times_const(s0: f64, slope: f64, m: f64, p: f64, q: f64) -> f64 {
    let h = q - p;
    m * (s0 * h + 0.5 * slope * h * h)
}

/// Exit probabilities from the scale measure and the mean exit time
/// `int G(x, y) m(dy)` with the Green's function of `(a, b)`, both in
/// closed form for piecewise-constant coefficients.
pub fn exit_stats_analytic(profile: &LineProfile, a: f64, x: f64, b: f64) -> Result<ExitStats> {
    check_interval(a, x, b)?;
    let s_ab = profile.scale_measure(a, b);
    let s_ax = profile.scale_measure(a, x);
    let s_xb = profile.scale_measure(x, b);

    // int_a^x s(a, y) m(dy)
    let mut left = 0.0;
    let mut s_acc = 0.0;
    for w in profile.breakpoints(a, x).windows(2) {
        let k = profile.segment_of(0.5 * (w[0] + w[1]));
        let (sd, md) = (profile.scale_density(k), profile.speed_density(k));
        left += linear_times_const(s_acc, sd, md, w[0], w[1]);
        s_acc += sd * (w[1] - w[0]);
    }
    // int_x^b s(y, b) m(dy)
    let mut right = 0.0;
    let mut s_rem = s_xb;
    for w in profile.breakpoints(x, b).windows(2) {
        let k = profile.segment_of(0.5 * (w[0] + w[1]));
        let (sd, md) = (profile.scale_density(k), profile.speed_density(k));
        right += linear_times_const(s_rem, -sd, md, w[0], w[1]);
        s_rem -= sd * (w[1] - w[0]);
    }
    let p_exit_right = s_ax / s_ab;
    Ok(ExitStats {
        p_exit_left: s_xb / s_ab,
        p_exit_right,
        mean_exit_time: (s_xb * left + s_ax * right) / s_ab,
        ci_halfwidths: [0.0; 3],
    })
}

/// Crossing detector for one or two absorbing levels.
///
/// Within a step whose endpoints lie in the same constant-coefficient
/// segment and on the same side of a level, the level is declared hit with
/// the Brownian-bridge probability `exp(-2 (x0 - l)(x1 - l) / (D dt))`.
/// Steps that straddle an interface only test the endpoint, and near a
/// point where a level and an interface are both within reach the step is
/// split into [`SUBSTEPS`] pieces.
struct Monitor<'a, S: Stepper + ?Sized> {
    stepper: &'a S,
    levels: Vec<f64>,
    reach: f64,
    refine: bool,
}

const SUBSTEPS: usize = 16;
const REACH_SDS: f64 = 5.0;

impl<'a, S: Stepper + ?Sized> Monitor<'a, S> {
    fn new(stepper: &'a S, levels: Vec<f64>, dt: f64, max_d: f64) -> Self {
        let reach = REACH_SDS * (max_d * dt).sqrt();
        let refine = stepper
            .interfaces()
            .iter()
            .any(|c| levels.iter().any(|l| (c - l).abs() < 2.0 * reach));
        Self { stepper, levels, reach, refine }
    }

    fn segment(&self, x: f64) -> usize {
        self.stepper.interfaces().partition_point(|&c| c < x)
    }

    fn near_interface(&self, x: f64) -> bool {
        self.refine && self.stepper.interfaces().iter().any(|c| (x - c).abs() < self.reach)
    }

    /// Advances from `x` at time `t`; returns the new position and the
    /// level index with the (mid-step) hitting time if a level was hit.
    fn advance(&self, x: f64, t: f64, step: Step, rng: &mut PathRng) -> (f64, Option<(usize, f64)>) {
        if self.near_interface(x) {
            let sub = Step::new(step.dt / SUBSTEPS as f64);
            let mut y = x;
            for j in 0..SUBSTEPS {
                let (next, hit) = self.advance_once(y, t + j as f64 * sub.dt, sub, rng);
                if hit.is_some() {
                    return (next, hit);
                }
                y = next;
            }
            (y, None)
        } else {
            self.advance_once(x, t, step, rng)
        }
    }

    fn advance_once(&self, x: f64, t: f64, step: Step, rng: &mut PathRng) -> (f64, Option<(usize, f64)>) {
        let y = self.stepper.step(x, step, rng);
        let mid = t + 0.5 * step.dt;
        for (k, &l) in self.levels.iter().enumerate() {
            if (x - l).signum() != (y - l).signum() || y == l {
                return (y, Some((k, mid)));
            }
        }
        if self.segment(x) == self.segment(y) {
            let var = self.stepper.diffusivity_at(x) * step.dt;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, &l) in self.levels.iter().enumerate() {
                acc += (-2.0 * (x - l) * (y - l) / var).exp();
                if u < acc {
                    return (y, Some((k, mid)));
                }
            }
        }
        (y, None)
    }
}

fn max_diffusivity<S: Stepper + ?Sized>(stepper: &S, probes: &[f64]) -> f64 {
    let ifs = stepper.interfaces();
    let mut pts: Vec<f64> = probes.to_vec();
    if let (Some(first), Some(last)) = (ifs.first(), ifs.last()) {
        pts.push(first - 1.0);
        pts.push(last + 1.0);
        pts.extend(ifs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    }
    pts.iter().map(|&p| stepper.diffusivity_at(p)).fold(0.0, f64::max)
}

/// Monte Carlo exit statistics of `(a, b)` from `x`; every path must exit
/// before `config.horizon`.
pub fn exit_stats_mc<S: Stepper + ?Sized>(stepper: &S, a: f64, x: f64, b: f64, config: &SimConfig) -> Result<ExitStats> {
    check_interval(a, x, b)?;
    config.validate()?;
    let grid = config.grid();
    let monitor = Monitor::new(stepper, vec![a, b], config.dt, max_diffusivity(stepper, &[a, x, b]));
    let outcomes = par_paths(config.n_paths, config.seed, |_, rng| {
        let mut y = x;
        for i in 0..grid.n_steps {
            let (next, hit) = monitor.advance(y, grid.time(i), grid.step(i), rng);
            if let Some((side, time)) = hit {
                return Some((side, time));
            }
            y = next;
        }
        None
    });
    let unexited = outcomes.iter().filter(|o| o.is_none()).count();
    if unexited > 0 {
        return Err(Error::HorizonTooShort { fraction: unexited as f64 / outcomes.len() as f64 });
    }
    let left = outcomes.iter().filter(|o| matches!(o, Some((0, _)))).count();
    let p_left = MeanEstimate::proportion(left, outcomes.len());
    let times: Vec<f64> = outcomes.iter().map(|o| o.expect("all exited").1).collect();
    let tau = MeanEstimate::from_samples(&times);
    Ok(ExitStats {
        p_exit_left: p_left.mean,
        p_exit_right: 1.0 - p_left.mean,
        mean_exit_time: tau.mean,
        ci_halfwidths: [p_left.half_width(), p_left.half_width(), tau.half_width()],
    })
}

/// Estimated survival function `P(H > t)` of a hitting time on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub t_grid: Vec<f64>,
    pub survival: Vec<f64>,
    /// 3-sigma half-widths.
    pub ci: Vec<f64>,
    pub n_paths: usize,
    /// Whether the raw estimate increases anywhere by more than its interval.
    pub monotone_violation: bool,
}

impl SurvivalCurve {
    pub fn estimate(&self, i: usize) -> MeanEstimate {
        MeanEstimate { mean: self.survival[i], std_err: self.ci[i] / crate::stats::SIGMA_LEVEL, n: self.n_paths }
    }
}

/// Monte Carlo survival curve of `H = inf{t : X(t) = level}` from `x0`,
/// simulated up to the last grid time.
pub fn first_passage_survival<S: Stepper + ?Sized>(
    stepper: &S,
    x0: f64,
    level: f64,
    t_grid: &[f64],
    config: &SimConfig,
) -> Result<SurvivalCurve> {
    if level == x0 {
        return Err(invalid("level", "must differ from the starting point"));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] < 0.0 {
        return Err(invalid("t_grid", "must be nonempty, nonnegative and increasing"));
    }
    let horizon = *t_grid.last().expect("nonempty");
    let cfg = SimConfig { horizon, ..*config };
    cfg.validate()?;
    let grid = cfg.grid();
    let monitor = Monitor::new(stepper, vec![level], cfg.dt, max_diffusivity(stepper, &[x0, level]));
    let hits = par_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let mut y = x0;
        for i in 0..grid.n_steps {
            let (next, hit) = monitor.advance(y, grid.time(i), grid.step(i), rng);
            if let Some((_, time)) = hit {
                return time;
            }
            y = next;
        }
        f64::INFINITY
    });
    Ok(survival_from_hits(&hits, t_grid))
}

fn survival_from_hits(hits: &[f64], t_grid: &[f64]) -> SurvivalCurve {
    let mut sorted = hits.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = hits.len();
    let mut survival = Vec::with_capacity(t_grid.len());
    let mut ci = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let alive = n - sorted.partition_point(|&h| h <= t);
        let est = MeanEstimate::proportion(alive, n);
        survival.push(est.mean);
        ci.push(est.half_width());
    }
    let monotone_violation = survival.windows(2).zip(ci.windows(2)).any(|(s, c)| s[1] - s[0] > c[0].max(c[1]));
    SurvivalCurve { t_grid: t_grid.to_vec(), survival, ci, n_paths: n, monotone_violation }
}

/// Survival of Brownian motion with diffusivity `d` started at distance
/// `dist` from the level: `erf(dist / sqrt(2 d t))`.
pub fn reflection_survival(dist: f64, d: f64, t: f64) -> f64 {
    libm::erf(dist.abs() / (2.0 * d * t).sqrt())
}

/// An interval of the line. [`Interval::new`] gives `(lo, hi]`, so boundary
/// points fall on the left as interface points do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub include_lo: bool,
    pub include_hi: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, include_lo: false, include_hi: true }
    }

    /// `[lo, hi)`.
    pub fn closed_open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, include_lo: true, include_hi: false }
    }

    /// `(lo, hi)`.
    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, include_lo: false, include_hi: false }
    }

    pub fn everything() -> Self {
        Self::open(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.include_lo { x >= self.lo } else { x > self.lo };
        let below = if self.include_hi { x <= self.hi } else { x < self.hi };
        above && below
    }
}

fn in_set(set: &[Interval], x: f64) -> bool {
    set.iter().any(|i| i.contains(x))
}

/// Natural occupation time of `set`: the left-endpoint Riemann sum
/// `sum 1_set(x_i) (t_{i+1} - t_i)`.
pub fn natural_occupation_time(path: &PathSample, set: &[Interval]) -> f64 {
    let mut acc = crate::stats::CompensatedSum::new();
    for i in 0..path.len().saturating_sub(1) {
        if in_set(set, path.positions[i]) {
            acc.add(path.times[i + 1] - path.times[i]);
        }
    }
    acc.value()
}

/// Streams every path and accumulates, for each set, the left-endpoint
/// occupation time and its diffusivity-weighted counterpart.
fn occupation_mc<S: Stepper + ?Sized>(
    stepper: &S,
    x0: f64,
    sets: &[Interval],
    config: &SimConfig,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    config.validate()?;
    let grid: TimeGrid = config.grid();
    let full = Step::new(grid.dt);
    Ok(par_paths(config.n_paths, config.seed, |_, rng| {
        let mut occ = vec![0.0; sets.len()];
        let mut weighted = vec![0.0; sets.len()];
        let mut x = x0;
        for i in 0..grid.n_steps {
            let step = if i + 1 == grid.n_steps { grid.step(i) } else { full };
            for (k, set) in sets.iter().enumerate() {
                if set.contains(x) {
                    occ[k] += step.dt;
                    weighted[k] += step.dt * stepper.diffusivity_at(x);
                }
            }
            x = stepper.step(x, step, rng);
        }
        (occ, weighted)
    }))
}

/// One row of the occupation-balance comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationRow {
    pub lambda: f64,
    pub alpha: f64,
    /// `sqrt(D+) / (sqrt(D+) + sqrt(D-))`.
    pub threshold: f64,
    /// Time spent on `(0, inf)`.
    pub plus: MeanEstimate,
    /// Time on `(0, inf)` minus time on `(-inf, 0]`.
    pub difference: MeanEstimate,
    /// Sign the difference should have: `+1`, `0` or `-1`.
    pub expected_sign: i8,
    pub verdict: bool,
}

/// Expected occupation-time imbalance from the origin: positive exactly
/// when `lambda` exceeds `sqrt(D+) / (sqrt(D+) + sqrt(D-))`.
pub fn occupation_balance_report(media: &[InterfaceMedium], t: f64, config: &SimConfig) -> Result<Vec<OccupationRow>> {
    let cfg = SimConfig { horizon: t, ..*config };
    media
        .iter()
        .map(|m| {
            let stepper = SkewDiffusionStepper::new(*m);
            let occ = occupation_mc(&stepper, 0.0, &[Interval::new(0.0, f64::INFINITY)], &cfg)?;
            let plus: Vec<f64> = occ.iter().map(|(o, _)| o[0]).collect();
            let minus: Vec<f64> = plus.iter().map(|p| t - p).collect();
            let difference = paired_difference(&plus, &minus);
            let threshold = m.alpha_star();
            let expected_sign: i8 = if (m.lambda() - threshold).abs() <= 1e-12 {
                0
            } else if m.lambda() > threshold {
                1
            } else {
                -1
            };
            let verdict = match expected_sign {
                0 => difference.contains(0.0),
                s => !difference.contains(0.0) && difference.mean * f64::from(s) > 0.0,
            };
            Ok(OccupationRow {
                lambda: m.lambda(),
                alpha: m.alpha_of_lambda(),
                threshold,
                plus: MeanEstimate::from_samples(&plus),
                difference,
                expected_sign,
                verdict,
            })
        })
        .collect()
}

/// Mean time spent on `(0, inf)` from the origin by the lambda-skew diffusion.
pub fn positive_occupation_mc(medium: &InterfaceMedium, config: &SimConfig) -> Result<MeanEstimate> {
    let stepper = SkewDiffusionStepper::new(*medium);
    let occ = occupation_mc(&stepper, 0.0, &[Interval::new(0.0, f64::INFINITY)], config)?;
    let plus: Vec<f64> = occ.iter().map(|(o, _)| o[0]).collect();
    Ok(MeanEstimate::from_samples(&plus))
}

/// One-sided natural local time estimates at a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub epsilon: f64,
    /// `(1/eps)` times the mean occupation of `[a, a + eps)`.
    pub l_plus: MeanEstimate,
    /// `(1/eps)` times the mean occupation of `(a - eps, a)`.
    pub l_minus: MeanEstimate,
    /// `l_plus / l_minus` with a delta-method interval over paired paths.
    pub ratio: MeanEstimate,
    /// Ratio of the diffusivity-weighted (semimartingale) one-sided local times.
    pub semimartingale_ratio: MeanEstimate,
    pub n_paths: usize,
}

fn local_time_from_occupations(epsilon: f64, occ: &[(Vec<f64>, Vec<f64>)]) -> LocalTimeEstimate {
    let plus: Vec<f64> = occ.iter().map(|(o, _)| o[0] / epsilon).collect();
    let minus: Vec<f64> = occ.iter().map(|(o, _)| o[1] / epsilon).collect();
    let wplus: Vec<f64> = occ.iter().map(|(_, w)| w[0] / epsilon).collect();
    let wminus: Vec<f64> = occ.iter().map(|(_, w)| w[1] / epsilon).collect();
    LocalTimeEstimate {
        epsilon,
        l_plus: MeanEstimate::from_samples(&plus),
        l_minus: MeanEstimate::from_samples(&minus),
        ratio: ratio_of_means(&plus, &minus),
        semimartingale_ratio: ratio_of_means(&wplus, &wminus),
        n_paths: occ.len(),
    }
}

/// `[a, a + eps)` and `(a - eps, a)`.
fn local_time_bins(a: f64, epsilon: f64) -> [Interval; 2] {
    [Interval::closed_open(a, a + epsilon), Interval::open(a - epsilon, a)]
}

/// Natural local time at `a` from stored paths. The semimartingale ratio
/// weighs each occupation increment by `diffusivity(x)`.
pub fn natural_local_time(paths: &[PathSample], a: f64, epsilon: f64, diffusivity: impl Fn(f64) -> f64) -> Result<LocalTimeEstimate> {
    crate::error::ensure_positive("epsilon", epsilon)?;
    let bins = local_time_bins(a, epsilon);
    let occ: Vec<(Vec<f64>, Vec<f64>)> = paths
        .iter()
        .map(|p| {
            let mut o = vec![0.0; 2];
            let mut w = vec![0.0; 2];
            for i in 0..p.len().saturating_sub(1) {
                let dt = p.times[i + 1] - p.times[i];
                for (k, bin) in bins.iter().enumerate() {
                    if bin.contains(p.positions[i]) {
                        o[k] += dt;
                        w[k] += dt * diffusivity(p.positions[i]);
                    }
                }
            }
            (o, w)
        })
        .collect();
    Ok(local_time_from_occupations(epsilon, &occ))
}

/// Natural local time at `a` by streaming simulation from `x0`.
pub fn natural_local_time_mc<S: Stepper + ?Sized>(
    stepper: &S,
    x0: f64,
    a: f64,
    epsilon: f64,
    config: &SimConfig,
) -> Result<LocalTimeEstimate> {
    crate::error::ensure_positive("epsilon", epsilon)?;
    let occ = occupation_mc(stepper, x0, &local_time_bins(a, epsilon), config)?;
    Ok(local_time_from_occupations(epsilon, &occ))
}

/// Limit of `l_plus / l_minus` at the interface of a single-interface
/// medium: `(alpha / (1 - alpha)) sqrt(D-) / sqrt(D+)`.
pub fn local_time_ratio_limit(medium: &InterfaceMedium) -> f64 {
    let alpha = medium.alpha_of_lambda();
    alpha / (1.0 - alpha) * (medium.d_minus() / medium.d_plus()).sqrt()
}

/// Exact expectations of the one-sided estimators at finite `epsilon` for
/// the lambda-skew diffusion: the left-endpoint sums evaluated with the
/// closed-form transition CDF on the same time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeExpectation {
    pub epsilon: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub ratio: f64,
    pub semimartingale_ratio: f64,
}

pub fn expected_local_time_bins(
    medium: &InterfaceMedium,
    x0: f64,
    a: f64,
    epsilon: f64,
    grid: &TimeGrid,
) -> Result<LocalTimeExpectation> {
    crate::error::ensure_positive("epsilon", epsilon)?;
    let [plus_bin, minus_bin] = local_time_bins(a, epsilon);
    let mut plus = crate::stats::CompensatedSum::new();
    let mut minus = crate::stats::CompensatedSum::new();
    for i in 0..grid.n_steps {
        let (t, dt) = (grid.time(i), grid.step_len(i));
        let (p, m) = if i == 0 {
            (f64::from(u8::from(plus_bin.contains(x0))), f64::from(u8::from(minus_bin.contains(x0))))
        } else {
            let cdf = |y: f64| crate::densities::skew_diffusion_cdf(medium, t, x0, y);
            (cdf(a + epsilon)? - cdf(a)?, cdf(a)? - cdf(a - epsilon)?)
        };
        plus.add(p * dt);
        minus.add(m * dt);
    }
    let (l_plus, l_minus) = (plus.value() / epsilon, minus.value() / epsilon);
    let ratio = l_plus / l_minus;
    Ok(LocalTimeExpectation {
        epsilon,
        l_plus,
        l_minus,
        ratio,
        semimartingale_ratio: ratio * medium.diffusivity_at(a + 0.5 * epsilon) / medium.diffusivity_at(a - 0.5 * epsilon),
    })
}

/// Comparison of a window's occupation time with the sum of bin-centred
/// local-time estimates times the bin width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationDensityReport {
    pub window: Interval,
    pub bin_width: f64,
    pub occupation: MeanEstimate,
    pub local_time_sum: MeanEstimate,
    /// Paired difference `local_time_sum - occupation`.
    pub discrepancy: MeanEstimate,
}

/// Fraction of the bin width used for the local-time estimate at each bin centre.
pub const CENTRE_FRACTION: f64 = 0.25;

/// Checks `occupation(window) = int_window L(a) da` by a midpoint rule over
/// `bins` equal bins, each centre's local time estimated from the occupation
/// of a symmetric band of width `CENTRE_FRACTION * bin_width`.
pub fn occupation_density_consistency(paths: &[PathSample], window: Interval, bins: usize) -> Result<OccupationDensityReport> {
    if bins == 0 || !(window.hi > window.lo) || !window.lo.is_finite() || !window.hi.is_finite() {
        return Err(invalid("window", "need a bounded window and at least one bin"));
    }
    let w = (window.hi - window.lo) / bins as f64;
    let half = 0.5 * CENTRE_FRACTION * w;
    let bands: Vec<Interval> = (0..bins)
        .map(|k| {
            let c = window.lo + (k as f64 + 0.5) * w;
            Interval::new(c - half, c + half)
        })
        .collect();
    let mut occupation = Vec::with_capacity(paths.len());
    let mut sums = Vec::with_capacity(paths.len());
    for p in paths {
        occupation.push(natural_occupation_time(p, &[window]));
        sums.push(natural_occupation_time(p, &bands) / CENTRE_FRACTION);
    }
    Ok(OccupationDensityReport {
        window,
        bin_width: w,
        occupation: MeanEstimate::from_samples(&occupation),
        local_time_sum: MeanEstimate::from_samples(&sums),
        discrepancy: paired_difference(&sums, &occupation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::MultiMedium;
    use crate::paths::{simulate_skew_diffusion, MultiStepper};
    use approx::assert_relative_eq;

    fn conservative(dp: f64, dm: f64) -> InterfaceMedium {
        InterfaceMedium::conservative(dp, dm).unwrap()
    }

    #[test]
    fn analytic_exit_away_from_interface() {
        let m = conservative(3.0, 1.0);
        let s = exit_stats_analytic(&m.profile(), 1.5, 2.0, 2.5).unwrap();
        assert_relative_eq!(s.p_exit_left, 0.5, max_relative = 1e-14);
        assert_relative_eq!(s.mean_exit_time, 0.25 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn analytic_exit_across_conservative_interface() {
        for &(dp, dm, eps) in &[(3.0, 1.0, 1.0), (4.0, 0.5, 0.3), (1.0, 1.0, 2.0)] {
            let s = exit_stats_analytic(&conservative(dp, dm).profile(), -eps, 0.0, eps).unwrap();
            assert_relative_eq!(s.p_exit_left, dm / (dp + dm), max_relative = 1e-14);
            assert_relative_eq!(s.mean_exit_time, 2.0 * eps * eps / (dp + dm), max_relative = 1e-14);
            assert_eq!(s.p_exit_left + s.p_exit_right, 1.0);
        }
        let s = exit_stats_analytic(&conservative(3.0, 1.0).profile(), -1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(s.p_exit_left, 0.25, max_relative = 1e-15);
        assert_relative_eq!(s.mean_exit_time, 0.5, max_relative = 1e-15);
    }

    /// The Green's-function integral must solve (1/2) D u'' = -1 with
    /// u(a) = u(b) = 0 and the flux matching at the interface; compare with a
    /// fine finite-difference solve of that boundary-value problem.
    #[test]
    fn analytic_mean_exit_time_solves_the_boundary_value_problem() {
        let m = InterfaceMedium::new(4.0, 1.0, 0.3).unwrap();
        let p = m.profile();
        let (a, b) = (-0.7, 1.1);
        let n = 1800;
        let h = (b - a) / n as f64;
        // conservative form (1/2)(kappa u')' = -rho on nodes, rho = kappa / D
        let mut lower = vec![0.0; n - 1];
        let mut diag = vec![0.0; n - 1];
        let mut upper = vec![0.0; n - 1];
        let mut rhs = vec![0.0; n - 1];
        for i in 1..n {
            let x = a + i as f64 * h;
            let kl = p.conductivity(p.segment_of(x - 0.5 * h));
            let kr = p.conductivity(p.segment_of(x + 0.5 * h));
            let rho = 0.5 * (p.capacity(p.segment_of(x - 0.5 * h)) + p.capacity(p.segment_of(x + 0.5 * h)));
            lower[i - 1] = 0.5 * kl / (h * h);
            upper[i - 1] = 0.5 * kr / (h * h);
            diag[i - 1] = -0.5 * (kl + kr) / (h * h);
            rhs[i - 1] = -rho;
        }
        // Thomas
        for i in 1..n - 1 {
            let w = lower[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut u = vec![0.0; n - 1];
        u[n - 2] = rhs[n - 2] / diag[n - 2];
        for i in (0..n - 2).rev() {
            u[i] = (rhs[i] - upper[i] * u[i + 1]) / diag[i];
        }
        for &x in &[-0.5, 0.0, 0.4, 0.9] {
            let i = ((x - a) / h).round() as usize;
            let s = exit_stats_analytic(&p, a, a + i as f64 * h, b).unwrap();
            assert_relative_eq!(s.mean_exit_time, u[i - 1], max_relative = 1e-5);
        }
    }

    #[test]
    fn analytic_rejects_degenerate_interval() {
        let p = conservative(1.0, 1.0).profile();
        assert!(exit_stats_analytic(&p, 0.0, 0.0, 1.0).is_err());
        assert!(exit_stats_analytic(&p, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn mc_exit_brackets_analytic_at_interface() {
        let m = conservative(3.0, 1.0);
        let stepper = SkewDiffusionStepper::new(m);
        let mc = exit_stats_mc(&stepper, -1.0, 0.0, 1.0, &SimConfig::new(40_000, 1e-3, 20.0, 1)).unwrap();
        let exact = exit_stats_analytic(&m.profile(), -1.0, 0.0, 1.0).unwrap();
        assert!(mc.brackets(&exact), "{mc:?}");
    }

    #[test]
    fn mc_exit_homogeneous_symmetric() {
        let stepper = SkewDiffusionStepper::new(conservative(2.0, 2.0));
        let mc = exit_stats_mc(&stepper, -0.5, 0.0, 0.5, &SimConfig::new(20_000, 1e-3, 20.0, 2)).unwrap();
        assert!((mc.p_exit_left - 0.5).abs() <= mc.ci_halfwidths[0]);
        assert!((mc.mean_exit_time - 0.125).abs() <= mc.ci_halfwidths[2], "{mc:?}");
    }

    #[test]
    fn mc_exit_multi_medium() {
        let multi = MultiMedium::new(vec![-0.5, 0.5], vec![1.0, 4.0, 0.5]).unwrap();
        let stepper = MultiStepper::new(multi.clone());
        let mc = exit_stats_mc(&stepper, -1.0, 0.2, 1.0, &SimConfig::new(20_000, 5e-4, 20.0, 3)).unwrap();
        let exact = exit_stats_analytic(&multi.profile(), -1.0, 0.2, 1.0).unwrap();
        assert!(mc.brackets(&exact), "{mc:?} vs {exact:?}");
    }

    #[test]
    fn mc_exit_reports_short_horizon() {
        let stepper = SkewDiffusionStepper::new(conservative(1.0, 1.0));
        let r = exit_stats_mc(&stepper, -10.0, 0.0, 10.0, &SimConfig::new(100, 0.01, 0.1, 1));
        assert!(matches!(r, Err(Error::HorizonTooShort { fraction }) if fraction == 1.0));
    }

    #[test]
    fn survival_matches_reflection_principle() {
        let stepper = SkewDiffusionStepper::new(conservative(2.0, 2.0));
        let grid: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
        let curve = first_passage_survival(&stepper, 0.3, 1.0, &grid, &SimConfig::new(40_000, 1e-2, 1.0, 4)).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = reflection_survival(0.7, 2.0, t);
            assert!(curve.estimate(i).contains(exact), "t {t}: {} vs {exact}", curve.survival[i]);
        }
        assert!(!curve.monotone_violation);
    }

    #[test]
    fn occupation_of_everything_is_the_horizon() {
        let m = InterfaceMedium::new(4.0, 1.0, 0.4).unwrap();
        let paths = simulate_skew_diffusion(&m, 0.0, &SimConfig::new(5, 0.003, 1.0, 8)).unwrap();
        for p in &paths {
            assert_relative_eq!(natural_occupation_time(p, &[Interval::everything()]), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn expected_positive_occupation_is_alpha_t() {
        for &lambda in &[0.3, 0.8] {
            let m = InterfaceMedium::new(4.0, 1.0, lambda).unwrap();
            let dt = 0.01;
            let est = positive_occupation_mc(&m, &SimConfig::new(40_000, dt, 1.0, 5)).unwrap();
            // the left-endpoint sum skips the first step, which starts on the minus side
            assert!(est.contains(m.alpha_of_lambda() * (1.0 - dt)), "{est:?}");
        }
    }

    #[test]
    fn occupation_balance_signs() {
        let thr = 2.0 / 3.0;
        let media: Vec<_> =
            [thr - 0.1, thr, thr + 0.1].iter().map(|&l| InterfaceMedium::new(4.0, 1.0, l).unwrap()).collect();
        let rows = occupation_balance_report(&media, 1.0, &SimConfig::new(20_000, 0.01, 1.0, 6)).unwrap();
        assert_eq!(rows.iter().map(|r| r.expected_sign).collect::<Vec<_>>(), vec![-1, 0, 1]);
        assert!(rows.iter().all(|r| r.verdict), "{rows:?}");
    }

    #[test]
    fn homogeneous_local_time_is_symmetric() {
        let stepper = SkewDiffusionStepper::new(conservative(1.0, 1.0));
        // the starting point sits in the plus bin and adds dt / eps there; keep it well inside the interval
        let lt = natural_local_time_mc(&stepper, 0.0, 0.0, 0.1, &SimConfig::new(5_000, 2.5e-4, 1.0, 7)).unwrap();
        assert!(lt.ratio.contains(1.0), "{lt:?}");
        assert!(lt.semimartingale_ratio.contains(1.0));
    }

    #[test]
    fn local_time_ratio_limits() {
        assert_relative_eq!(local_time_ratio_limit(&conservative(4.0, 1.0)), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            local_time_ratio_limit(&InterfaceMedium::new(4.0, 1.0, 0.5).unwrap()),
            0.25,
            max_relative = 1e-15
        );
    }

    #[test]
    fn stored_and_streamed_local_time_agree() {
        let m = conservative(4.0, 1.0);
        let cfg = SimConfig::new(200, 1e-3, 0.5, 9);
        let paths = simulate_skew_diffusion(&m, 0.0, &cfg).unwrap();
        let a = natural_local_time(&paths, 0.0, 0.1, |x| m.diffusivity_at(x)).unwrap();
        let b = natural_local_time_mc(&SkewDiffusionStepper::new(m), 0.0, 0.0, 0.1, &cfg).unwrap();
        assert_relative_eq!(a.l_plus.mean, b.l_plus.mean, max_relative = 1e-12);
        assert_relative_eq!(a.l_minus.mean, b.l_minus.mean, max_relative = 1e-12);
    }

    #[test]
    fn interval_endpoints() {
        assert!(Interval::new(0.0, 1.0).contains(1.0) && !Interval::new(0.0, 1.0).contains(0.0));
        assert!(Interval::closed_open(0.0, 1.0).contains(0.0) && !Interval::closed_open(0.0, 1.0).contains(1.0));
        assert!(!Interval::open(0.0, 1.0).contains(0.0) && !Interval::open(0.0, 1.0).contains(1.0));
    }

    #[test]
    fn finite_epsilon_expectation_matches_simulation() {
        let m = InterfaceMedium::new(4.0, 1.0, 0.5).unwrap();
        let cfg = SimConfig::new(20_000, 1e-3, 1.0, 11);
        let mc = natural_local_time_mc(&SkewDiffusionStepper::new(m), 0.0, 0.0, 0.1, &cfg).unwrap();
        let exact = expected_local_time_bins(&m, 0.0, 0.0, 0.1, &cfg.grid()).unwrap();
        assert!(mc.l_plus.contains(exact.l_plus), "{mc:?} {exact:?}");
        assert!(mc.l_minus.contains(exact.l_minus));
        assert!(mc.ratio.contains(exact.ratio));
        assert_relative_eq!(exact.semimartingale_ratio, 4.0 * exact.ratio, max_relative = 1e-15);
    }

    #[test]
    fn finite_epsilon_bias_shrinks_linearly() {
        let m = conservative(4.0, 1.0);
        let grid = TimeGrid::new(1e-4, 1.0);
        let bias: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| expected_local_time_bins(&m, 0.0, 0.0, e, &grid).unwrap().ratio - 1.0)
            .collect();
        assert!(bias[0] > bias[1] && bias[1] > bias[2] && bias[2] > 0.0, "{bias:?}");
    }

    #[test]
    fn occupation_density_away_from_interface() {
        let m = conservative(1.0, 1.0);
        let paths = simulate_skew_diffusion(&m, 0.0, &SimConfig::new(2_000, 1e-3, 1.0, 10)).unwrap();
        let r = occupation_density_consistency(&paths, Interval::new(0.2, 0.6), 8).unwrap();
        assert!(r.discrepancy.contains(0.0), "{r:?}");
    }
}
