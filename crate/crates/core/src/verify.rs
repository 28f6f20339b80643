//! The acceptance suite: fourteen numbered criteria, each producing a
//! self-describing JSON report.
//!
//! Reports carry the operation exercised, its parameters, every sub-claim
//! with its estimate, reference and interval, and an overall verdict. They
//! contain no timings, so identical seeds give byte-identical reports.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::densities::{
    half_line_mass, integrate_density, physical_density, skew_bm_cdf, skew_bm_density, skew_diffusion_density, Side,
};
use crate::error::{invalid, Result};
use crate::functionals::{
    exit_stats_analytic, exit_stats_mc, expected_local_time_bins, first_passage_survival, natural_local_time_mc,
    occupation_balance_report, local_time_ratio_limit,
};
use crate::homogenize::{effective_dispersion, mc_longtime_variance, single_interface_parabolic_closed_form, LayeredCrossSection};
use crate::media::InterfaceMedium;
use crate::network::{
    dispersal_kernel_mc, junction_exit_frequencies, laplace_kernel_mass, network_histogram_mc, network_pde_crosscheck,
    NetworkPosition, RiverNetwork,
};
use crate::paths::{skew_walk_endpoints, terminal_positions, EulerTransformedStepper, SimConfig, SkewDiffusionStepper};
use crate::pde::{observed_orders, preset_heat_conduction, solve_interface_pde, Boundary, Grid, PdeProblem};
use crate::quadrature::{breakpoints, integrate_pieces};
use crate::rng::{derive_seed, path_rng};
use crate::stats::{chi_square, ks_critical, MeanEstimate};

pub const CRITERIA: std::ops::RangeInclusive<u8> = 1..=14;

/// Sample sizes: as specified, or reduced for quick reruns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Smoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub scale: Scale,
    pub seed: u64,
    /// Also run the long Monte Carlo part of criterion 12.
    pub slow: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { scale: Scale::Full, seed: 20_240_601, slow: false }
    }
}

impl VerifyOptions {
    fn paths(&self, full: usize) -> usize {
        match self.scale {
            Scale::Full => full,
            Scale::Smoke => (full / 50).max(500),
        }
    }

    fn seed(&self, id: u8, k: u64) -> u64 {
        derive_seed(self.seed, u64::from(id) * 1000 + k)
    }
}

/// One sub-claim of a criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub estimate: f64,
    pub reference: f64,
    /// Interval used for the decision when the estimate is statistical.
    pub ci: Option<[f64; 2]>,
    /// Deterministic tolerance or bound, when there is one.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    fn within(label: impl Into<String>, estimate: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (estimate - reference).abs() <= tolerance;
        Self { label: label.into(), estimate, reference, ci: None, tolerance: Some(tolerance), pass }
    }

    fn below(label: impl Into<String>, estimate: f64, bound: f64) -> Self {
        Self { label: label.into(), estimate, reference: bound, ci: None, tolerance: Some(bound), pass: estimate < bound }
    }

    fn above(label: impl Into<String>, estimate: f64, bound: f64) -> Self {
        Self { label: label.into(), estimate, reference: bound, ci: None, tolerance: Some(bound), pass: estimate > bound }
    }

    fn covers(label: impl Into<String>, est: MeanEstimate, reference: f64) -> Self {
        Self { label: label.into(), estimate: est.mean, reference, ci: Some([est.lower(), est.upper()]), tolerance: None, pass: est.contains(reference) }
    }

    fn excludes(label: impl Into<String>, est: MeanEstimate, reference: f64) -> Self {
        Self { pass: !est.contains(reference), ..Self::covers(label, est, reference) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub op: String,
    pub params: Value,
    pub estimate: BTreeMap<String, f64>,
    pub ci: BTreeMap<String, [f64; 2]>,
    /// `"pass"` or `"fail"`.
    pub verdict: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl CriterionReport {
    fn new(id: u8, title: &str, op: &str, params: Value, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let estimate = checks.iter().map(|c| (c.label.clone(), c.estimate)).collect();
        let ci = checks.iter().filter_map(|c| c.ci.map(|i| (c.label.clone(), i))).collect();
        let verdict = if !checks.is_empty() && checks.iter().all(|c| c.pass) { "pass" } else { "fail" };
        Self { id, title: title.into(), op: op.into(), params, estimate, ci, verdict: verdict.into(), checks, notes }
    }

    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }

    /// Canonical serialization used for reproducibility comparisons.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }

    /// Failing sub-claims, for one-line summaries.
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

pub fn run_criterion(id: u8, opts: &VerifyOptions) -> Result<CriterionReport> {
    match id {
        1 => density_normalization(opts),
        2 => interface_mass_split(opts),
        3 => chapman_kolmogorov(opts),
        4 => lambda_density_consistency(opts),
        5 => fclt(opts),
        6 => sign_law(opts),
        7 => exit_statistics(opts),
        8 => first_passage_ordering(opts),
        9 => occupation_time(opts),
        10 => local_time_continuity(opts),
        11 => pde_convergence(opts),
        12 => taylor_aris(opts),
        13 => network(opts),
        14 => reproducibility(opts),
        _ => Err(invalid("criterion", format!("{id} is not in 1..=14"))),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CriterionReport>> {
    CRITERIA.map(|id| run_criterion(id, opts)).collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn density_normalization(_: &VerifyOptions) -> Result<CriterionReport> {
    let ts = linspace(0.05, 2.0, 20);
    let xs = linspace(-3.0, 3.0, 20);
    let mut checks = Vec::new();
    for ratio in [1.0, 4.0, 25.0] {
        let m = InterfaceMedium::conservative(ratio, 1.0)?;
        let (mut worst_norm, mut worst_sym) = (0.0f64, 0.0f64);
        for &t in &ts {
            let sd = (ratio * t).sqrt();
            for &x in &xs {
                let total = integrate_density(|y| physical_density(&m, t, x, y).unwrap_or(f64::NAN), x, sd, f64::NEG_INFINITY, f64::INFINITY, 1e-13)?;
                worst_norm = worst_norm.max((total - 1.0).abs());
                for &y in &xs {
                    let (a, b) = (physical_density(&m, t, x, y)?, physical_density(&m, t, y, x)?);
                    if a > 0.0 {
                        worst_sym = worst_sym.max((a - b).abs() / a);
                    }
                }
            }
        }
        checks.push(Check::below(format!("max |mass - 1|, D+/D- = {ratio}"), worst_norm, 1e-10));
        checks.push(Check::below(format!("max symmetry defect, D+/D- = {ratio}"), worst_sym, 1e-13));
    }
    Ok(CriterionReport::new(
        1,
        "density normalization and symmetry",
        "physical_density",
        json!({"t": [0.05, 2.0, 20], "x": [-3.0, 3.0, 20], "d_plus": [1.0, 4.0, 25.0], "d_minus": 1.0}),
        checks,
        vec![],
    ))
}

fn interface_mass_split(_: &VerifyOptions) -> Result<CriterionReport> {
    let mut checks = Vec::new();
    for (dp, dm) in [(4.0, 1.0), (1.0, 4.0), (25.0, 1.0), (2.0, 3.0)] {
        let m = InterfaceMedium::conservative(dp, dm)?;
        let reference = f64::sqrt(dp) / (f64::sqrt(dp) + f64::sqrt(dm));
        for t in [0.1, 1.0, 5.0] {
            let mass = half_line_mass(&m, t, 0.0, Side::Plus)?;
            checks.push(Check::within(format!("P(X({t}) > 0), D = ({dp}, {dm})"), mass, reference, 1e-10));
        }
    }
    Ok(CriterionReport::new(
        2,
        "interface mass split",
        "half_line_mass",
        json!({"media": [[4.0, 1.0], [1.0, 4.0], [25.0, 1.0], [2.0, 3.0]], "t": [0.1, 1.0, 5.0], "x": 0.0}),
        checks,
        vec![],
    ))
}

fn chapman_kolmogorov(opts: &VerifyOptions) -> Result<CriterionReport> {
    let m = InterfaceMedium::conservative(4.0, 1.0)?;
    let alpha = 0.7;
    let mut rng = path_rng(opts.seed(3, 0), 0);
    let (mut worst_phys, mut worst_skew) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let s: f64 = rng.random_range(0.1..2.0);
        let t: f64 = rng.random_range(0.1..2.0);
        let x: f64 = rng.random_range(-2.0..2.0);
        let y: f64 = rng.random_range(-2.0..2.0);
        let reach = 12.0 * (4.0 * (s + t)).sqrt();
        let pts = breakpoints(x.min(y).min(0.0) - reach, x.max(y).max(0.0) + reach, &[0.0, x, y]);
        let phys = integrate_pieces(|z| physical_density(&m, s, x, z).unwrap_or(f64::NAN) * physical_density(&m, t, z, y).unwrap_or(f64::NAN), &pts, 1e-13)?;
        worst_phys = worst_phys.max((phys.value - physical_density(&m, s + t, x, y)?).abs());
        let skew = integrate_pieces(|z| skew_bm_density(alpha, s, x, z).unwrap_or(f64::NAN) * skew_bm_density(alpha, t, z, y).unwrap_or(f64::NAN), &pts, 1e-13)?;
        worst_skew = worst_skew.max((skew.value - skew_bm_density(alpha, s + t, x, y)?).abs());
    }
    Ok(CriterionReport::new(
        3,
        "Chapman-Kolmogorov",
        "physical_density, skew_bm_density",
        json!({"points": 50, "s_t": [0.1, 2.0], "x_y": [-2.0, 2.0], "d_plus": 4.0, "d_minus": 1.0, "alpha": alpha}),
        vec![Check::below("max defect, physical density", worst_phys, 1e-8), Check::below("max defect, skew BM density", worst_skew, 1e-8)],
        vec![],
    ))
}

fn lambda_density_consistency(_: &VerifyOptions) -> Result<CriterionReport> {
    let xs = linspace(-3.0, 3.0, 100);
    let mut checks = Vec::new();
    for (dp, dm) in [(4.0, 1.0), (1.0, 25.0)] {
        let m = InterfaceMedium::conservative(dp, dm)?;
        let mut worst = 0.0f64;
        for &x in &xs {
            for &y in &xs {
                worst = worst.max((skew_diffusion_density(&m, 0.8, x, y)? - physical_density(&m, 0.8, x, y)?).abs());
            }
        }
        checks.push(Check::below(format!("max difference, D = ({dp}, {dm})"), worst, 1e-12));
    }
    Ok(CriterionReport::new(
        4,
        "lambda-density consistency",
        "skew_diffusion_density",
        json!({"t": 0.8, "grid": [-3.0, 3.0, 100], "media": [[4.0, 1.0], [1.0, 25.0]]}),
        checks,
        vec![],
    ))
}

/// Kolmogorov–Smirnov distance of lattice-valued samples `s / sqrt(n)`
/// (all of the parity of `n`) from `cdf`, evaluated at the midpoints between
/// lattice sites.
pub fn lattice_ks_distance(endpoints: &[i64], n: usize, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = endpoints.to_vec();
    sorted.sort_unstable();
    let scale = (n as f64).sqrt();
    let total = sorted.len() as f64;
    let (lo, hi) = (sorted[0] - 2, sorted[sorted.len() - 1] + 2);
    let mut worst = 0.0f64;
    let mut k = lo;
    while k <= hi {
        let below = sorted.partition_point(|&s| s <= k) as f64 / total;
        worst = worst.max((below - cdf((k as f64 + 1.0) / scale)).abs());
        k += 2;
    }
    worst
}

fn fclt(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = 10_000;
    let walks = opts.paths(100_000);
    let critical = ks_critical(walks);
    let mut checks = Vec::new();
    for (k, alpha) in [0.3, 0.5, 0.8].into_iter().enumerate() {
        let ends = skew_walk_endpoints(alpha, n, walks, opts.seed(5, k as u64))?;
        let d = lattice_ks_distance(&ends, n, |y| skew_bm_cdf(alpha, 1.0, 0.0, y).unwrap_or(f64::NAN));
        checks.push(Check::below(format!("KS distance, alpha = {alpha}"), d, critical));
    }
    Ok(CriterionReport::new(
        5,
        "functional CLT at fixed time",
        "skew_walk_endpoints",
        json!({"n_steps": n, "n_walks": walks, "alpha": [0.3, 0.5, 0.8], "critical_level": 0.01}),
        checks,
        vec!["distances are taken at lattice midpoints".into()],
    ))
}

fn sign_law(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = opts.paths(100_000);
    let mut checks = Vec::new();
    let mut combos = Vec::new();
    for (dp, dm) in [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0), (25.0, 1.0)] {
        let star = dp / (dp + dm);
        for lambda in [0.3, star, 0.7] {
            combos.push((dp, dm, lambda));
        }
    }
    for (k, &(dp, dm, lambda)) in combos.iter().enumerate() {
        let m = InterfaceMedium::new(dp, dm, lambda)?;
        let alpha = m.alpha_of_lambda();
        let exact = terminal_positions(&SkewDiffusionStepper::new(m), 0.0, &SimConfig::new(n, 0.01, 1.0, opts.seed(6, 2 * k as u64)))?;
        let euler = terminal_positions(&EulerTransformedStepper::new(m), 0.0, &SimConfig::new(n, 1e-4, 1.0, opts.seed(6, 2 * k as u64 + 1)))?;
        for (name, xs) in [("exact", exact), ("euler", euler)] {
            let hits = xs.iter().filter(|&&x| x > 0.0).count();
            checks.push(Check::covers(format!("{name}, D = ({dp}, {dm}), lambda = {lambda:.4}"), MeanEstimate::proportion(hits, n), alpha));
        }
    }
    Ok(CriterionReport::new(
        6,
        "sign law",
        "simulate_skew_diffusion, euler_transformed",
        json!({"combos": combos, "t": 1.0, "x0": 0.0, "n_paths": n, "dt_exact": 0.01, "dt_euler": 1e-4}),
        checks,
        vec![],
    ))
}

fn exit_statistics(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = opts.paths(100_000);
    let mut checks = Vec::new();
    let m = InterfaceMedium::conservative(3.0, 1.0)?;
    let exact = exit_stats_analytic(&m.profile(), -1.0, 0.0, 1.0)?;
    checks.push(Check::within("analytic P(exit left), D = (3, 1)", exact.p_exit_left, 0.25, 1e-14));
    checks.push(Check::within("analytic E tau, D = (3, 1)", exact.mean_exit_time, 0.5, 1e-14));
    let cases = [(3.0, 1.0, None, -1.0, 0.0, 1.0), (4.0, 1.0, Some(0.3), -0.5, 0.2, 1.5), (1.0, 2.0, Some(0.8), -1.0, -0.3, 0.5)];
    for (k, &(dp, dm, lambda, a, x, b)) in cases.iter().enumerate() {
        let m = match lambda {
            Some(l) => InterfaceMedium::new(dp, dm, l)?,
            None => InterfaceMedium::conservative(dp, dm)?,
        };
        let analytic = exit_stats_analytic(&m.profile(), a, x, b)?;
        let mc = exit_stats_mc(&SkewDiffusionStepper::new(m), a, x, b, &SimConfig::new(n, 1e-3, 40.0, opts.seed(7, k as u64)))?;
        let tag = format!("D = ({dp}, {dm}), lambda = {:.4}, (a, x, b) = ({a}, {x}, {b})", m.lambda());
        let as_est = |mean: f64, hw: f64| MeanEstimate { mean, std_err: hw / crate::stats::SIGMA_LEVEL, n };
        checks.push(Check::covers(format!("P(exit left), {tag}"), as_est(mc.p_exit_left, mc.ci_halfwidths[0]), analytic.p_exit_left));
        checks.push(Check::covers(format!("E tau, {tag}"), as_est(mc.mean_exit_time, mc.ci_halfwidths[2]), analytic.mean_exit_time));
    }
    Ok(CriterionReport::new(
        7,
        "exit statistics",
        "exit_stats_analytic, exit_stats_mc",
        json!({"cases": cases.iter().map(|c| json!({"d_plus": c.0, "d_minus": c.1, "lambda": c.2, "a": c.3, "x": c.4, "b": c.5})).collect::<Vec<_>>(), "n_paths": n, "dt": 1e-3}),
        checks,
        vec![],
    ))
}

fn first_passage_ordering(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = opts.paths(200_000);
    let m = InterfaceMedium::conservative(4.0, 1.0)?;
    let stepper = SkewDiffusionStepper::new(m);
    let y = 1.0;
    let t_grid = linspace(0.1, 4.0, 20);
    let config = SimConfig::new(n, 1e-3, 4.0, opts.seed(8, 0));
    let from_minus = first_passage_survival(&stepper, -y, y, &t_grid, &config)?;
    let from_plus = first_passage_survival(&stepper, y, -y, &t_grid, &SimConfig { seed: opts.seed(8, 1), ..config })?;
    let factor = (m.d_minus() / m.d_plus()).sqrt();
    let checks = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let lhs = from_minus.estimate(i);
            let rhs = from_plus.estimate(i);
            // separated: the whole lhs interval lies below the whole scaled rhs interval
            Check {
                label: format!("P_-y(H_y > {t:.3}) <= {factor} P_y(H_-y > {t:.3})"),
                estimate: lhs.mean,
                reference: factor * rhs.mean,
                ci: Some([lhs.lower(), lhs.upper()]),
                tolerance: None,
                pass: lhs.upper() < factor * rhs.lower(),
            }
        })
        .collect();
    let unscaled = (0..t_grid.len()).filter(|&i| from_minus.estimate(i).upper() < from_plus.estimate(i).lower()).count();
    let last = t_grid.len() - 1;
    let ratio = from_minus.estimate(last).mean / from_plus.estimate(last).mean;
    Ok(CriterionReport::new(
        8,
        "first-passage stochastic ordering",
        "first_passage_survival",
        json!({"d_plus": 4.0, "d_minus": 1.0, "y": y, "t_grid": [0.1, 4.0, 20], "n_paths": n, "dt": 1e-3}),
        checks,
        vec![
            "both survival probabilities tend to 1 as t -> 0, so the scaled inequality cannot hold at small t".into(),
            format!("unscaled ordering P_-y(H_y > t) < P_y(H_-y > t) separated at {unscaled}/{} times", t_grid.len()),
            format!("survival ratio at t = {:.1}: {ratio:.4}; the scale-speed tail asymptotics give {factor} only as t -> infinity", t_grid[last]),
        ],
    ))
}

fn occupation_time(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = opts.paths(100_000);
    let (dp, dm) = (4.0, 1.0);
    let threshold = f64::sqrt(dp) / (f64::sqrt(dp) + f64::sqrt(dm));
    let lambdas = [threshold - 0.1, threshold, threshold + 0.1];
    let media = lambdas.iter().map(|&l| InterfaceMedium::new(dp, dm, l)).collect::<Result<Vec<_>>>()?;
    let t = 1.0;
    let rows = occupation_balance_report(&media, t, &SimConfig::new(n, 1e-3, t, opts.seed(9, 0)))?;
    let mut checks = Vec::new();
    for row in &rows {
        let label = format!("E G+ - E G-, lambda = {:.4} (expected sign {})", row.lambda, row.expected_sign);
        let base = Check::covers(label, row.difference, 0.0);
        checks.push(Check { pass: row.verdict, ..base });
        checks.push(Check::covers(format!("E G+ = alpha t, lambda = {:.4}", row.lambda), row.plus, row.alpha * t));
    }
    Ok(CriterionReport::new(
        9,
        "occupation-time theorem",
        "occupation_balance_report",
        json!({"d_plus": dp, "d_minus": dm, "lambda": lambdas, "t": t, "x0": 0.0, "n_paths": n, "dt": 1e-3}),
        checks,
        vec![],
    ))
}

fn local_time_continuity(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = opts.paths(100_000);
    let (eps, dt, t) = (0.05, 1e-4, 1.0);
    let star = InterfaceMedium::conservative(4.0, 1.0)?;
    let half = InterfaceMedium::new(4.0, 1.0, 0.5)?;
    let config = SimConfig::new(n, dt, t, opts.seed(10, 0));
    let at_star = natural_local_time_mc(&SkewDiffusionStepper::new(star), 0.0, 0.0, eps, &config)?;
    let at_half = natural_local_time_mc(&SkewDiffusionStepper::new(half), 0.0, 0.0, eps, &SimConfig { seed: opts.seed(10, 1), ..config })?;
    let checks = vec![
        Check::covers("l+/l-, lambda*", at_star.ratio, 1.0),
        Check::excludes("l+/l-, lambda = 1/2", at_half.ratio, 1.0),
        Check::covers("semimartingale ratio, lambda*", at_star.semimartingale_ratio, 4.0),
    ];
    let grid = config.grid();
    let mut notes = Vec::new();
    for (name, m) in [("lambda*", star), ("lambda = 1/2", half)] {
        let e = expected_local_time_bins(&m, 0.0, 0.0, eps, &grid)?;
        notes.push(format!(
            "{name}: exact expectation of the estimator on this grid has l+/l- = {:.5}, semimartingale ratio {:.5}; eps -> 0 limit {:.5}",
            e.ratio,
            e.semimartingale_ratio,
            local_time_ratio_limit(&m)
        ));
    }
    Ok(CriterionReport::new(
        10,
        "natural local-time continuity",
        "natural_local_time_mc",
        json!({"d_plus": 4.0, "d_minus": 1.0, "epsilon": eps, "dt": dt, "t": t, "x0": 0.0, "n_paths": n}),
        checks,
        notes,
    ))
}

fn pde_convergence(_: &VerifyOptions) -> Result<CriterionReport> {
    let m = InterfaceMedium::conservative(4.0, 1.0)?;
    let (x0, t, l) = (0.25, 0.5, 12.0);
    let mut errors = Vec::new();
    let mut worst_step = 0.0f64;
    for dx in [0.04, 0.02, 0.01] {
        let grid = Grid::around_origin(-l, l, (2.0 * l / dx).round() as usize)?;
        let p = PdeProblem::new(m.profile(), grid, Boundary::Neumann, Boundary::Neumann)?;
        let sol = solve_interface_pde(&p, &p.grid.delta(x0)?, t, dx * dx, &[])?;
        errors.push(p.grid.l2_error(sol.final_state(), |x| physical_density(&m, t, x0, x).unwrap_or(f64::NAN)));
        worst_step = worst_step.max(sol.max_step_mass_change);
    }
    let mut checks: Vec<Check> = observed_orders(&errors)
        .iter()
        .enumerate()
        .map(|(k, &o)| Check { label: format!("observed order, refinement {}", k + 1), ..Check::above("", o, 1.8) })
        .collect();
    checks.push(Check::below("max relative mass change per step, lambda*", worst_step, 1e-10));
    let heat = preset_heat_conduction(2.0, 1.0, 4.0, 1.0)?;
    let p = PdeProblem::new(heat.profile(), Grid::around_origin(-3.0, 3.0, 300)?, Boundary::Neumann, Boundary::Neumann)?;
    let sol = solve_interface_pde(&p, &p.grid.delta(0.0)?, 0.5, 1e-3, &[])?;
    checks.push(Check::above("total mass drift, heat preset", (sol.mass.last().copied().unwrap_or(f64::NAN) - sol.mass[0]).abs(), 1e-6));
    Ok(CriterionReport::new(
        11,
        "PDE convergence",
        "solve_interface_pde",
        json!({"d_plus": 4.0, "d_minus": 1.0, "x0": x0, "t": t, "domain": [-l, l], "dx": [0.04, 0.02, 0.01], "dt": "dx^2",
               "heat_preset": {"kappa": [2.0, 1.0], "rho": [4.0, 1.0]}, "l2_errors": errors}),
        checks,
        vec![],
    ))
}

fn taylor_aris(opts: &VerifyOptions) -> Result<CriterionReport> {
    let triples = [(2.0, 0.5, 1.0, 1.0), (1.0, 1.0, 3.0, 0.5), (5.0, 2.0, 10.0, 2.0)];
    let mut checks = Vec::new();
    for &(dp, dm, v0, r) in &triples {
        let cs = LayeredCrossSection::single_interface_parabolic(dp, dm, v0, r)?;
        let got = effective_dispersion(&cs)?.d_bar;
        let closed = single_interface_parabolic_closed_form(dp, dm, v0, r);
        checks.push(Check::within(format!("D bar / closed form, (D+, D-, v0, R) = ({dp}, {dm}, {v0}, {r})"), got / closed, 1.0, 1e-10));
    }
    let still = effective_dispersion(&LayeredCrossSection::single_interface_parabolic(2.0, 0.5, 0.0, 1.0)?)?.d_bar;
    checks.push(Check::within("D bar at v0 = 0", still, 1.25, 0.0));
    let mut notes = Vec::new();
    let mut params = json!({"triples": triples, "zero_flow": [2.0, 0.5, 0.0, 1.0], "monte_carlo": opts.slow});
    if opts.slow {
        let (dp, dm, v0, r) = (2.0, 0.5, 10.0, 1.0);
        let cs = LayeredCrossSection::single_interface_parabolic(dp, dm, v0, r)?;
        let closed = single_interface_parabolic_closed_form(dp, dm, v0, r);
        let n = opts.paths(10_000);
        let est = mc_longtime_variance(&cs, 400.0, &SimConfig::new(n, 5e-3, 400.0, opts.seed(12, 0)))?;
        checks.push(Check::within("Monte Carlo D bar / closed form", est.d_bar.mean / closed, 1.0, 0.05));
        params["monte_carlo"] = json!({"case": [dp, dm, v0, r], "t_long": 400.0, "dt": 5e-3, "n_paths": n});
    } else {
        notes.push("Monte Carlo long-time variance skipped (slow)".into());
    }
    Ok(CriterionReport::new(12, "Taylor-Aris dispersion", "effective_dispersion", params, checks, notes))
}

/// Three-edge network used for the Monte Carlo and PDE comparison.
pub const Y_NETWORK: &str = "\
# edge_id parent_id length velocity area diffusivity
out ROOT 1.0 0.5 1.0 1.0
left out 1.0 0.25 1.0 0.5
right out 1.0 0.25 1.0 2.0
";

fn network(opts: &VerifyOptions) -> Result<CriterionReport> {
    let n = opts.paths(100_000);
    let mut checks = Vec::new();

    let star = RiverNetwork::parse("a ROOT 2 0 1 1\nb a 2 0 1 1\nc a 2 0 2 1")?;
    for (id, est, p) in junction_exit_frequencies(&star, "a", 0.1, &SimConfig::new(n, 1e-5, 5.0, opts.seed(13, 0)))? {
        checks.push(Check::covers(format!("junction exit frequency, edge {id}"), est, p));
    }

    let line = RiverNetwork::parse("a ROOT 20 0 1 1")?;
    let (sigma, y, bin) = (2.0, 10.0, 0.25);
    let kernel = dispersal_kernel_mc(&line, &NetworkPosition { edge_id: "a".into(), x: y }, sigma, bin, &SimConfig::new(n, 1e-2, 1.0, opts.seed(13, 1)))?;
    let observed: Vec<f64> = kernel.bins.iter().map(|b| b.count as f64).collect();
    let expected: Vec<f64> = kernel.bins.iter().map(|b| n as f64 * laplace_kernel_mass(sigma, 1.0, y, b.x_lo, b.x_hi)).collect();
    let chi = chi_square(&observed, &expected, false);
    checks.push(Check::above("single-edge kernel chi-square p-value", chi.p_value, 1e-3));

    let yn = RiverNetwork::parse(Y_NETWORK)?;
    let start = NetworkPosition { edge_id: "left".into(), x: 0.5 };
    let (t, bin) = (1.0, 0.05);
    let mc = network_histogram_mc(&yn, &start, t, bin, &SimConfig::new(n, 1e-3, t, opts.seed(13, 2)))?;
    let pde = network_pde_crosscheck(&yn, &start, t, yn.min_length() / 200.0, 1e-4)?;
    let mut observed: Vec<f64> = mc.bins.iter().map(|b| b.count as f64).collect();
    let mut expected: Vec<f64> = pde.bin_masses(&yn, bin).iter().map(|m| m * n as f64).collect();
    observed.push(mc.absorbed_count as f64);
    expected.push(pde.absorbed.last().copied().unwrap_or(f64::NAN) * n as f64);
    let chi_y = chi_square(&observed, &expected, false);
    checks.push(Check::above("Y network Monte Carlo vs PDE chi-square p-value", chi_y.p_value, 1e-3));
    let leak = pde.mass.iter().zip(&pde.absorbed).map(|(m, a)| (m + a - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::below("PDE mass + absorbed - 1", leak, 1e-8));

    Ok(CriterionReport::new(
        13,
        "river networks",
        "junction_exit_frequencies, dispersal_kernel_mc, network_pde_crosscheck",
        json!({"junction": {"weights": [1.0, 1.0, 2.0], "epsilon": 0.1, "dt": 1e-5},
               "kernel": {"length": 20.0, "y": y, "sigma": sigma, "bin": 0.25, "dt": 1e-2, "chi2": chi},
               "y_network": {"edges": Y_NETWORK, "start": ["left", 0.5], "t": t, "bin": bin, "dt_mc": 1e-3, "dt_pde": 1e-4, "chi2": chi_y},
               "n_paths": n}),
        checks,
        vec![],
    ))
}

/// Reruns every other criterion at smoke scale on pools of different sizes
/// and compares the serialized reports byte for byte.
fn reproducibility(opts: &VerifyOptions) -> Result<CriterionReport> {
    let smoke = VerifyOptions { scale: Scale::Smoke, slow: false, ..*opts };
    let threads = [1usize, 3];
    let mut checks = Vec::new();
    for id in 1..=13u8 {
        let mut runs = Vec::new();
        for &k in threads.iter().chain(&[threads[0]]) {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().map_err(|e| invalid("threads", e.to_string()))?;
            runs.push(pool.install(|| run_criterion(id, &smoke))?.to_canonical_json());
        }
        let identical = runs.windows(2).all(|w| w[0] == w[1]);
        checks.push(Check {
            label: format!("criterion {id} identical across reruns and thread counts"),
            estimate: f64::from(u8::from(identical)),
            reference: 1.0,
            ci: None,
            tolerance: None,
            pass: identical,
        });
    }
    Ok(CriterionReport::new(
        14,
        "reproducibility",
        "run_criterion",
        json!({"scale": "smoke", "threads": threads, "reruns": 3}),
        checks,
        vec!["criteria are rerun at smoke scale; the seeds and code paths are those of the full runs".into()],
    ))
}
