//! Taylor–Aris effective dispersion for flow through a layered cross-section.
//!
//! A solute moves along `x1` with the velocity `v(x2)` of its transverse
//! position, while `x2` diffuses across layers `[l_k, l_{k+1}]` with
//! flux-continuous interfaces and reflecting walls at `a` and `b`. Over long
//! times the longitudinal spread is Gaussian with the effective coefficient
//!
//! ```text
//! D_bar = sum_k D1_k (l_{k+1} - l_k) / (b - a)
//!       + (b - a)^2 sum_k (1 / D2_k) int_{layer k} g(y)^2 dy / (b - a)
//! g(y)  = int_a^y (v(s) - v_bar) ds / (b - a)
//! ```
//!
//! in the unit-coefficient convention `u_t = div(D grad u)`, so the
//! longitudinal variance grows like `2 D_bar t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::media::MultiMedium;
use crate::paths::{par_paths, MultiStepper, SimConfig, Step, Stepper};
use crate::stats::MeanEstimate;

/// Longitudinal velocity across the section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityProfile {
    /// Polynomial pieces on `[breaks[k], breaks[k+1]]`, coefficients in
    /// increasing powers of `x2`. Empty `breaks` with a single coefficient
    /// list means one polynomial over the whole section.
    Piecewise {
        #[serde(default)]
        breaks: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
    },
    /// Values at equally spaced points from `a` to `b` (an odd count), read
    /// as quadratics through consecutive triples, so integrals are composite
    /// Simpson sums.
    Sampled { values: Vec<f64> },
}

impl VelocityProfile {
    pub fn constant(v0: f64) -> Self {
        Self::Piecewise { breaks: Vec::new(), coefficients: vec![vec![v0]] }
    }

    /// `v0 (1 - ((x - c) / r)^2)` with `c` the centre and `r` the half-width.
    pub fn parabolic(v0: f64, centre: f64, half_width: f64) -> Self {
        let r2 = half_width * half_width;
        Self::Piecewise {
            breaks: Vec::new(),
            coefficients: vec![vec![v0 * (1.0 - centre * centre / r2), 2.0 * v0 * centre / r2, -v0 / r2]],
        }
    }
}

/// Layered cross-section `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredCrossSection {
    /// `a = l_0 < l_1 < ... < l_M = b`.
    pub layer_bounds: Vec<f64>,
    /// Longitudinal diffusivity per layer.
    pub d1: Vec<f64>,
    /// Transverse diffusivity per layer.
    pub d2: Vec<f64>,
    pub velocity: VelocityProfile,
}

type Poly = Vec<f64>;

fn eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn antiderivative(p: &[f64]) -> Poly {
    let mut q = vec![0.0];
    q.extend(p.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
    q
}

fn mul(p: &[f64], q: &[f64]) -> Poly {
    let mut r = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            r[i + j] += a * b;
        }
    }
    r
}

fn integral(p: &[f64], lo: f64, hi: f64) -> f64 {
    let q = antiderivative(p);
    eval(&q, hi) - eval(&q, lo)
}

/// Quadratic through `(x0, f0), (x0 + h, f1), (x0 + 2h, f2)` in powers of `x`.
fn quadratic_through(x0: f64, h: f64, f: [f64; 3]) -> Poly {
    // in s = x - x1: f1 + (f2 - f0) s / (2h) + (f0 - 2 f1 + f2) s^2 / (2h^2)
    let x1 = x0 + h;
    let b = (f[2] - f[0]) / (2.0 * h);
    let c = (f[0] - 2.0 * f[1] + f[2]) / (2.0 * h * h);
    vec![f[1] - b * x1 + c * x1 * x1, b - 2.0 * c * x1, c]
}

/// An elementary interval inside one layer and one polynomial piece.
#[derive(Debug, Clone)]
struct Cell {
    lo: f64,
    hi: f64,
    layer: usize,
    v: Poly,
}

impl LayeredCrossSection {
    pub fn new(layer_bounds: Vec<f64>, d1: Vec<f64>, d2: Vec<f64>, velocity: VelocityProfile) -> Result<Self> {
        let cs = Self { layer_bounds, d1, d2, velocity };
        cs.validate()?;
        Ok(cs)
    }

    /// Two isotropic layers `[-r, 0]` and `[0, r]` with diffusivities
    /// `d_minus` and `d_plus` and a parabolic profile of peak `v0`.
    pub fn single_interface_parabolic(d_plus: f64, d_minus: f64, v0: f64, r: f64) -> Result<Self> {
        Self::new(vec![-r, 0.0, r], vec![d_minus, d_plus], vec![d_minus, d_plus], VelocityProfile::parabolic(v0, 0.0, r))
    }

    pub fn validate(&self) -> Result<()> {
        let lb = &self.layer_bounds;
        if lb.len() < 2 || lb.iter().any(|x| !x.is_finite()) || lb.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("layer_bounds", "need at least two finite, strictly increasing bounds"));
        }
        let m = lb.len() - 1;
        if self.d1.len() != m || self.d2.len() != m {
            return Err(invalid("d1", format!("need one longitudinal and one transverse diffusivity per layer ({m})")));
        }
        for &d in self.d1.iter().chain(&self.d2) {
            crate::error::ensure_positive("diffusivity", d)?;
        }
        match &self.velocity {
            VelocityProfile::Piecewise { breaks, coefficients } if breaks.is_empty() => {
                if coefficients.len() != 1 || coefficients[0].iter().any(|c| !c.is_finite()) {
                    return Err(invalid("velocity", "without breaks, give exactly one finite coefficient list"));
                }
            }
            VelocityProfile::Piecewise { breaks, coefficients } => {
                if breaks.len() != coefficients.len() + 1 || breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("velocity", "need increasing breaks and one coefficient list per piece"));
                }
                if breaks[0] > self.a() || *breaks.last().expect("nonempty") < self.b() {
                    return Err(invalid("velocity", "pieces must cover [a, b]"));
                }
                if coefficients.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(invalid("velocity", "coefficients must be finite"));
                }
            }
            VelocityProfile::Sampled { values } => {
                if values.len() < 3 || values.len() % 2 == 0 {
                    return Err(invalid("velocity", "need an odd number (>= 3) of samples"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("velocity", "samples must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.layer_bounds[0]
    }

    pub fn b(&self) -> f64 {
        *self.layer_bounds.last().expect("validated")
    }

    pub fn width(&self) -> f64 {
        self.b() - self.a()
    }

    pub fn layer_of(&self, y: f64) -> usize {
        let interior = &self.layer_bounds[1..self.layer_bounds.len() - 1];
        interior.partition_point(|&l| l < y)
    }

    /// Polynomial pieces as `(lo, hi, coefficients)` covering `[a, b]`.
    fn pieces(&self) -> Vec<(f64, f64, Poly)> {
        match &self.velocity {
            VelocityProfile::Piecewise { breaks, coefficients } if breaks.is_empty() => {
                vec![(self.a(), self.b(), coefficients[0].clone())]
            }
            VelocityProfile::Piecewise { breaks, coefficients } => breaks
                .windows(2)
                .zip(coefficients)
                .filter(|(w, _)| w[1] > self.a() && w[0] < self.b())
                .map(|(w, c)| (w[0].max(self.a()), w[1].min(self.b()), c.clone()))
                .collect(),
            VelocityProfile::Sampled { values } => {
                let h = self.width() / (values.len() - 1) as f64;
                (0..(values.len() - 1) / 2)
                    .map(|j| {
                        let x0 = self.a() + 2.0 * j as f64 * h;
                        let hi = if 2 * j + 2 == values.len() - 1 { self.b() } else { x0 + 2.0 * h };
                        (x0, hi, quadratic_through(x0, h, [values[2 * j], values[2 * j + 1], values[2 * j + 2]]))
                    })
                    .collect()
            }
        }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (lo, hi, v) in self.pieces() {
            let mut cuts = vec![lo];
            cuts.extend(self.layer_bounds.iter().copied().filter(|&l| l > lo && l < hi));
            cuts.push(hi);
            for w in cuts.windows(2) {
                cells.push(Cell { lo: w[0], hi: w[1], layer: self.layer_of(0.5 * (w[0] + w[1])), v: v.clone() });
            }
        }
        cells
    }

    /// Velocity at a transverse position.
    pub fn velocity_at(&self, y: f64) -> f64 {
        let y = y.clamp(self.a(), self.b());
        let pieces = self.pieces();
        let k = pieces.partition_point(|(_, hi, _)| *hi < y).min(pieces.len() - 1);
        eval(&pieces[k].2, y)
    }
}

/// Average of `v` over `[a, b]` with the uniform measure.
pub fn mean_velocity(cs: &LayeredCrossSection) -> Result<f64> {
    cs.validate()?;
    Ok(cs.cells().iter().map(|c| integral(&c.v, c.lo, c.hi)).sum::<f64>() / cs.width())
}

/// Per-cell cumulative flux potential `G(y) = int_a^y (v - v_bar) ds` as a
/// polynomial on each cell.
fn flux_potentials(cs: &LayeredCrossSection, v_bar: f64) -> Vec<(Cell, Poly)> {
    let mut acc = 0.0;
    cs.cells()
        .into_iter()
        .map(|cell| {
            let mut centred = cell.v.clone();
            centred[0] -= v_bar;
            let mut g = antiderivative(&centred);
            g[0] += acc - eval(&g, cell.lo);
            acc = eval(&g, cell.hi);
            (cell, g)
        })
        .collect()
}

/// `g(y) = int_a^y (v - v_bar) ds / (b - a)`.
pub fn g_function(cs: &LayeredCrossSection, y: f64) -> Result<f64> {
    if !(cs.a() <= y && y <= cs.b()) {
        return Err(invalid("y", format!("{y} outside [{}, {}]", cs.a(), cs.b())));
    }
    let v_bar = mean_velocity(cs)?;
    let pots = flux_potentials(cs, v_bar);
    let k = pots.partition_point(|(c, _)| c.hi < y).min(pots.len() - 1);
    Ok(eval(&pots[k].1, y) / cs.width())
}

/// Contribution of one layer to the effective coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTerm {
    pub lo: f64,
    pub hi: f64,
    /// `D1 (hi - lo) / (b - a)`.
    pub longitudinal: f64,
    /// `(b - a)^2 / D2 int g^2 dy / (b - a)`.
    pub shear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub d_bar: f64,
    pub v_bar: f64,
    pub terms_per_layer: Vec<LayerTerm>,
    /// `g(b)`, zero up to rounding.
    pub g_at_b: f64,
    /// Richardson estimate `|D(h) - D(2h)| / 15` for sampled profiles, zero otherwise.
    pub error_estimate: f64,
}

/// Effective longitudinal dispersion coefficient of the section.
pub fn effective_dispersion(cs: &LayeredCrossSection) -> Result<DispersionReport> {
    let v_bar = mean_velocity(cs)?;
    let w = cs.width();
    let mut terms: Vec<LayerTerm> = cs
        .layer_bounds
        .windows(2)
        .zip(&cs.d1)
        .map(|(l, d1)| LayerTerm { lo: l[0], hi: l[1], longitudinal: d1 * (l[1] - l[0]) / w, shear: 0.0 })
        .collect();
    let pots = flux_potentials(cs, v_bar);
    for (cell, g) in &pots {
        // (b-a)^2 * (1/D2) * int (G/(b-a))^2 dy/(b-a) = int G^2 dy / ((b-a) D2)
        terms[cell.layer].shear += integral(&mul(g, g), cell.lo, cell.hi) / (w * cs.d2[cell.layer]);
    }
    let g_at_b = pots.last().map_or(0.0, |(c, g)| eval(g, c.hi)) / w;
    let d_bar: f64 = terms.iter().map(|t| t.longitudinal + t.shear).sum();
    let error_estimate = match &cs.velocity {
        VelocityProfile::Sampled { values } if values.len() >= 5 && (values.len() - 1) % 4 == 0 => {
            let coarse = LayeredCrossSection {
                velocity: VelocityProfile::Sampled { values: values.iter().step_by(2).copied().collect() },
                ..cs.clone()
            };
            (d_bar - effective_dispersion(&coarse)?.d_bar).abs() / 15.0
        }
        _ => 0.0,
    };
    Ok(DispersionReport { d_bar, v_bar, terms_per_layer: terms, g_at_b, error_estimate })
}

/// Closed form for two isotropic layers `[-r, 0]`, `[0, r]` and a parabolic
/// profile: `(D+ + D-)/2 + 4 v0^2 r^2 / (945 D_h)` with `D_h` the harmonic
/// combination `1 / (1/D+ + 1/D-)`.
pub fn single_interface_parabolic_closed_form(d_plus: f64, d_minus: f64, v0: f64, r: f64) -> f64 {
    let d_a = 0.5 * (d_plus + d_minus);
    let d_h = 1.0 / (1.0 / d_plus + 1.0 / d_minus);
    d_a + 4.0 * v0 * v0 * r * r / (945.0 * d_h)
}

/// Monte Carlo estimate of the effective coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionEstimate {
    /// `Var(X1(t) - v_bar t) / (2 t)` with a delta-method standard error.
    pub d_bar: MeanEstimate,
    pub t_long: f64,
    pub dt: f64,
}

/// Long-time variance of the longitudinal coordinate. The transverse
/// coordinate is a flux-continuous multi-layer diffusion with generator
/// `d/dy (D2 d/dy)`, started from its uniform stationary law and reflected
/// at the walls; longitudinal increments are `v(y) dt + sqrt(2 D1(y) dt) Z`.
pub fn mc_longtime_variance(cs: &LayeredCrossSection, t_long: f64, config: &SimConfig) -> Result<DispersionEstimate> {
    cs.validate()?;
    crate::error::ensure_positive("t_long", t_long)?;
    let cfg = SimConfig { horizon: t_long, ..*config };
    cfg.validate()?;
    let interior = cs.layer_bounds[1..cs.layer_bounds.len() - 1].to_vec();
    // the sampler uses the (1/2) convention, so the transverse diffusivity doubles
    let transverse = MultiMedium::new(interior.clone(), cs.d2.iter().map(|d| 2.0 * d).collect())?;
    let stepper = MultiStepper::new(transverse);
    stepper.check_step(cfg.dt)?;
    let reach = 6.0 * (2.0 * cs.d2.iter().copied().fold(0.0, f64::max) * cfg.dt).sqrt();
    let wall_gap = interior.first().map_or(cs.width(), |&l| (l - cs.a()).min(cs.b() - interior[interior.len() - 1]));
    if reach >= wall_gap {
        return Err(invalid("dt", format!("steps reach {reach} but the outer layers are only {wall_gap} wide")));
    }
    let v_bar = mean_velocity(cs)?;
    let cells = cs.cells();
    let velocity = |y: f64| {
        let k = cells.partition_point(|c| c.hi < y).min(cells.len() - 1);
        eval(&cells[k].v, y)
    };
    let (a, b) = (cs.a(), cs.b());
    let grid = cfg.grid();
    let displacements = par_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let mut y = a + (b - a) * rng.random::<f64>();
        let mut x = 0.0;
        for i in 0..grid.n_steps {
            let step: Step = grid.step(i);
            let k = cs.layer_of(y);
            let z: f64 = rng.sample(StandardNormal);
            x += velocity(y) * step.dt + (2.0 * cs.d1[k]).sqrt() * step.sqrt_dt * z;
            y = stepper.step(y, step, rng);
            if y < a {
                y = 2.0 * a - y;
            } else if y > b {
                y = 2.0 * b - y;
            }
        }
        x - v_bar * t_long
    });
    Ok(DispersionEstimate { d_bar: variance_estimate(&displacements, 2.0 * t_long), t_long, dt: cfg.dt })
}

/// Sample variance divided by `scale`, with standard error from the fourth
/// central moment.
fn variance_estimate(samples: &[f64], scale: f64) -> MeanEstimate {
    let n = samples.len() as f64;
    let mean = crate::stats::compensated_sum(samples.iter().copied()) / n;
    let m2 = crate::stats::compensated_sum(samples.iter().map(|x| (x - mean).powi(2))) / n;
    let m4 = crate::stats::compensated_sum(samples.iter().map(|x| (x - mean).powi(4))) / n;
    let var = m2 * n / (n - 1.0);
    MeanEstimate { mean: var / scale, std_err: ((m4 - m2 * m2).max(0.0) / n).sqrt() / scale, n: samples.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn parabolic(v0: f64, r: f64) -> LayeredCrossSection {
        LayeredCrossSection::new(vec![-r, r], vec![1.0], vec![1.0], VelocityProfile::parabolic(v0, 0.0, r)).unwrap()
    }

    #[test]
    fn mean_velocity_examples() {
        let c = LayeredCrossSection::new(vec![0.0, 1.0, 3.0], vec![1.0; 2], vec![1.0; 2], VelocityProfile::constant(2.5)).unwrap();
        assert_relative_eq!(mean_velocity(&c).unwrap(), 2.5, max_relative = 1e-15);
        assert_relative_eq!(mean_velocity(&parabolic(3.0, 2.0)).unwrap(), 2.0, max_relative = 1e-15);
        let z = LayeredCrossSection { velocity: VelocityProfile::constant(0.0), ..c };
        assert_eq!(mean_velocity(&z).unwrap(), 0.0);
    }

    #[test]
    fn g_vanishes_at_walls_and_matches_symbolic_integral() {
        let (v0, r) = (1.7, 1.3);
        let cs = parabolic(v0, r);
        assert!(g_function(&cs, -r).unwrap().abs() < 1e-15);
        assert!(g_function(&cs, r).unwrap().abs() < 1e-14);
        // int_{-R}^0 v0 (1 - s^2/R^2 - 2/3) ds / (2R) = v0 (R/3 - R/3) / (2R) = 0, and
        // at y = -R/2: v0 [ (y+R)/3 - (y^3 + R^3)/(3R^2) ] / (2R)
        let y = -0.5 * r;
        let exact = v0 * ((y + r) / 3.0 - (y * y * y + r * r * r) / (3.0 * r * r)) / (2.0 * r);
        assert_relative_eq!(g_function(&cs, y).unwrap(), exact, max_relative = 1e-13);
        assert!(g_function(&cs, 0.0).unwrap().abs() < 1e-15);
        assert!(g_function(&cs, 2.0 * r).is_err());
    }

    #[test]
    fn zero_flow_gives_arithmetic_mean() {
        let cs = LayeredCrossSection::new(vec![0.0, 1.0, 4.0], vec![2.0, 5.0], vec![0.3, 1.0], VelocityProfile::constant(0.0)).unwrap();
        assert_relative_eq!(effective_dispersion(&cs).unwrap().d_bar, (2.0 + 15.0) / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn single_interface_closed_form() {
        for &(dp, dm, v0, r) in &[(2.0, 0.5, 1.0, 1.0), (1.0, 1.0, 2.0, 0.5), (0.2, 3.0, 0.7, 2.0)] {
            let cs = LayeredCrossSection::single_interface_parabolic(dp, dm, v0, r).unwrap();
            let rep = effective_dispersion(&cs).unwrap();
            assert_relative_eq!(rep.d_bar, single_interface_parabolic_closed_form(dp, dm, v0, r), max_relative = 1e-12);
            assert!(rep.g_at_b.abs() < 1e-14);
        }
    }

    /// The generalized formula evaluated with adaptive quadrature, with g
    /// itself computed by an inner quadrature.
    #[test]
    fn quadrature_evaluation_agrees_with_closed_form() {
        let (dp, dm, v0, r) = (2.0, 0.5, 1.0, 1.0);
        let v = |s: f64| v0 * (1.0 - s * s / (r * r));
        let width = 2.0 * r;
        let v_bar = integrate(v, -r, r, 1e-14).unwrap().value / width;
        let g = |y: f64| integrate(|s| v(s) - v_bar, -r, y, 1e-15).unwrap().value / width;
        let shear = |lo: f64, hi: f64, d2: f64| integrate(|y| g(y).powi(2), lo, hi, 1e-15).unwrap().value / width / d2;
        let d = 0.5 * (dp + dm) + width * width * (shear(-r, 0.0, dm) + shear(0.0, r, dp));
        assert_relative_eq!(d, single_interface_parabolic_closed_form(dp, dm, v0, r), max_relative = 1e-10);
    }

    #[test]
    fn sampled_profile_is_simpson_exact_for_quadratics() {
        let r = 1.0;
        let n = 41;
        let values: Vec<f64> = (0..n).map(|i| {
            let x = -r + 2.0 * r * i as f64 / (n - 1) as f64;
            1.0 - x * x
        }).collect();
        let sampled = LayeredCrossSection::new(vec![-r, 0.0, r], vec![0.5, 2.0], vec![0.5, 2.0], VelocityProfile::Sampled { values }).unwrap();
        let rep = effective_dispersion(&sampled).unwrap();
        assert_relative_eq!(rep.d_bar, single_interface_parabolic_closed_form(2.0, 0.5, 1.0, r), max_relative = 1e-12);
        assert!(rep.error_estimate < 1e-12);
    }

    #[test]
    fn sampled_cubic_error_estimate_is_honest() {
        let n = 33;
        let f = |x: f64| (3.0 * x).sin() + 0.5 * x;
        let values: Vec<f64> = (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect();
        let cs = LayeredCrossSection::new(vec![0.0, 0.4, 1.0], vec![1.0, 1.0], vec![0.7, 2.0], VelocityProfile::Sampled { values }).unwrap();
        let fine_values: Vec<f64> = (0..1025).map(|i| f(i as f64 / 1024.0)).collect();
        let fine = LayeredCrossSection { velocity: VelocityProfile::Sampled { values: fine_values }, ..cs.clone() };
        let rep = effective_dispersion(&cs).unwrap();
        let reference = effective_dispersion(&fine).unwrap().d_bar;
        assert!(rep.error_estimate > 0.0);
        assert!((rep.d_bar - reference).abs() < 10.0 * rep.error_estimate, "{rep:?} {reference}");
    }

    #[test]
    fn section_round_trips_through_json() {
        let cs = LayeredCrossSection::single_interface_parabolic(2.0, 0.5, 1.0, 1.0).unwrap();
        let text = serde_json::to_string(&cs).unwrap();
        assert_eq!(serde_json::from_str::<LayeredCrossSection>(&text).unwrap(), cs);
    }

    #[test]
    fn rejects_bad_sections() {
        assert!(LayeredCrossSection::new(vec![1.0, 0.0], vec![1.0], vec![1.0], VelocityProfile::constant(1.0)).is_err());
        assert!(LayeredCrossSection::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0], VelocityProfile::constant(1.0)).is_err());
        assert!(LayeredCrossSection::new(vec![0.0, 1.0], vec![0.0], vec![1.0], VelocityProfile::constant(1.0)).is_err());
        assert!(LayeredCrossSection::new(vec![0.0, 1.0], vec![1.0], vec![1.0], VelocityProfile::Sampled { values: vec![1.0; 4] }).is_err());
    }

    #[test]
    fn mc_without_flow_recovers_diffusivity() {
        let cs = LayeredCrossSection::new(vec![0.0, 1.0], vec![0.8], vec![1.0], VelocityProfile::constant(0.0)).unwrap();
        let est = mc_longtime_variance(&cs, 2.0, &SimConfig::new(20_000, 0.01, 2.0, 3)).unwrap();
        assert!(est.d_bar.contains(0.8), "{est:?}");
    }

    fn piecewise_section() -> impl Strategy<Value = (LayeredCrossSection, LayeredCrossSection)> {
        (
            proptest::collection::vec(0.1f64..2.0, 3),
            proptest::collection::vec(0.1f64..3.0, 3),
            proptest::collection::vec(0.1f64..3.0, 3),
            proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 2),
        )
            .prop_map(|(widths, d1, d2, coeffs)| {
                let mut bounds = vec![0.0];
                for w in &widths {
                    bounds.push(bounds.last().unwrap() + w);
                }
                let (a, b) = (bounds[0], bounds[3]);
                let mid = 0.5 * (a + b) + 0.1;
                let cs = LayeredCrossSection::new(
                    bounds.clone(),
                    d1.clone(),
                    d2.clone(),
                    VelocityProfile::Piecewise { breaks: vec![a, mid, b], coefficients: coeffs.clone() },
                )
                .unwrap();
                // reflect x -> a + b - x: p(x) becomes p(a + b - x)
                let reflect = |c: &Vec<f64>| {
                    let s = a + b;
                    vec![c[0] + c[1] * s + c[2] * s * s, -c[1] - 2.0 * c[2] * s, c[2]]
                };
                let rbounds: Vec<f64> = bounds.iter().rev().map(|x| a + b - x).collect();
                let rev = |v: &Vec<f64>| v.iter().rev().copied().collect::<Vec<f64>>();
                let mirrored = LayeredCrossSection::new(
                    rbounds,
                    rev(&d1),
                    rev(&d2),
                    VelocityProfile::Piecewise {
                        breaks: vec![a, a + b - mid, b],
                        coefficients: vec![reflect(&coeffs[1]), reflect(&coeffs[0])],
                    },
                )
                .unwrap();
                (cs, mirrored)
            })
    }

    proptest! {
        #[test]
        fn dispersion_invariants((cs, mirrored) in piecewise_section()) {
            let rep = effective_dispersion(&cs).unwrap();
            let arithmetic: f64 = rep.terms_per_layer.iter().map(|t| t.longitudinal).sum();
            prop_assert!(rep.d_bar >= arithmetic);
            prop_assert!(rep.g_at_b.abs() < 1e-12);
            let m = effective_dispersion(&mirrored).unwrap();
            prop_assert!((m.d_bar - rep.d_bar).abs() <= 1e-10 * rep.d_bar);
        }
    }
}
