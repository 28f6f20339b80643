//! Interface media and the closed-form parameter maps between them.
//!
//! A medium is described on the line by piecewise-constant diffusivities
//! separated by point interfaces. The single-interface medium carries the
//! interface parameter `lambda` of the condition
//! `lambda * u_x(0+) = (1 - lambda) * u_x(0-)`; the transmission parameter
//! `alpha` of the underlying skew Brownian motion and the local-time
//! coefficient `gamma` are derived from it.
//!
//! Throughout the crate a point sitting exactly on an interface belongs to
//! the segment on its left (the minus side of `x = 0`).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Result};

/// Smallest diffusivity accepted anywhere in the crate.
pub const MIN_DIFFUSIVITY: f64 = 1e-12;

fn check_diffusivity(name: &'static str, d: f64) -> Result<f64> {
    ensure_positive(name, d)?;
    if d < MIN_DIFFUSIVITY {
        return Err(invalid(name, format!("below the lower bound {MIN_DIFFUSIVITY:e}")));
    }
    Ok(d)
}

/// Two half-lines with diffusivities `d_plus` (x > 0) and `d_minus` (x <= 0)
/// joined at an interface at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceMedium {
    d_plus: f64,
    d_minus: f64,
    lambda: f64,
}

impl InterfaceMedium {
    pub fn new(d_plus: f64, d_minus: f64, lambda: f64) -> Result<Self> {
        check_diffusivity("d_plus", d_plus)?;
        check_diffusivity("d_minus", d_minus)?;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid("lambda", format!("must lie in (0, 1), got {lambda}")));
        }
        Ok(Self { d_plus, d_minus, lambda })
    }

    /// Medium with the flux-continuous interface `D+ u_x(0+) = D- u_x(0-)`.
    pub fn conservative(d_plus: f64, d_minus: f64) -> Result<Self> {
        check_diffusivity("d_plus", d_plus)?;
        check_diffusivity("d_minus", d_minus)?;
        Self::new(d_plus, d_minus, d_plus / (d_plus + d_minus))
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.d_plus, self.d_minus, lambda)
    }

    pub fn d_plus(&self) -> f64 {
        self.d_plus
    }

    pub fn d_minus(&self) -> f64 {
        self.d_minus
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Diffusivity at `x`; the origin belongs to the minus side.
    pub fn diffusivity_at(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.d_plus
        } else {
            self.d_minus
        }
    }

    /// `lambda sqrt(D-) / (lambda sqrt(D-) + (1 - lambda) sqrt(D+))`.
    pub fn alpha_of_lambda(&self) -> f64 {
        let a = self.lambda * self.d_minus.sqrt();
        a / (a + (1.0 - self.lambda) * self.d_plus.sqrt())
    }

    /// The flux-continuous interface parameter `D+ / (D+ + D-)`.
    pub fn conservative_lambda(&self) -> f64 {
        self.d_plus / (self.d_plus + self.d_minus)
    }

    /// Transmission parameter of the physical skew diffusion,
    /// `sqrt(D+) / (sqrt(D+) + sqrt(D-))`.
    pub fn alpha_star(&self) -> f64 {
        let sp = self.d_plus.sqrt();
        sp / (sp + self.d_minus.sqrt())
    }

    pub fn is_conservative(&self) -> bool {
        (self.lambda - self.conservative_lambda()).abs() <= 1e-14
    }

    /// Transmission parameter of the solution of
    /// `dX = sqrt(D(X)) dB + (gamma / 2) dL(X, 0)`.
    pub fn alpha_of_gamma(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        let sm = self.d_minus.sqrt();
        Ok(sm / (sm + self.d_plus.sqrt() * (1.0 - gamma)))
    }

    /// Local-time coefficient matching this medium's `lambda`, i.e. `2 - 1/lambda`.
    pub fn gamma(&self) -> f64 {
        2.0 - 1.0 / self.lambda
    }

    /// Rescaling `s(b) = sqrt(D+) b` for `b > 0`, `sqrt(D-) b` otherwise.
    pub fn scale_map(&self, b: f64) -> f64 {
        if b > 0.0 {
            self.d_plus.sqrt() * b
        } else {
            self.d_minus.sqrt() * b
        }
    }

    pub fn scale_map_inverse(&self, x: f64) -> f64 {
        if x > 0.0 {
            x / self.d_plus.sqrt()
        } else {
            x / self.d_minus.sqrt()
        }
    }

    /// Piecewise-constant scale and speed densities.
    ///
    /// The scale density is proportional to `1 - lambda` on the plus side and
    /// to `lambda` on the minus side; the speed density follows from
    /// `d/dm d/ds = (1/2) D d^2/dx^2`, i.e. `m' = 2 / (D s')`. The free
    /// multiplicative constant is fixed so that the conservative medium gets
    /// `s' = 1/D` and `m' = 2`.
    pub fn speed_scale(&self) -> ScaleSpeed {
        let p = self.profile();
        ScaleSpeed {
            s_plus: p.scale_density(1),
            s_minus: p.scale_density(0),
            m_plus: p.speed_density(1),
            m_minus: p.speed_density(0),
        }
    }

    pub fn profile(&self) -> LineProfile {
        let total = self.d_plus + self.d_minus;
        LineProfile {
            interfaces: vec![0.0],
            diffusivity: vec![self.d_minus, self.d_plus],
            conductivity: vec![(1.0 - self.lambda) * total, self.lambda * total],
        }
    }
}

/// `lambda = 1 / (2 - gamma)`.
pub fn lambda_of_gamma(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(1.0 / (2.0 - gamma))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma < 1.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("must be finite and < 1, got {gamma}")))
    }
}

/// Scale and speed density values on either side of a single interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpeed {
    pub s_plus: f64,
    pub s_minus: f64,
    pub m_plus: f64,
    pub m_minus: f64,
}

/// Several interfaces with flux-continuous matching at each of them.
///
/// `diffusivities[k]` is the value on the `k`-th segment counted from the
/// left, so there is one more diffusivity than interfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiMedium {
    interfaces: Vec<f64>,
    diffusivities: Vec<f64>,
    /// Interface positions in the Brownian (unit-diffusivity) coordinate.
    #[serde(skip)]
    b_interfaces: Vec<f64>,
}

impl MultiMedium {
    pub fn new(interfaces: Vec<f64>, diffusivities: Vec<f64>) -> Result<Self> {
        if diffusivities.len() != interfaces.len() + 1 {
            return Err(invalid(
                "diffusivities",
                format!("expected {} values, got {}", interfaces.len() + 1, diffusivities.len()),
            ));
        }
        for &d in &diffusivities {
            check_diffusivity("diffusivities", d)?;
        }
        if interfaces.iter().any(|x| !x.is_finite()) {
            return Err(invalid("interfaces", "positions must be finite"));
        }
        if interfaces.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("interfaces", "positions must be strictly increasing"));
        }
        let mut medium = Self { interfaces, diffusivities, b_interfaces: Vec::new() };
        medium.b_interfaces = medium.interfaces.iter().map(|&x| medium.to_brownian(x)).collect();
        Ok(medium)
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn diffusivities(&self) -> &[f64] {
        &self.diffusivities
    }

    pub fn brownian_interfaces(&self) -> &[f64] {
        &self.b_interfaces
    }

    /// Segment index of `x`; a point on an interface belongs to the left segment.
    pub fn segment_of(&self, x: f64) -> usize {
        self.interfaces.partition_point(|&xi| xi < x)
    }

    pub fn diffusivity_at(&self, x: f64) -> f64 {
        self.diffusivities[self.segment_of(x)]
    }

    /// `sqrt(D_k) / (sqrt(D_k) + sqrt(D_{k-1}))` at each interface.
    pub fn alphas(&self) -> Vec<f64> {
        self.diffusivities
            .windows(2)
            .map(|w| {
                let (left, right) = (w[0].sqrt(), w[1].sqrt());
                right / (right + left)
            })
            .collect()
    }

    /// Smallest distance between neighbouring interfaces (infinite for fewer than two).
    pub fn min_gap(&self) -> f64 {
        self.interfaces.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_diffusivity(&self) -> f64 {
        self.diffusivities.iter().copied().fold(0.0, f64::max)
    }

    /// `x -> int_0^x D(u)^{-1/2} du`, the inverse of [`scale_map`](Self::scale_map).
    fn to_brownian(&self, x: f64) -> f64 {
        let k0 = self.segment_of(0.0);
        let k = self.segment_of(x);
        let d = &self.diffusivities;
        if k == k0 {
            return x / d[k].sqrt();
        }
        if k > k0 {
            // 0 < x_{k0} <= ... < x_{k-1} < x
            let mut b = self.interfaces[k0] / d[k0].sqrt();
            for j in k0 + 1..k {
                b += (self.interfaces[j] - self.interfaces[j - 1]) / d[j].sqrt();
            }
            b + (x - self.interfaces[k - 1]) / d[k].sqrt()
        } else {
            let mut b = self.interfaces[k0 - 1] / d[k0].sqrt();
            for j in (k + 1..k0).rev() {
                b -= (self.interfaces[j] - self.interfaces[j - 1]) / d[j].sqrt();
            }
            b - (self.interfaces[k] - x) / d[k].sqrt()
        }
    }

    /// Continuous piecewise-linear map from the Brownian coordinate to
    /// physical position, `s(0) = 0`, slope `sqrt(D_k)` on segment `k`.
    pub fn scale_map(&self, b: f64) -> f64 {
        let k = self.b_interfaces.partition_point(|&bi| bi < b);
        let root = self.diffusivities[k].sqrt();
        if k < self.interfaces.len() {
            self.interfaces[k] - root * (self.b_interfaces[k] - b)
        } else if k > 0 {
            self.interfaces[k - 1] + root * (b - self.b_interfaces[k - 1])
        } else {
            root * b
        }
    }

    pub fn scale_map_inverse(&self, x: f64) -> f64 {
        self.to_brownian(x)
    }

    pub fn profile(&self) -> LineProfile {
        LineProfile {
            interfaces: self.interfaces.clone(),
            diffusivity: self.diffusivities.clone(),
            conductivity: self.diffusivities.clone(),
        }
    }
}

/// Piecewise-constant coefficients on the line in divergence form:
/// `rho u_t = (1/2) (kappa u_x)_x` with `rho = kappa / D` on each segment.
///
/// The conductivity `kappa` encodes the interface conditions: at interface
/// `k` the derivative jump is `kappa_k u_x(x_k+) = kappa_{k-1} u_x(x_k-)`.
/// Scale and speed densities follow as `s' = 1/kappa`, `m' = 2 kappa / D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    interfaces: Vec<f64>,
    diffusivity: Vec<f64>,
    conductivity: Vec<f64>,
}

impl LineProfile {
    /// Profile with interface parameters `lambdas[k]` at each interface;
    /// `lambdas[k] = D_k / (D_k + D_{k-1})` recovers the conservative case.
    pub fn with_lambdas(interfaces: Vec<f64>, diffusivity: Vec<f64>, lambdas: &[f64]) -> Result<Self> {
        let medium = MultiMedium::new(interfaces, diffusivity)?;
        if lambdas.len() != medium.interfaces.len() {
            return Err(invalid("lambdas", "need one value per interface"));
        }
        let mut conductivity = Vec::with_capacity(medium.diffusivities.len());
        conductivity.push(medium.diffusivities[0]);
        for &l in lambdas {
            if !(l > 0.0 && l < 1.0) {
                return Err(invalid("lambdas", format!("must lie in (0, 1), got {l}")));
            }
            let prev = *conductivity.last().unwrap();
            conductivity.push(prev * l / (1.0 - l));
        }
        Ok(Self { interfaces: medium.interfaces, diffusivity: medium.diffusivities, conductivity })
    }

    pub fn homogeneous(d: f64) -> Result<Self> {
        check_diffusivity("d", d)?;
        Ok(Self { interfaces: Vec::new(), diffusivity: vec![d], conductivity: vec![d] })
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn n_segments(&self) -> usize {
        self.diffusivity.len()
    }

    pub fn segment_of(&self, x: f64) -> usize {
        self.interfaces.partition_point(|&xi| xi < x)
    }

    pub fn diffusivity(&self, k: usize) -> f64 {
        self.diffusivity[k]
    }

    pub fn conductivity(&self, k: usize) -> f64 {
        self.conductivity[k]
    }

    /// Capacity `rho = kappa / D`.
    pub fn capacity(&self, k: usize) -> f64 {
        self.conductivity[k] / self.diffusivity[k]
    }

    pub fn scale_density(&self, k: usize) -> f64 {
        1.0 / self.conductivity[k]
    }

    pub fn speed_density(&self, k: usize) -> f64 {
        2.0 * self.conductivity[k] / self.diffusivity[k]
    }

    pub fn max_diffusivity(&self) -> f64 {
        self.diffusivity.iter().copied().fold(0.0, f64::max)
    }

    /// Whether every interface is flux-continuous (`kappa` proportional to `D`).
    pub fn is_conservative(&self) -> bool {
        let r0 = self.conductivity[0] / self.diffusivity[0];
        self.conductivity
            .iter()
            .zip(&self.diffusivity)
            .all(|(k, d)| ((k / d) / r0 - 1.0).abs() <= 1e-12)
    }

    /// Breakpoints of `[lo, hi]`: the endpoints plus every interior interface.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo];
        pts.extend(self.interfaces.iter().copied().filter(|&x| x > lo && x < hi));
        pts.push(hi);
        pts
    }

    /// Scale measure `s((lo, hi))`.
    pub fn scale_measure(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        self.breakpoints(lo, hi)
            .windows(2)
            .map(|w| (w[1] - w[0]) * self.scale_density(self.segment_of(0.5 * (w[0] + w[1]))))
            .sum()
    }
}
