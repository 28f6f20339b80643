//! Gaussian special functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(z)` without cancellation.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// `z` with `norm_sf(z) = q`, for `q` in (0, 1).
pub fn norm_isf(q: f64) -> f64 {
    let mut z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    // the starting value is only good to about 1e-11; polish with Newton
    for _ in 0..2 {
        let density = norm_pdf(z);
        if density <= 0.0 || !z.is_finite() {
            break;
        }
        z += (norm_sf(z) - q) / density;
    }
    z
}

/// Density of `N(mean, var)` at `x`.
pub fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    let s = var.sqrt();
    norm_pdf((x - mean) / s) / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert_relative_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, max_relative = 1e-14);
        assert_relative_eq!(norm_cdf(-3.0), 1.349_898_031_630_094_6e-3, max_relative = 1e-13);
        assert_relative_eq!(norm_sf(10.0), 7.619_853_024_160_527e-24, max_relative = 1e-12);
    }

    #[test]
    fn isf_inverts_sf() {
        for &q in &[1e-300, 1e-200, 1e-30, 1e-8, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-12] {
            let z = norm_isf(q);
            assert_relative_eq!(norm_sf(z), q, max_relative = 1e-13);
        }
    }
}
