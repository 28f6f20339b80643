//! Closed-form transition densities.
//!
//! The skew Brownian density `p^alpha` and the physical skew diffusion
//! density `p*` are evaluated branch by branch. Points on the interface are
//! attributed to the minus side; for `p*` the cross-interface branch
//! `x <= 0, y >= 0` is tested before the remaining one, so it owns `x = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::media::InterfaceMedium;
use crate::quadrature::{breakpoints, integrate_pieces};
use crate::special::{gaussian, norm_cdf};

/// Tail truncation for density quadrature, in standard deviations.
pub const TAIL_SDS: f64 = 12.0;

/// Absolute tolerance used for density integrals.
pub const DENSITY_TOL: f64 = 1e-12;

/// One of the two half-lines cut by the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `(0, inf)`
    Plus,
    /// `(-inf, 0]`
    Minus,
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("t", format!("must be positive and finite, got {t}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// Density `p*(t, x, y)` of the physical skew diffusion (flux-continuous
/// interface). The medium's own `lambda` is ignored.
pub fn physical_density(medium: &InterfaceMedium, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    Ok(physical_density_unchecked(medium.d_plus(), medium.d_minus(), t, x, y))
}

pub(crate) fn physical_density_unchecked(dp: f64, dm: f64, t: f64, x: f64, y: f64) -> f64 {
    let (sp, sm) = (dp.sqrt(), dm.sqrt());
    let reflect = (sp - sm) / (sp + sm);
    if x > 0.0 && y > 0.0 {
        gaussian(y, x, dp * t) + reflect * gaussian(y, -x, dp * t)
    } else if x < 0.0 && y < 0.0 {
        gaussian(y, x, dm * t) - reflect * gaussian(y, -x, dm * t)
    } else if x <= 0.0 && y >= 0.0 {
        let r = y * sm - x * sp;
        2.0 * sp * sm / (sp + sm) * gaussian(r, 0.0, dm * dp * t)
    } else {
        let r = y * sp - x * sm;
        2.0 * sp * sm / (sp + sm) * gaussian(r, 0.0, dm * dp * t)
    }
}

/// Density `p^alpha(t, x, y)` of alpha-skew Brownian motion.
pub fn skew_bm_density(alpha: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_time(t)?;
    Ok(skew_bm_density_unchecked(alpha, t, x, y))
}

pub(crate) fn skew_bm_density_unchecked(alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    let direct = gaussian(y, x, t);
    if x > 0.0 && y > 0.0 {
        direct + (2.0 * alpha - 1.0) * gaussian(y, -x, t)
    } else if x < 0.0 && y < 0.0 {
        direct - (2.0 * alpha - 1.0) * gaussian(y, -x, t)
    } else if x <= 0.0 && y > 0.0 {
        2.0 * alpha * direct
    } else {
        2.0 * (1.0 - alpha) * direct
    }
}

/// Distribution function `P_x(B^alpha(t) <= y)`.
pub fn skew_bm_cdf(alpha: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_time(t)?;
    Ok(skew_bm_cdf_unchecked(alpha, t, x, y))
}

pub(crate) fn skew_bm_cdf_unchecked(alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - skew_bm_cdf_unchecked(1.0 - alpha, t, -x, -y);
    }
    let s = t.sqrt();
    if y <= 0.0 {
        2.0 * (1.0 - alpha) * norm_cdf((y - x) / s)
    } else {
        let below = norm_cdf(-x / s);
        2.0 * (1.0 - alpha) * below
            + (norm_cdf((y - x) / s) - below)
            + (2.0 * alpha - 1.0) * (norm_cdf((y + x) / s) - norm_cdf(x / s))
    }
}

/// Density of the lambda-skew diffusion `s(B^alpha(t))`, by change of
/// variables through the scale map.
pub fn skew_diffusion_density(medium: &InterfaceMedium, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    Ok(skew_diffusion_density_unchecked(medium, medium.alpha_of_lambda(), t, x, y))
}

fn skew_diffusion_density_unchecked(medium: &InterfaceMedium, alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    let bx = medium.scale_map_inverse(x);
    let by = medium.scale_map_inverse(y);
    skew_bm_density_unchecked(alpha, t, bx, by) / medium.diffusivity_at(y).sqrt()
}

/// Distribution function of the lambda-skew diffusion.
pub fn skew_diffusion_cdf(medium: &InterfaceMedium, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let (bx, by) = (medium.scale_map_inverse(x), medium.scale_map_inverse(y));
    Ok(skew_bm_cdf_unchecked(medium.alpha_of_lambda(), t, bx, by))
}

/// Integrates a transition density in `y` over `[lo, hi]` (either may be
/// infinite). The range is truncated [`TAIL_SDS`] standard deviations
/// beyond `x` and the interface, and split at both.
pub fn integrate_density<F: Fn(f64) -> f64>(
    density: F,
    x: f64,
    max_sd: f64,
    lo: f64,
    hi: f64,
    abs_tol: f64,
) -> Result<f64> {
    let lo = lo.max(x.min(0.0) - TAIL_SDS * max_sd);
    let hi = hi.min(x.max(0.0) + TAIL_SDS * max_sd);
    if hi <= lo {
        return Ok(0.0);
    }
    let pts = breakpoints(lo, hi, &[0.0, x]);
    Ok(integrate_pieces(density, &pts, abs_tol)?.value)
}

/// `P_x(X(t) in side)` for the lambda-skew diffusion, by quadrature of
/// its closed-form density.
pub fn half_line_mass(medium: &InterfaceMedium, t: f64, x: f64, side: Side) -> Result<f64> {
    check_time(t)?;
    let alpha = medium.alpha_of_lambda();
    let sd = (medium.d_plus().max(medium.d_minus()) * t).sqrt();
    let (lo, hi) = match side {
        Side::Plus => (0.0, f64::INFINITY),
        Side::Minus => (f64::NEG_INFINITY, 0.0),
    };
    integrate_density(|y| skew_diffusion_density_unchecked(medium, alpha, t, x, y), x, sd, lo, hi, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn medium(dp: f64, dm: f64) -> InterfaceMedium {
        InterfaceMedium::conservative(dp, dm).unwrap()
    }

    #[test]
    fn homogeneous_physical_density_is_gaussian() {
        let m = medium(2.5, 2.5);
        for &(x, y) in &[(0.3, -0.7), (-1.0, -2.0), (0.0, 0.0), (1.5, 0.2)] {
            assert_relative_eq!(
                physical_density(&m, 0.7, x, y).unwrap(),
                gaussian(y, x, 2.5 * 0.7),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn half_alpha_is_gaussian() {
        for &(x, y) in &[(0.3, -0.7), (-1.0, -2.0), (0.0, 0.4), (1.5, 0.2)] {
            assert_relative_eq!(skew_bm_density(0.5, 1.3, x, y).unwrap(), gaussian(y, x, 1.3), max_relative = 1e-14);
        }
    }

    #[test]
    fn skew_bm_from_origin_doubles_the_gaussian() {
        assert_relative_eq!(skew_bm_density(0.3, 2.0, 0.0, 0.8).unwrap(), 0.6 * gaussian(0.8, 0.0, 2.0));
    }

    #[test]
    fn rejects_nonpositive_time() {
        let m = medium(4.0, 1.0);
        assert!(physical_density(&m, 0.0, 0.0, 0.0).is_err());
        assert!(skew_bm_density(0.5, -1.0, 0.0, 0.0).is_err());
        assert!(skew_diffusion_density(&m, f64::NAN, 0.0, 0.0).is_err());
        assert!(half_line_mass(&m, 0.0, 0.0, Side::Plus).is_err());
    }

    #[test]
    fn skewness_from_the_interface() {
        let m = medium(4.0, 1.0);
        for &t in &[0.01, 1.0, 30.0] {
            assert_abs_diff_eq!(half_line_mass(&m, t, 0.0, Side::Plus).unwrap(), 2.0 / 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(half_line_mass(&m, t, 0.0, Side::Minus).unwrap(), 1.0 / 3.0, epsilon = 1e-10);
        }
        let h = medium(1.7, 1.7);
        assert_abs_diff_eq!(half_line_mass(&h, 1.0, 0.0, Side::Plus).unwrap(), 0.5, epsilon = 1e-10);
        let general = InterfaceMedium::new(4.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(half_line_mass(&general, 0.4, 0.0, Side::Plus).unwrap(), 1.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn skew_bm_positive_mass_from_origin() {
        for &a in &[0.1, 0.5, 0.77] {
            let m = integrate_density(|y| skew_bm_density(a, 1.0, 0.0, y).unwrap(), 0.0, 1.0, 0.0, f64::INFINITY, 1e-13)
                .unwrap();
            assert_abs_diff_eq!(m, a, epsilon = 1e-11);
        }
    }

    #[test]
    fn lambda_density_at_conservative_lambda_is_physical() {
        let m = medium(4.0, 1.0);
        for i in 0..40 {
            for j in 0..40 {
                let x = -3.0 + 6.0 * i as f64 / 39.0;
                let y = -3.0 + 6.0 * j as f64 / 39.0;
                let a = skew_diffusion_density(&m, 1.0, x, y).unwrap();
                let b = physical_density(&m, 1.0, x, y).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn physical_density_is_continuous_across_the_interface() {
        let m = medium(9.0, 1.0);
        for &x in &[-1.0, -0.2, 0.0, 0.5, 2.0] {
            let below = physical_density(&m, 0.8, x, -1e-12).unwrap();
            let at = physical_density(&m, 0.8, x, 0.0).unwrap();
            let above = physical_density(&m, 0.8, x, 1e-12).unwrap();
            assert_relative_eq!(below, at, max_relative = 1e-9);
            assert_relative_eq!(above, at, max_relative = 1e-9);
        }
    }

    #[test]
    fn chapman_kolmogorov_spot_checks() {
        let m = medium(25.0, 1.0);
        for &(s, t, x, y) in &[(0.3, 0.5, -0.4, 1.1), (1.0, 0.2, 0.7, -0.3), (0.05, 0.05, 0.0, 0.2)] {
            let lhs = integrate_pieces(
                |z| physical_density_unchecked(25.0, 1.0, s, x, z) * physical_density_unchecked(25.0, 1.0, t, z, y),
                &breakpoints(-60.0, 60.0, &[0.0, x, y]),
                1e-12,
            )
            .unwrap()
            .value;
            assert_abs_diff_eq!(lhs, physical_density(&m, s + t, x, y).unwrap(), epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn physical_density_is_symmetric(dp in 0.1f64..30.0, dm in 0.1f64..30.0, t in 0.01f64..5.0, x in -4f64..4.0, y in -4f64..4.0) {
            let m = medium(dp, dm);
            let a = physical_density(&m, t, x, y).unwrap();
            let b = physical_density(&m, t, y, x).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300));
        }

        #[test]
        fn densities_are_nonnegative(alpha in 0.01f64..0.99, lambda in 0.01f64..0.99, t in 0.01f64..5.0, x in -4f64..4.0, y in -4f64..4.0) {
            prop_assert!(skew_bm_density(alpha, t, x, y).unwrap() >= 0.0);
            let m = InterfaceMedium::new(3.0, 0.5, lambda).unwrap();
            prop_assert!(skew_diffusion_density(&m, t, x, y).unwrap() >= 0.0);
        }

        #[test]
        fn cdf_matches_density_quadrature(alpha in 0.01f64..0.99, t in 0.05f64..3.0, x in -2f64..2.0, y in -3f64..3.0) {
            let q = integrate_density(|z| skew_bm_density_unchecked(alpha, t, x, z), x, t.sqrt(), f64::NEG_INFINITY, y, 1e-12).unwrap();
            prop_assert!((q - skew_bm_cdf(alpha, t, x, y).unwrap()).abs() < 1e-10);
        }
    }
}
