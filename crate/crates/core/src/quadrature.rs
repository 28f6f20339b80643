//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece { a, b, value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

/// Integrates `f` over the union of `[pts[i], pts[i+1]]`, refining the piece
/// with the largest error estimate until the summed estimate is below `abs_tol`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, pts: &[f64], abs_tol: f64) -> Result<Integral> {
    let mut heap: BinaryHeap<Piece> = pts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod(&f, w[0], w[1]))
        .collect();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !value.is_finite() {
            return Err(Error::QuadratureNonConvergence { achieved: f64::NAN, requested: abs_tol });
        }
        if error <= abs_tol {
            return Ok(Integral { value, error });
        }
        let worst = heap.pop().expect("non-empty while error exceeds tolerance");
        let mid = 0.5 * (worst.a + worst.b);
        if heap.len() + 2 > MAX_INTERVALS || mid <= worst.a || mid >= worst.b {
            return Err(Error::QuadratureNonConvergence { achieved: error, requested: abs_tol });
        }
        heap.push(kronrod(&f, worst.a, mid));
        heap.push(kronrod(&f, mid, worst.b));
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<Integral> {
    integrate_pieces(f, &[a, b], abs_tol)
}

/// Sorted, deduplicated breakpoints clipped to `[lo, hi]` with the endpoints included.
pub fn breakpoints(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(interior.iter().copied().filter(|&p| p > lo && p < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1e-14).unwrap();
        assert_abs_diff_eq!(r.value, 13.5, epsilon = 1e-13);
    }

    #[test]
    fn kinked_gaussian_tail() {
        let pts = breakpoints(-12.0, 12.0, &[0.0, 0.3]);
        let r = integrate_pieces(|x: f64| (-0.5 * x * x).exp() * if x > 0.3 { 2.0 } else { 1.0 }, &pts, 1e-12).unwrap();
        let s = (2.0 * std::f64::consts::PI).sqrt();
        let exact = s * (crate::special::norm_cdf(0.3) + 2.0 * crate::special::norm_sf(0.3));
        assert_abs_diff_eq!(r.value, exact, epsilon = 1e-11);
    }

    #[test]
    fn reports_failure() {
        let r = integrate(|x: f64| 1.0 / x.abs().max(1e-300), -1.0, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
