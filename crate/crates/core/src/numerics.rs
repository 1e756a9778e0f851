//! Scalar special functions for the standard normal distribution and a
//! uniform quantization grid.
//!
//! `q_func` is the upper-tail probability `Q(x) = P(Z > x)`, computed through
//! the complementary error function so that both tails keep full relative
//! precision. `q_inv` inverts it with a safeguarded Newton iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal upper-tail probability `Q(x)`.
#[inline]
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf, `1 - Q(x)` without cancellation.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    q_func(-x)
}

/// Inverse of [`q_func`]: returns `x` with `Q(x) = y`.
///
/// Fails when `y` is outside the open interval `(0, 1)`.
pub fn q_inv(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain {
            what: "q_inv argument",
            value: y,
        });
    }
    if y == 0.5 {
        return Ok(0.0);
    }
    // Work in the upper tail; 1 - y is exact for y >= 0.5.
    if y > 0.5 {
        return Ok(-upper_tail_inv(1.0 - y));
    }
    Ok(upper_tail_inv(y))
}

/// Solves `Q(x) = p` for `0 < p < 0.5`, so `x > 0`.
fn upper_tail_inv(p: f64) -> f64 {
    let x = wichura_upper(p);
    // One Newton step on log Q polishes the last few ulps.
    let q = q_func(x);
    if q > 0.0 {
        let next = x + (q.ln() - p.ln()) * q / phi(x);
        if next.is_finite() && next > 0.0 {
            return next;
        }
    }
    x
}

/// Wichura's AS241 (PPND16) rational approximations for the standard normal
/// quantile, written for the upper tail: returns `x > 0` with `Q(x) = p`.
#[allow(clippy::excessive_precision)]
fn wichura_upper(p: f64) -> f64 {
    let q = 0.5 - p;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_0e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545_4e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271_0e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751_1e3)
            * r
            + 6.871_870_074_920_579_1e2)
            * r
            + 4.231_333_070_160_091_1e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = (-p.ln()).sqrt();
    if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414_1e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506_1e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_344_9e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_7e-1)
            * r
            + 6.897_673_349_851_000_0e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_3e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_3;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446_0e-7) * r
            + 1.846_318_317_510_054_7e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358_0e-1)
            * r
            + 5.998_322_065_558_879_4e-1)
            * r
            + 1.0;
        num / den
    }
}

/// First-order sensitivity of `q_inv` at `y`: `d/dy Q^{-1}(y) = -sqrt(2 pi) e^{x^2/2}`.
pub fn q_inv_slope(y: f64) -> Result<f64> {
    let x = q_inv(y)?;
    Ok(-SQRT_2PI * (0.5 * x * x).exp())
}

/// Uniform grid `origin + k * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationGrid {
    origin: f64,
    step: f64,
}

impl QuantizationGrid {
    pub fn new(origin: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !origin.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quantization grid needs finite origin and positive step, got origin={origin}, step={step}"
            )));
        }
        Ok(Self { origin, step })
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Index of the grid point nearest `x`; ties go toward +inf.
    pub fn index_of(&self, x: f64) -> i64 {
        ((x - self.origin) / self.step + 0.5).floor() as i64
    }

    pub fn value(&self, index: i64) -> f64 {
        self.origin + index as f64 * self.step
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.value(self.index_of(x))
    }

    /// Grid points inside `[lo, hi]` (with a small tolerance at the ends).
    pub fn points_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let eps = 1e-9 * self.step;
        let first = ((lo - self.origin - eps) / self.step).ceil() as i64;
        let last = ((hi - self.origin + eps) / self.step).floor() as i64;
        (first..=last).map(|k| self.value(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive Simpson integration of the normal density, used as an
    /// independent oracle for `q_func`.
    fn simpson_q(x: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            adaptive(f, a, m, left, tol / 2.0, depth - 1) + adaptive(f, m, b, right, tol / 2.0, depth - 1)
        }
        let f = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let upper = x.max(0.0) + 40.0;
        adaptive(&f, x, upper, simpson(&f, x, upper), 1e-14, 50)
    }

    fn bisect_q_inv(y: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if simpson_q(mid) > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn q_func_matches_quadrature() {
        assert_eq!(q_func(0.0), 0.5);
        for &x in &[-3.0, -1.0, 0.3, 0.492, 1.641, 2.0, 5.0] {
            let oracle = simpson_q(x);
            assert!((q_func(x) - oracle).abs() < 1e-12, "x={x}");
        }
        assert!((q_func(1.641) - 0.0504).abs() < 1e-3);
        assert!((q_func(0.492) - 0.311).abs() < 1e-3);
    }

    #[test]
    fn q_inv_examples() {
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        assert!((q_inv(0.0478).unwrap() - bisect_q_inv(0.0478)).abs() < 1e-9);
        assert!((q_inv(0.0478).unwrap() - 1.6667).abs() < 1e-3);
        assert!((q_inv(0.7977).unwrap() + 0.8333).abs() < 1e-3);
    }

    #[test]
    fn q_inv_rejects_out_of_range() {
        for y in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            let err = q_inv(y).unwrap_err();
            assert!(err.to_string().contains("q_inv"), "{err}");
        }
    }

    #[test]
    fn q_inv_is_exact_inverse_on_grid() {
        for k in 1..1000 {
            let y = k as f64 / 1000.0;
            let x = q_inv(y).unwrap();
            assert!((q_func(x) - y).abs() < 1e-9, "y={y}");
            assert!((q_func(x) - y).abs() <= 1e-9 * y);
        }
    }

    #[test]
    fn q_inv_deep_tails() {
        for &y in &[1e-300, 1e-100, 1e-20, 1e-8, 1.0 - 1e-12] {
            let x = q_inv(y).unwrap();
            assert!(((q_func(x) - y) / y).abs() < 1e-9, "y={y}");
        }
    }

    #[test]
    fn rational_start_is_already_accurate() {
        for k in 1..400 {
            let p = 10f64.powf(-(k as f64) / 10.0) * 0.5;
            let (mut lo, mut hi) = (0.0, 40.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if q_func(mid) > p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = wichura_upper(p);
            assert!((x - lo).abs() <= 1e-13 * lo.max(1e-3), "p={p} x={x} oracle={lo}");
        }
    }

    #[test]
    fn phi_values() {
        assert!((phi(0.0) - 0.39894).abs() < 1e-5);
        assert!((phi(1.0) - 0.24197).abs() < 1e-5);
        assert!((phi(3.0) - 0.004432).abs() < 1e-6);
    }

    #[test]
    fn derivative_of_q_is_minus_phi() {
        let h = 1e-4;
        let mut x = -8.0;
        while x <= 8.0 {
            let d = (q_func(x + h) - q_func(x - h)) / (2.0 * h);
            assert!((d + phi(x)).abs() < 1e-6, "x={x}");
            x += 0.05;
        }
    }

    #[test]
    fn quantize_ties_go_up() {
        let g = QuantizationGrid::new(0.0, 0.04).unwrap();
        assert!((g.quantize(0.02) - 0.04).abs() < 1e-12);
        assert!((g.quantize(0.6624) - 0.68).abs() < 1e-12);
        assert!(QuantizationGrid::new(0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn q_symmetry(x in -30.0f64..30.0) {
            prop_assert!((q_func(x) + q_func(-x) - 1.0).abs() < 1e-12);
            prop_assert!((phi(x) - phi(-x)).abs() == 0.0);
        }

        #[test]
        fn q_monotone(x in -10.0f64..10.0, dx in 1e-6f64..1.0) {
            prop_assert!(q_func(x + dx) <= q_func(x));
        }

        #[test]
        fn quantize_idempotent(x in -100.0f64..100.0, origin in -1.0f64..1.0, step in 0.001f64..2.0) {
            let g = QuantizationGrid::new(origin, step).unwrap();
            let once = g.quantize(x);
            prop_assert!((g.quantize(once) - once).abs() < 1e-9 * step.max(1.0));
            prop_assert!((once - x).abs() <= 0.5 * step + 1e-9);
        }
    }
}
