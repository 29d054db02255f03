//! Adaptive Gauss–Kronrod quadrature.
//!
//! The workhorse is a globally adaptive 10/21-point Gauss–Kronrod rule that
//! always bisects the panel with the largest error estimate. Two
//! substitutions sit on top of it:
//!
//! * [`integrate_left_singular`] maps `x = a + (b - a) v^4`, which turns an
//!   integrable power singularity `(x - a)^p`, `p > -1`, into a bounded
//!   integrand of order `v^(4p + 3)`.
//! * [`integrate_tail`] maps `x = a - ln(u) / rate` so that an integrand
//!   decaying like `exp(-rate x)` becomes bounded on `(0, 1]`.
//!
//! Kronrod nodes never touch the panel endpoints, so integrands may be
//! infinite there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{BssError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_382_959_188_583,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const MAX_PANELS: usize = 4000;
const ROUGH_REL: f64 = 1e-6;

/// Absolute and relative accuracy goal; the looser of the two applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-15, 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

impl QuadResult {
    const ZERO: QuadResult = QuadResult {
        value: 0.0,
        abs_error: 0.0,
        converged: true,
    };

    fn add(self, other: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + other.value,
            abs_error: self.abs_error + other.abs_error,
            converged: self.converged && other.converged,
        }
    }

    /// Turns a non-converged result into a [`BssError::Numerical`].
    pub fn into_result(self, what: &str) -> Result<f64> {
        if self.converged && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(BssError::Numerical {
                message: format!("quadrature for {what} did not converge"),
                estimate: self.value,
                error_bound: self.abs_error,
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for i in 0..10 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> QuadResult {
    if a == b {
        return QuadResult::ZERO;
    }
    if b < a {
        let r = integrate(f, b, a, tol);
        return QuadResult {
            value: -r.value,
            ..r
        };
    }

    let first = gauss_kronrod_21(&f, a, b);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    while total_err > tol.target(total) {
        if heap.len() >= MAX_PANELS {
            return QuadResult {
                value: total,
                abs_error: total_err,
                converged: false,
            };
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let left = gauss_kronrod_21(&f, worst.a, mid);
        let right = gauss_kronrod_21(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum to shed the drift of the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let abs_error = heap.iter().map(|p| p.error).sum();
    QuadResult {
        value,
        abs_error,
        converged: true,
    }
}

/// Integrates over consecutive intervals between sorted `points`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> QuadResult {
    let pieces = points.len().saturating_sub(1).max(1) as f64;
    let run = |per_piece: Tolerance| {
        points
            .windows(2)
            .map(|w| integrate(&f, w[0], w[1], per_piece))
            .fold(QuadResult::ZERO, QuadResult::add)
    };
    let rough = run(Tolerance::new(tol.abs / pieces, ROUGH_REL));
    run(Tolerance::new(tol.target(rough.value) / pieces, tol.rel))
}

/// Integrates over `[a, b]` where `f` may have an integrable power-law
/// singularity at `a`.
pub fn integrate_left_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> QuadResult {
    if a == b {
        return QuadResult::ZERO;
    }
    let width = b - a;
    integrate(
        |v: f64| {
            let v2 = v * v;
            let x = a + width * v2 * v2;
            if x <= a {
                return 0.0;
            }
            f(x) * 4.0 * width * v2 * v
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integrates over `[a, ∞)` for `f` decaying at least like `exp(-rate x)`.
pub fn integrate_tail<F: Fn(f64) -> f64>(f: F, a: f64, rate: f64, tol: Tolerance) -> QuadResult {
    integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let x = a - u.ln() / rate;
            let y = f(x);
            if y == 0.0 {
                0.0
            } else {
                y / (rate * u)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integrates over `(0, ∞)` (or `(0, end]` when `end` is finite), treating
/// the origin as a possible singularity and splitting at `breaks`.
///
/// For an infinite range the integrand must decay like `exp(-rate x)`.
pub(crate) fn integrate_half_line<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    end: HalfLineEnd,
    tol: Tolerance,
) -> QuadResult {
    let mut points: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b.is_finite())
        .collect();
    let stop = match end {
        HalfLineEnd::Finite(e) => {
            if e <= 0.0 {
                return QuadResult::ZERO;
            }
            points.retain(|&b| b < e);
            Some(e)
        }
        HalfLineEnd::Infinite { .. } => None,
    };
    points.sort_by(f64::total_cmp);
    points.dedup();
    if let Some(e) = stop {
        points.push(e);
    }
    if points.is_empty() {
        points.push(1.0);
    }

    let pieces = points.len() as f64 + 1.0;
    let run = |piece_tol: Tolerance| {
        let mut acc = integrate_left_singular(&f, 0.0, points[0], piece_tol);
        for w in points.windows(2) {
            acc = acc.add(integrate(&f, w[0], w[1], piece_tol));
        }
        if let HalfLineEnd::Infinite { rate } = end {
            let last = *points.last().expect("non-empty");
            acc = acc.add(integrate_tail(&f, last, rate, piece_tol));
        }
        acc
    };
    // A piece that is tiny next to the total must not be held to a relative
    // goal of its own, so the absolute goal comes from a coarse total.
    let rough = run(Tolerance::new(tol.abs / pieces, ROUGH_REL));
    run(Tolerance::new(tol.target(rough.value) / pieces, tol.rel))
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum HalfLineEnd {
    Finite(f64),
    Infinite { rate: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::default());
        assert!(r.converged);
        assert_relative_eq!(r.value, 10.5 - 9.0, max_relative = 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let f = |x: f64| x.sin();
        let a = integrate(f, 0.0, 1.0, Tolerance::default()).value;
        let b = integrate(f, 1.0, 0.0, Tolerance::default()).value;
        assert_eq!(a, -b);
    }

    #[test]
    fn inverse_sqrt_singularity() {
        let r = integrate_left_singular(|x| x.powf(-0.5), 0.0, 4.0, Tolerance::default());
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-12);
        let r = integrate_left_singular(|x| x.powf(-0.9), 0.0, 1.0, Tolerance::default());
        assert_relative_eq!(r.value, 10.0, max_relative = 1e-10);
    }

    #[test]
    fn exponential_tail() {
        let r = integrate_tail(|x| (-2.0 * x).exp(), 1.0, 2.0, Tolerance::default());
        assert_relative_eq!(r.value, (-2.0f64).exp() / 2.0, max_relative = 1e-13);
        let r = integrate_tail(|x| x * (-x).exp(), 0.0, 1.0, Tolerance::default());
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn kink_is_handled_adaptively() {
        let r = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, Tolerance::default());
        assert_relative_eq!(r.value, 0.5 * (0.09 + 0.49), max_relative = 1e-11);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = integrate(|x: f64| (1.0 / x).sin() / x, 1e-12, 1.0, Tolerance::new(0.0, 1e-15));
        assert!(!r.converged);
        assert!(r.into_result("oscillatory").unwrap_err().is_numerical());
    }
}
