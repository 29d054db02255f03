use bss_core::Kernel;
use proptest::prelude::*;
use statrs::function::gamma::{gamma, gamma_ur};

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `∫₀^∞ g(s + t) g(s) ds` for `g(s) = s^κ e^{-s}`, through `s = u⁴`, which
/// makes the integrand smooth at the origin.
fn gamma_autocov_oracle(kappa: f64, t: f64) -> f64 {
    let g = |s: f64| if s > 0.0 { s.powf(kappa) * (-s).exp() } else { 0.0 };
    let upper = 60f64.powf(0.25);
    simpson(|u| 4.0 * u.powi(3) * g(u.powi(4) + t) * g(u.powi(4)), 0.0, upper, 40_000)
}

#[test]
fn gamma_l2_norms_match_gamma_function_and_quadrature() {
    for (kappa, frozen) in [(0.25f64, 0.313_328_534_328_875f64), (-0.25, 1.253_314_137_315_500)] {
        let k = Kernel::gamma(kappa, 1.0).unwrap();
        let closed = gamma(2.0 * kappa + 1.0) / 2f64.powf(2.0 * kappa + 1.0);
        assert!((k.l2_norm_sq() - closed).abs() <= 1e-12 * closed);
        assert!((k.l2_norm_sq() - frozen).abs() <= 1e-12 * frozen);
        let oracle = gamma_autocov_oracle(kappa, 0.0);
        assert!((k.l2_norm_sq_quadrature().unwrap() - oracle).abs() <= 1e-9 * oracle);
    }
}

#[test]
fn exponential_autocovariance_closed_form() {
    let k = Kernel::exponential(1.0).unwrap();
    let expected = (-1.0f64).exp() / 2.0;
    assert!((k.autocovariance(1.0).unwrap() - expected).abs() < 1e-12);
    assert!((expected - 0.183_939_7).abs() < 1e-7);
}

#[test]
fn gamma_autocovariance_at_half() {
    let k = Kernel::gamma(0.25, 1.0).unwrap();
    let r = k.autocovariance(0.5).unwrap();
    let oracle = gamma_autocov_oracle(0.25, 0.5);
    assert!((r - oracle).abs() < 1e-8, "{r} vs {oracle}");
    assert!((r - 0.233_549_833_656_176).abs() < 1e-8);
    assert_eq!(r, k.autocovariance(0.5).unwrap());
}

#[test]
fn exponential_certificate_has_unit_slope() {
    let k = Kernel::exponential(1.0).unwrap();
    for t in [1e-3f64, 0.1, 1.0] {
        let expected = (1.0 - (-t).exp()) / 2.0;
        assert!((k.gap(t).unwrap() - expected).abs() < 1e-12 * expected.max(1e-3));
    }
    let cert = k.certify_regularity(1.0, 16).unwrap();
    assert!(cert.passed);
    assert!((cert.fitted_slope - 1.0).abs() < 0.05);
    assert!(cert.c <= 0.5 * 1.1);
}

#[test]
fn gamma_certificates_fit_the_power_law() {
    for kappa in [-0.25f64, 0.25] {
        let cert = Kernel::gamma(kappa, 1.0).unwrap().certify_regularity(0.1, 16).unwrap();
        assert!(cert.passed);
        assert!((cert.fitted_slope - (2.0 * kappa + 1.0)).abs() < 0.1, "{}", cert.fitted_slope);
    }
}

#[test]
fn exponential_truncation_solves_the_tail_equation() {
    let m = Kernel::exponential(1.0).unwrap().truncation_horizon(1e-6).unwrap();
    assert!((m - 13.468_936_967_684_3).abs() < 1e-9);
    assert!(((-2.0 * m).exp() / 2.0 - 1e-12).abs() < 1e-20);
}

#[test]
fn gamma_truncation_matches_incomplete_gamma() {
    let m = Kernel::gamma(0.25, 1.0).unwrap().truncation_horizon(1e-6).unwrap();
    // ∫_M^∞ s^{1/2} e^{-2s} ds = Γ(3/2, 2M) / 2^{3/2}
    let tail = gamma_ur(1.5, 2.0 * m) * gamma(1.5) / 2f64.powf(1.5);
    assert!(tail <= 1e-12 * (1.0 + 1e-6));
    assert!((m - 14.139_802_335_736).abs() < 1e-6, "{m}");
}

#[test]
fn tabulated_kernel_zero_near_origin_is_degenerate() {
    let k = Kernel::tabulated(vec![0.0, 0.1, 0.2, 1.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    assert_eq!(k.nondegeneracy_check(&[0.05]).unwrap(), vec![false]);
}

fn admissible_kappa() -> impl Strategy<Value = f64> {
    prop_oneof![-0.45..-0.05f64, 0.05..0.45f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn autocovariance_at_zero_is_the_norm(kappa in admissible_kappa(), rho in 0.2..5.0f64) {
        let k = Kernel::gamma(kappa, rho).unwrap();
        let r0 = k.autocovariance(0.0).unwrap();
        prop_assert!((r0 - k.l2_norm_sq()).abs() <= 1e-10 * k.l2_norm_sq());
    }

    #[test]
    fn gap_is_nonnegative_and_nondecreasing(kappa in admissible_kappa(), rho in 0.2..5.0f64, exponential in any::<bool>()) {
        let k = if exponential { Kernel::exponential(rho).unwrap() } else { Kernel::gamma(kappa, rho).unwrap() };
        let mut last = 0.0f64;
        for i in 0..20 {
            let t = 1e-4 * 10f64.powf(i as f64 / 5.0);
            let g = k.gap(t).unwrap();
            prop_assert!(g >= -1e-10);
            prop_assert!(g >= last - 1e-10 * last.abs().max(1.0));
            last = g;
        }
    }

    #[test]
    fn rough_gamma_blows_up_like_a_power(kappa in -0.45..-0.05f64) {
        let k = Kernel::gamma(kappa, 1.0).unwrap();
        for t in [1e-6f64, 1e-8] {
            let scaled = k.eval(t).unwrap() * t.powf(-kappa);
            prop_assert!((scaled - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn truncation_shrinks_as_tolerance_grows(kappa in admissible_kappa(), a in -8.0..-2.0f64, b in -8.0..-2.0f64) {
        let k = Kernel::gamma(kappa, 1.0).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let m_lo = k.truncation_horizon(10f64.powf(lo)).unwrap();
        let m_hi = k.truncation_horizon(10f64.powf(hi)).unwrap();
        prop_assert!(m_hi <= m_lo);
    }
}
