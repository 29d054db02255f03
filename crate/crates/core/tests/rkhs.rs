use bss_core::rkhs_density::{approximate_target, build_operator, cherny_two_step};
use bss_core::{Kernel, SimGrid};
use proptest::prelude::*;

fn unit_grid(n: usize) -> SimGrid {
    SimGrid::new(0.0, 1.0, n).unwrap()
}

fn hat(t: f64) -> f64 {
    1.0 - (2.0 * t - 1.0).abs()
}

fn smooth(t: f64) -> f64 {
    (std::f64::consts::PI * t).sin() * t + 0.5 * t * t
}

fn sampled(grid: &SimGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.times().into_iter().map(f).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[test]
fn row_sums_approach_the_kernel_integral() {
    for kappa in [-0.25, 0.25] {
        let kernel = Kernel::gamma(kappa, 1.0).unwrap();
        let errors: Vec<f64> = [400usize, 1600]
            .iter()
            .map(|&n| {
                let grid = unit_grid(n);
                let op = build_operator(&kernel, &vec![1.0; n + 1], &grid).unwrap();
                let sums = op.apply(&vec![1.0; n]);
                (0..=n)
                    .map(|i| (sums[i] - kernel.integral(grid.time(i)).unwrap()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        // The singular first cell carries the root mean square of g rather
        // than its mean, so the rate is dt^{min(1, 1 + κ)}.
        let rate = 4f64.powf((1.0 + kappa).min(1.0));
        assert!(errors[0] < 0.01, "κ = {kappa}: {errors:?}");
        assert!(errors[0] / errors[1] > 0.8 * rate, "κ = {kappa}: {errors:?}");
    }
}

#[test]
fn operator_norm_respects_cauchy_schwarz() {
    let grid = unit_grid(200);
    for kappa in [-0.25, 0.25] {
        let op = build_operator(&Kernel::gamma(kappa, 1.0).unwrap(), &sampled(&grid, |t| 1.0 + t), &grid).unwrap();
        assert!(op.norm() <= op.norm_bound() * (1.0 + 1e-9), "{} vs {}", op.norm(), op.norm_bound());
    }
}

#[test]
fn hat_target_is_approximated_at_both_roughnesses() {
    for kappa in [-0.25, 0.25] {
        let kernel = Kernel::gamma(kappa, 1.0).unwrap();
        let mut errs = Vec::new();
        for n in [100usize, 400] {
            let grid = unit_grid(n);
            let op = build_operator(&kernel, &vec![1.0; n + 1], &grid).unwrap();
            errs.push(approximate_target(&op, &sampled(&grid, hat), 1e-10).unwrap().sup_error);
        }
        assert!(errs[1] < errs[0], "κ = {kappa}: {errs:?}");
        assert!(errs[1] < 0.05, "κ = {kappa}: {errs:?}");
    }
}

#[test]
fn f_vanishing_on_a_subinterval() {
    let n = 800;
    let grid = unit_grid(n);
    let f = sampled(&grid, |t| if (0.4..0.5).contains(&t) { 0.0 } else { 1.0 });
    let op = build_operator(&Kernel::gamma(0.25, 1.0).unwrap(), &f, &grid).unwrap();
    let targets: [(&str, fn(f64) -> f64); 3] = [
        ("sin(πt)", |t| (std::f64::consts::PI * t).sin()),
        ("t²", |t| t * t),
        ("t sin(πt) + t²/2", smooth),
    ];
    let mut rel = Vec::new();
    for (name, target) in targets {
        let target = sampled(&grid, target);
        let approx = approximate_target(&op, &target, op.default_ridge()).unwrap();
        assert!(approx.h_hat.iter().all(|h| h.is_finite()));
        let r = approx.sup_error / sup(&target);
        println!("f = 0 on [0.4, 0.5], n = {n}, target {name}: sup_error / |target| = {r:.3e}");
        assert!(r.is_finite() && r < 0.1, "{name}: {r}");
        rel.push(r);
    }
    assert!(rel[0] < 0.05, "{rel:?}");
}

#[test]
fn identity_f_two_step_bound() {
    let n = 400;
    let grid = unit_grid(n);
    let kernel = Kernel::gamma(0.25, 1.0).unwrap();
    let f = sampled(&grid, |s| s);
    let target = sampled(&grid, smooth);
    let r = cherny_two_step(&kernel, &f, &target, 0.05, &grid).unwrap();
    assert!((r.a_delta_measure - 0.05).abs() <= grid.dt() + 1e-12, "{}", r.a_delta_measure);
    let bound = r.step1_error + kernel.l2_norm_sq().sqrt() * sup(&r.h_tilde) * r.a_delta_measure.sqrt();
    assert!(r.sup_error <= bound, "{} vs {bound}", r.sup_error);
    assert!(r.perturbation <= r.perturbation_bound + 1e-10);
    assert!(r.grid_perturbation <= r.perturbation_bound + 1e-10);
}

#[test]
fn shrinking_delta_shrinks_the_error() {
    let n = 400;
    let grid = unit_grid(n);
    let kernel = Kernel::gamma(0.25, 1.0).unwrap();
    let f = sampled(&grid, |s| s);
    let target = sampled(&grid, smooth);
    let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.01]
        .iter()
        .map(|&d| cherny_two_step(&kernel, &f, &target, d, &grid).unwrap().sup_error)
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "{errs:?}");
    }
}

#[test]
fn bounded_f_needs_no_truncation() {
    let grid = unit_grid(200);
    let kernel = Kernel::gamma(-0.25, 1.0).unwrap();
    let f = sampled(&grid, |s| 0.5 + s);
    let target = sampled(&grid, hat);
    let r = cherny_two_step(&kernel, &f, &target, 0.1, &grid).unwrap();
    assert_eq!(r.a_delta_measure, 0.0);
    for j in 0..200 {
        assert!((r.h_hat[j] * f[j] - r.h_tilde[j]).abs() <= 1e-12 * r.h_tilde[j].abs().max(1.0));
    }
    assert!((r.sup_error - r.step1_error).abs() <= 1e-9 * r.step1_error.max(1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn approximation_is_linear(alpha in -5.0..5.0f64, a in -2.0..2.0f64, b in 0.5..4.0f64) {
        let grid = unit_grid(40);
        let op = build_operator(&Kernel::gamma(-0.25, 1.0).unwrap(), &vec![1.0; 41], &grid).unwrap();
        let target = sampled(&grid, |t| a * t + (b * t).sin());
        let scaled: Vec<f64> = target.iter().map(|v| alpha * v).collect();
        let one = approximate_target(&op, &target, 0.0).unwrap();
        let many = approximate_target(&op, &scaled, 0.0).unwrap();
        let scale = sup(&one.h_hat).max(1.0) * alpha.abs().max(1.0);
        for (x, y) in one.h_hat.iter().zip(&many.h_hat) {
            prop_assert!((alpha * x - y).abs() <= 1e-10 * scale);
        }
        prop_assert!((many.sup_error - alpha.abs() * one.sup_error).abs() <= 1e-10 * alpha.abs().max(1.0));
    }

    #[test]
    fn range_vanishes_at_the_start(h in prop::collection::vec(-10.0..10.0f64, 30), kappa in prop_oneof![-0.4..-0.1f64, 0.1..0.4f64]) {
        let grid = unit_grid(30);
        let op = build_operator(&Kernel::gamma(kappa, 1.0).unwrap(), &sampled(&grid, |t| 1.0 + t), &grid).unwrap();
        prop_assert_eq!(op.apply(&h)[0], 0.0);
    }

    #[test]
    fn cauchy_schwarz_bound_on_the_dropped_part(delta in 0.01..0.5f64, shift in -0.5..0.5f64, kappa in prop_oneof![-0.4..-0.1f64, 0.1..0.4f64]) {
        let grid = unit_grid(100);
        let kernel = Kernel::gamma(kappa, 1.0).unwrap();
        let f = sampled(&grid, |s| (s - 0.5 - shift * 0.5) * 2.0);
        let r = cherny_two_step(&kernel, &f, &sampled(&grid, hat), delta, &grid).unwrap();
        prop_assert!(r.perturbation <= r.perturbation_bound + 1e-10);
        prop_assert!(r.grid_perturbation <= r.perturbation_bound + 1e-10);
    }
}

#[test]
fn refinement_does_not_increase_the_error() {
    let kernel = Kernel::gamma(0.25, 1.0).unwrap();
    let mut last = f64::INFINITY;
    for n in [50usize, 100, 200, 400] {
        let grid = unit_grid(n);
        let op = build_operator(&kernel, &vec![1.0; n + 1], &grid).unwrap();
        let err = approximate_target(&op, &sampled(&grid, smooth), 1e-8 * grid.dt()).unwrap().sup_error;
        assert!(err <= last * 1.05, "n = {n}: {err} after {last}");
        last = err;
    }
}
