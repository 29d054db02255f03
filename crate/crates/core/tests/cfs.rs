use bss_core::cfs_probe::{
    counterexample_probe, driver_seed, frozen_seed, standard_targets, support_sweep, tube_probability,
    TubeProbe, STANDARD_TARGETS,
};
use bss_core::conditional_law::{FreshDriverSampler, FrozenState};
use bss_core::simulator::PathSimulator;
use bss_core::{BssModel, IntermittencyModel, Kernel, PathRole, SamplePath, ValidatedModel};
use proptest::prelude::*;

fn exp_ou_gamma(kappa: f64, beta: f64) -> ValidatedModel {
    let m = BssModel::new(
        Kernel::gamma(kappa, 1.0).unwrap(),
        IntermittencyModel::ExpOu {
            reversion: 1.0,
            mean_log: 0.0,
            vol_log: 0.5,
        },
        1.0,
    )
    .unwrap()
    .with_beta(beta);
    ValidatedModel::new(m).unwrap()
}

fn sweep_with_absolute_epsilon(kappa: f64, epsilon: f64) {
    let model = exp_ou_gamma(kappa, 0.0);
    let probe = TubeProbe::freeze(&model, 1.0 / 64.0, 0.0, 42).unwrap();
    let targets = standard_targets(&probe.window()).unwrap();
    let reports = support_sweep(&model, 0.0, &targets, epsilon, 100_000, 42).unwrap();
    let hits: Vec<u64> = reports.iter().map(|r| r.hits).collect();
    println!(
        "κ = {kappa}, ε = {epsilon} (path scale {:.3}): hits {:?} for {:?}",
        probe.path_scale(),
        hits,
        STANDARD_TARGETS
    );
    for (name, r) in STANDARD_TARGETS.iter().zip(&reports) {
        assert!(r.hits >= 1 && r.wilson_lo > 0.0, "{name}: {} hits", r.hits);
    }
}

#[test]
fn smooth_kernel_sweep_hits_every_tube() {
    sweep_with_absolute_epsilon(0.25, 0.25);
}

#[test]
fn rough_kernel_sweep_hits_every_tube() {
    sweep_with_absolute_epsilon(-0.25, 0.5);
}

#[test]
fn one_target_sweep_is_a_tube_probability() {
    let model = exp_ou_gamma(0.25, 0.5);
    let probe = TubeProbe::freeze(&model, 1.0 / 32.0, 0.25, 5).unwrap();
    let zero = standard_targets(&probe.window()).unwrap().remove(0);
    let sweep = support_sweep(&model, 0.25, std::slice::from_ref(&zero), 0.3, 5000, 5).unwrap();
    let single = tube_probability(&model, 0.25, &zero, 0.3, 5000, 5).unwrap();
    assert_eq!(sweep, vec![single]);
}

#[test]
fn deviations_replay_the_fresh_driver_streams() {
    let model = exp_ou_gamma(-0.25, 0.5);
    let dt = 1.0 / 32.0;
    let probe = TubeProbe::freeze(&model, dt, 0.5, 6).unwrap();
    let grid = model.grid(dt).unwrap();
    let path = PathSimulator::new(&model, grid).unwrap().trial(frozen_seed(6), 0).unwrap();
    let sampler = FreshDriverSampler::new(&model, &FrozenState::from_path(&path), 0.5).unwrap();
    let target = standard_targets(&probe.window()).unwrap().remove(3);
    let seed = driver_seed(6, 3);
    let got = probe.sup_deviations(&target, 200, seed).unwrap();
    for (k, d) in got.iter().enumerate() {
        let z = sampler.sample(seed, k as u64);
        let own = z.iter().zip(&target.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert_eq!(*d, own);
    }
}

#[test]
fn coarser_monitoring_never_loses_hits() {
    let model = exp_ou_gamma(0.25, 0.5);
    let dt = 1.0 / 64.0;
    let grid = model.grid(dt).unwrap();
    let path = PathSimulator::new(&model, grid).unwrap().trial(frozen_seed(7), 0).unwrap();
    let sampler = FreshDriverSampler::new(&model, &FrozenState::from_path(&path), 0.0).unwrap();
    let eps = 0.3;
    let (mut fine, mut coarse) = (0u64, 0u64);
    for k in 0..20_000 {
        let z = sampler.sample(driver_seed(7, 0), k);
        let inside = |step: usize| z.iter().step_by(step).all(|v| v.abs() < eps);
        let (f, c) = (inside(1), inside(4));
        assert!(!f || c);
        fine += f as u64;
        coarse += c as u64;
    }
    assert!(fine <= coarse);
    assert!(fine > 0);
}

#[test]
fn wide_tube_catches_almost_everything() {
    let model = exp_ou_gamma(-0.25, 0.5);
    let probe = TubeProbe::freeze(&model, 1.0 / 64.0, 0.0, 8).unwrap();
    let target = standard_targets(&probe.window()).unwrap().remove(4);
    let mean_bound = probe.mean().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eps = target.sup_norm() + 6.0 * probe.path_scale() + mean_bound;
    let r = probe.probe(&target, eps, 20_000, driver_seed(8, 0)).unwrap();
    assert!(r.p_hat >= 0.99, "{}", r.p_hat);
}

#[test]
fn shorter_window_has_at_least_as_many_hits() {
    let model = exp_ou_gamma(0.25, 0.0);
    let probe = TubeProbe::freeze(&model, 1.0 / 64.0, 0.0, 9).unwrap();
    let window = probe.window();
    let full = standard_targets(&window).unwrap().remove(1);
    let prefix_grid = window.slice(0, 40).unwrap();
    let prefix = SamplePath::new(prefix_grid, full.values[..41].to_vec(), PathRole::Target).unwrap();
    let seed = driver_seed(9, 0);
    let long = probe.probe(&full, 0.4, 20_000, seed).unwrap();
    let short = probe.probe(&prefix, 0.4, 20_000, seed).unwrap();
    assert!(long.hits <= short.hits, "{} vs {}", long.hits, short.hits);
    assert!(short.hits > long.hits);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let model = exp_ou_gamma(0.25, 0.5);
    let probe = TubeProbe::freeze(&model, 1.0 / 64.0, 0.0, 10).unwrap();
    let target = standard_targets(&probe.window()).unwrap().remove(3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| probe.probe(&target, 0.3, 10_000, driver_seed(10, 0)).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn stochastic_exponential_never_reaches_the_floor() {
    let r = counterexample_probe(20_000, 11).unwrap();
    assert!(r.all_paths_positive && r.min_z > 0.0);
    assert_eq!(r.below_floor.hits, 0);
    assert!(r.above_floor.hits >= 1);
    assert_eq!(r.below_floor.n_trials, r.above_floor.n_trials);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn hits_grow_with_epsilon(e1 in 0.05..1.0f64, e2 in 0.05..1.0f64, which in 0usize..5) {
        let model = exp_ou_gamma(-0.25, 0.5);
        let probe = TubeProbe::freeze(&model, 1.0 / 32.0, 0.5, 12).unwrap();
        let target = standard_targets(&probe.window()).unwrap().remove(which);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let a = probe.probe(&target, lo, 2000, driver_seed(12, 0)).unwrap();
        let b = probe.probe(&target, hi, 2000, driver_seed(12, 0)).unwrap();
        prop_assert!(a.hits <= b.hits);
        for r in [&a, &b] {
            prop_assert!(r.hits <= r.n_trials);
            prop_assert!(r.wilson_lo <= r.p_hat && r.p_hat <= r.wilson_hi);
        }
    }
}
