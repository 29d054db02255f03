//! Monte Carlo tube probabilities given the frozen past.
//!
//! A probe freezes one realization of `(Y, σ)` and of `B` before `t̲`, then
//! redraws the future of `B` many times and counts the trials whose
//! `Z' = Z - Z_{t̲}` stays within `ε` of a target at every grid point.
//! Trial `k` reads stream `k`, and hits are reduced in trial order, so
//! reports do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditional_law::{FreshDriverSampler, FrozenState};
use crate::convolution::ConvScratch;
use crate::error::{BssError, Result};
use crate::grid::{PathRole, SamplePath, SimGrid};
use crate::model::ValidatedModel;
use crate::rng::{derive_seed, fill_normals, stream, Domain};
use crate::simulator::{variance_profile, PathSimulator};
use crate::stats::{wilson_interval, Z_95};

/// Default tube half-width relative to the path scale.
pub const DEFAULT_EPSILON_FACTOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeProbeReport {
    pub target: SamplePath,
    pub epsilon: f64,
    pub n_trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Seed of the frozen `(Y, σ, past B)`; absent when nothing is frozen.
    pub frozen_seed: Option<u64>,
    pub driver_seed: u64,
    pub model_hash: String,
    /// Simulation grid.
    pub grid: SimGrid,
}

impl TubeProbeReport {
    fn new(
        target: SamplePath,
        epsilon: f64,
        deviations: &[f64],
        frozen_seed: Option<u64>,
        driver_seed: u64,
        model_hash: String,
        grid: SimGrid,
    ) -> Self {
        let n_trials = deviations.len() as u64;
        let hits = deviations.iter().filter(|&&d| d < epsilon).count() as u64;
        let (wilson_lo, wilson_hi) = wilson_interval(hits, n_trials, Z_95);
        Self {
            target,
            epsilon,
            n_trials,
            hits,
            p_hat: if n_trials == 0 { 0.0 } else { hits as f64 / n_trials as f64 },
            wilson_lo,
            wilson_hi,
            frozen_seed,
            driver_seed,
            model_hash,
            grid,
        }
    }
}

/// Seed of the frozen state under a probe seed.
pub fn frozen_seed(seed: u64) -> u64 {
    derive_seed(seed, 0)
}

/// Driver seed of the `k`-th target under a probe seed.
pub fn driver_seed(seed: u64, k: u64) -> u64 {
    derive_seed(seed, 1 + k)
}

/// A frozen conditioning state ready to be probed with many targets.
pub struct TubeProbe {
    sampler: FreshDriverSampler,
    grid: SimGrid,
    lower: usize,
    frozen_seed: u64,
    model_hash: String,
    variance: Vec<f64>,
}

impl TubeProbe {
    /// Simulates the frozen state on the grid of step `dt` covering
    /// `[-M, T]`; `t_lower` must be one of its points.
    pub fn freeze(model: &ValidatedModel, dt: f64, t_lower: f64, seed: u64) -> Result<Self> {
        let grid = model.grid(dt)?;
        let lower = grid.index_of(t_lower)?;
        if lower >= grid.n_steps() {
            return Err(BssError::domain("t_lower must precede T"));
        }
        let frozen_seed = frozen_seed(seed);
        let path = PathSimulator::new(model, grid)?.trial(frozen_seed, 0)?;
        let frozen = FrozenState::from_path(&path);
        let sampler = FreshDriverSampler::new(model, &frozen, t_lower)?;
        let rate = 1.0 - model.beta * model.beta;
        let variance = variance_profile(&model.kernel, &frozen.sigma, t_lower)?
            .into_iter()
            .map(|v| v * rate)
            .collect();
        Ok(Self {
            sampler,
            grid,
            lower,
            frozen_seed,
            model_hash: model.hash(),
            variance,
        })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    /// The monitored window `[t̲, T]` as a grid.
    pub fn window(&self) -> SimGrid {
        self.grid
            .slice(self.lower, self.grid.n_steps())
            .expect("t_lower precedes T")
    }

    /// Conditional mean `Y'` on the window.
    pub fn mean(&self) -> &[f64] {
        self.sampler.mean()
    }

    /// `max_t √Σ_{t,t}` over the window for the frozen `σ`.
    pub fn path_scale(&self) -> f64 {
        self.variance.iter().fold(0.0_f64, |m, v| m.max(*v)).sqrt()
    }

    pub fn frozen_seed(&self) -> u64 {
        self.frozen_seed
    }

    fn target_offset(&self, target: &SamplePath) -> Result<usize> {
        let window = self.window();
        let tg = target.grid;
        if !self.grid.contains_grid(&tg) {
            return Err(BssError::domain(format!(
                "target grid [{}, {}] with dt = {} is not part of the simulation grid",
                tg.t_start(),
                tg.t_end(),
                tg.dt()
            )));
        }
        let start = self.grid.index_of(tg.t_start())?;
        if start != self.lower {
            return Err(BssError::domain(format!(
                "target starts at {} but the window starts at {}",
                tg.t_start(),
                window.t_start()
            )));
        }
        let scale = target.sup_norm().max(1.0);
        if target.values[0].abs() > 1e-12 * scale {
            return Err(BssError::invalid(format!(
                "target must vanish at t_lower, got {}",
                target.values[0]
            )));
        }
        Ok(0)
    }

    /// `max_i |Z'(t_i) - target(t_i)|` over the target's points for every
    /// trial, in trial order.
    pub fn sup_deviations(&self, target: &SamplePath, n_trials: u64, driver_seed: u64) -> Result<Vec<f64>> {
        self.target_offset(target)?;
        let m = target.values.len();
        Ok((0..n_trials)
            .into_par_iter()
            .map_init(
                || (vec![0.0; self.sampler.len()], Vec::new(), ConvScratch::default()),
                |(path, noise, scratch), k| {
                    self.sampler.sample_into(driver_seed, k, path, noise, scratch);
                    path[..m]
                        .iter()
                        .zip(&target.values)
                        .fold(0.0_f64, |d, (z, t)| d.max((z - t).abs()))
                },
            )
            .collect())
    }

    pub fn probe(
        &self,
        target: &SamplePath,
        epsilon: f64,
        n_trials: u64,
        driver_seed: u64,
    ) -> Result<TubeProbeReport> {
        if !(epsilon > 0.0) {
            return Err(BssError::invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        let deviations = self.sup_deviations(target, n_trials, driver_seed)?;
        Ok(TubeProbeReport::new(
            target.clone(),
            epsilon,
            &deviations,
            Some(self.frozen_seed),
            driver_seed,
            self.model_hash.clone(),
            self.grid,
        ))
    }
}

/// Conditional probability that `Z'` stays within `epsilon` of `target`,
/// simulated at the step of the target grid.
pub fn tube_probability(
    model: &ValidatedModel,
    t_lower: f64,
    target: &SamplePath,
    epsilon: f64,
    n_trials: u64,
    seed: u64,
) -> Result<TubeProbeReport> {
    let probe = TubeProbe::freeze(model, target.grid.dt(), t_lower, seed)?;
    probe.probe(target, epsilon, n_trials, driver_seed(seed, 0))
}

/// One report per target, all against the same frozen state; target `k`
/// uses driver seed `driver_seed(seed, k)`.
pub fn support_sweep(
    model: &ValidatedModel,
    t_lower: f64,
    targets: &[SamplePath],
    epsilon: f64,
    n_trials: u64,
    seed: u64,
) -> Result<Vec<TubeProbeReport>> {
    let Some(first) = targets.first() else {
        return Ok(Vec::new());
    };
    let probe = TubeProbe::freeze(model, first.grid.dt(), t_lower, seed)?;
    targets
        .iter()
        .enumerate()
        .map(|(k, t)| probe.probe(t, epsilon, n_trials, driver_seed(seed, k as u64)))
        .collect()
}

/// Names of [`standard_targets`], in order.
pub const STANDARD_TARGETS: [&str; 5] = ["zero", "up", "down", "sine", "zigzag"];

/// Targets on `window`, in terms of `τ = (t - t̲) / (T - t̲)`: `0`, `+τ`, `-τ`,
/// `sin(2πτ) / 4` and a zig-zag through `(1/4, 1/2)`, `(3/4, -1/2)`.
pub fn standard_targets(window: &SimGrid) -> Result<Vec<SamplePath>> {
    let t0 = window.t_start();
    let len = window.t_end() - t0;
    let tau = move |t: f64| (t - t0) / len;
    let zigzag = |x: f64| {
        if x <= 0.25 {
            2.0 * x
        } else if x <= 0.75 {
            1.0 - 2.0 * x
        } else {
            2.0 * x - 2.0
        }
    };
    let fs: [Box<dyn Fn(f64) -> f64>; 5] = [
        Box::new(|_| 0.0),
        Box::new(move |t| tau(t)),
        Box::new(move |t| -tau(t)),
        Box::new(move |t| (2.0 * std::f64::consts::PI * tau(t)).sin() / 4.0),
        Box::new(move |t| zigzag(tau(t))),
    ];
    fs.iter()
        .map(|f| SamplePath::from_fn(*window, PathRole::Target, f))
        .collect()
}

/// Outcome of the stochastic-exponential counterexample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub below_floor: TubeProbeReport,
    pub above_floor: TubeProbeReport,
    /// Smallest value of the exact `Z = exp(B_t - t/2)` over all trials.
    pub min_z: f64,
    pub all_paths_positive: bool,
    /// Smallest value of the left-point Riemann sum `1 + Σ Z_j ΔB_j`.
    pub riemann_min_z: f64,
    /// Trials whose Riemann sum reaches 0 or below.
    pub riemann_nonpositive_paths: u64,
}

/// Default horizon of the counterexample.
pub const COUNTEREXAMPLE_HORIZON: f64 = 0.5;
/// Default number of grid steps of the counterexample.
pub const COUNTEREXAMPLE_STEPS: usize = 256;

/// `Z_t = 1 + ∫₀^t e^{B_s - s/2} dB_s = e^{B_t - t/2}`, so `Z' = Z - 1 > -1`.
/// The target `-1.2 t/T` with `ε = 0.1` ends below that floor and must get
/// no hits; `+0.2 t/T` with `ε = 0.3` must get some.
pub fn counterexample_probe(n_trials: u64, seed: u64) -> Result<CounterexampleReport> {
    counterexample_probe_on(n_trials, seed, COUNTEREXAMPLE_HORIZON, COUNTEREXAMPLE_STEPS)
}

pub fn counterexample_probe_on(
    n_trials: u64,
    seed: u64,
    horizon: f64,
    n_steps: usize,
) -> Result<CounterexampleReport> {
    let t = horizon;
    let grid = SimGrid::new(0.0, t, n_steps)?;
    let below = SamplePath::from_fn(grid, PathRole::Target, |s| -1.2 * s / t)?;
    let above = SamplePath::from_fn(grid, PathRole::Target, |s| 0.2 * s / t)?;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    struct Trial {
        below: f64,
        above: f64,
        min_z: f64,
        riemann_min: f64,
    }

    let trials: Vec<Trial> = (0..n_trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; n_steps],
            |db, k| {
                fill_normals(&mut stream(seed, Domain::Counterexample, k), db);
                let (mut b, mut riemann) = (0.0, 1.0);
                let mut out = Trial {
                    below: 0.0,
                    above: 0.0,
                    min_z: 1.0,
                    riemann_min: 1.0,
                };
                for (i, z) in db.iter().enumerate() {
                    let inc = z * sqrt_dt;
                    riemann += riemann * inc;
                    b += inc;
                    let s = grid.time(i + 1);
                    let zt = (b - 0.5 * s).exp();
                    out.min_z = out.min_z.min(zt);
                    out.riemann_min = out.riemann_min.min(riemann);
                    out.below = out.below.max((zt - 1.0 - below.values[i + 1]).abs());
                    out.above = out.above.max((zt - 1.0 - above.values[i + 1]).abs());
                }
                out
            },
        )
        .collect();

    let hash = hex::encode(Sha256::digest(
        format!("stochastic-exponential T={t} n_steps={n_steps}").as_bytes(),
    ));
    let below_dev: Vec<f64> = trials.iter().map(|r| r.below).collect();
    let above_dev: Vec<f64> = trials.iter().map(|r| r.above).collect();
    let min_z = trials.iter().map(|r| r.min_z).fold(f64::INFINITY, f64::min);
    let riemann_min_z = trials.iter().map(|r| r.riemann_min).fold(f64::INFINITY, f64::min);
    Ok(CounterexampleReport {
        below_floor: TubeProbeReport::new(below, 0.1, &below_dev, None, seed, hash.clone(), grid),
        above_floor: TubeProbeReport::new(above, 0.3, &above_dev, None, seed, hash, grid),
        all_paths_positive: min_z > 0.0,
        min_z,
        riemann_min_z,
        riemann_nonpositive_paths: trials.iter().filter(|r| r.riemann_min <= 0.0).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::model::{BssModel, IntermittencyModel};

    fn gamma_model() -> ValidatedModel {
        let model = BssModel::new(
            Kernel::gamma(0.25, 1.0).unwrap(),
            IntermittencyModel::ExpOu {
                reversion: 1.0,
                mean_log: 0.0,
                vol_log: 0.5,
            },
            1.0,
        )
        .unwrap();
        ValidatedModel::new(model).unwrap()
    }

    #[test]
    fn monotone_in_epsilon_and_window() {
        let model = gamma_model();
        let probe = TubeProbe::freeze(&model, 1.0 / 32.0, 0.0, 5).unwrap();
        let targets = standard_targets(&probe.window()).unwrap();
        let dev = probe.sup_deviations(&targets[3], 2000, 9).unwrap();
        let short = SamplePath::new(
            probe.window().slice(0, 16).unwrap(),
            targets[3].values[..17].to_vec(),
            PathRole::Target,
        )
        .unwrap();
        let dev_short = probe.sup_deviations(&short, 2000, 9).unwrap();
        for (a, b) in dev.iter().zip(&dev_short) {
            assert!(b <= a);
        }
        let scale = probe.path_scale();
        let r1 = probe.probe(&targets[3], 0.5 * scale, 2000, 9).unwrap();
        let r2 = probe.probe(&targets[3], scale, 2000, 9).unwrap();
        assert!(r1.hits <= r2.hits);
        assert!(r1.wilson_lo <= r1.p_hat && r1.p_hat <= r1.wilson_hi);
    }

    #[test]
    fn wide_tube_captures_everything() {
        let model = gamma_model();
        let probe = TubeProbe::freeze(&model, 1.0 / 32.0, 0.0, 5).unwrap();
        let target = &standard_targets(&probe.window()).unwrap()[1];
        let mean_sup = probe.mean().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let eps = target.sup_norm() + 6.0 * probe.path_scale() + mean_sup;
        let r = probe.probe(target, eps, 1000, 2).unwrap();
        assert!(r.p_hat >= 0.99);
    }

    #[test]
    fn sweep_of_one_zero_target_is_tube_probability() {
        let model = gamma_model();
        let grid = SimGrid::new(0.0, 1.0, 32).unwrap();
        let zero = SamplePath::from_fn(grid, PathRole::Target, |_| 0.0).unwrap();
        let single = tube_probability(&model, 0.0, &zero, 0.3, 500, 17).unwrap();
        let sweep = support_sweep(&model, 0.0, std::slice::from_ref(&zero), 0.3, 500, 17).unwrap();
        assert_eq!(sweep, vec![single]);
    }

    #[test]
    fn off_grid_target_is_rejected() {
        let model = gamma_model();
        let coarse = SimGrid::new(0.0, 1.0, 32).unwrap();
        let fine = SimGrid::new(0.0, 1.0, 48).unwrap();
        let targets = [
            SamplePath::from_fn(coarse, PathRole::Target, |_| 0.0).unwrap(),
            SamplePath::from_fn(fine, PathRole::Target, |_| 0.0).unwrap(),
        ];
        assert!(matches!(
            support_sweep(&model, 0.0, &targets, 0.3, 10, 1),
            Err(BssError::Domain(_))
        ));
        // A step that does not divide [0, T] puts t_lower off the grid.
        let short = SimGrid::new(0.0, 0.99, 32).unwrap();
        let target = SamplePath::from_fn(short, PathRole::Target, |_| 0.0).unwrap();
        assert!(matches!(
            tube_probability(&model, 0.0, &target, 0.3, 10, 1),
            Err(BssError::Domain(_))
        ));
    }

    #[test]
    fn counterexample_separates() {
        let r = counterexample_probe(20_000, 3).unwrap();
        assert_eq!(r.below_floor.hits, 0);
        assert!(r.above_floor.hits > 0);
        assert!(r.all_paths_positive && r.min_z > 0.0);
    }
}
