//! One runner per subcommand.

use bss_core::cfs_probe::{counterexample_probe_on, driver_seed, frozen_seed, TubeProbe, TubeProbeReport};
use bss_core::conditional_law::{conditional_law, sample_gaussian, FrozenState};
use bss_core::io::{fmt17, write_columns};
use bss_core::rkhs_density::{approximate_target, build_operator, cherny_two_step};
use bss_core::simulator::{covariance_matrix, PathSimulator, SimulatedPath};
use bss_core::{BssError, SamplePath, SimGrid, ValidatedModel};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, WeightFunction};
use crate::output::{series_csv, Outputs};
use crate::CliError;

/// Outcome of a run that completed but whose result is a failed check.
pub enum Verdict {
    Ok,
    Failed(String),
}

fn validated(cfg: &ExperimentConfig) -> Result<ValidatedModel, CliError> {
    ValidatedModel::new(cfg.bss_model()?).map_err(|e| CliError::Validation(e.to_string()))
}

/// Simulation grid covering `[-M, T]` at the window step, checked to
/// contain the window.
fn sim_grid(cfg: &ExperimentConfig, model: &ValidatedModel) -> Result<(SimGrid, SimGrid), CliError> {
    let window = cfg.window()?;
    let grid = model.grid(window.dt())?;
    if !grid.contains_grid(&window) {
        return Err(CliError::Config(format!(
            "grid: window [{}, {}] does not fall on the simulation grid, which ends at T = {} with dt = {}",
            window.t_start(),
            window.t_end(),
            grid.t_end(),
            grid.dt()
        )));
    }
    Ok((grid, window))
}

fn restrict(path: &SamplePath, window: &SimGrid) -> Result<SamplePath, CliError> {
    let start = path.grid.index_of(window.t_start())?;
    let values = path.values[start..=start + window.n_steps()].to_vec();
    Ok(SamplePath::new(*window, values, path.role)?)
}

fn frozen_path(model: &ValidatedModel, grid: SimGrid, seed: u64) -> Result<SimulatedPath, CliError> {
    Ok(PathSimulator::new(model, grid)?.trial(frozen_seed(seed), 0)?)
}

/// Window points after `t_start`, or the configured times.
fn law_times(window: &SimGrid, times: &Option<Vec<f64>>) -> Vec<f64> {
    times.clone().unwrap_or_else(|| window.times()[1..].to_vec())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn validate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Verdict, CliError> {
    let model = cfg.bss_model()?;
    let report = model.validate()?;
    out.write_json("model.json", &model)?;
    out.write_json("report.json", &report)?;
    for c in report.checks.iter().chain(std::iter::once(&report.truncation)) {
        println!(
            "({}) {}: {} ({})",
            c.id,
            c.name,
            if c.passed { "passed" } else { "FAILED" },
            c.detail
        );
    }
    println!(
        "regularity certificate: alpha = {:.4}, fitted slope = {:.4}",
        report.regularity.alpha, report.regularity.fitted_slope
    );
    Ok(if report.passed {
        Verdict::Ok
    } else {
        Verdict::Failed("model failed validation".into())
    })
}

pub fn simulate(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<Verdict, CliError> {
    let model = validated(cfg)?;
    let (grid, window) = sim_grid(cfg, &model)?;
    let sim = PathSimulator::new(&model, grid)?;
    let files: Vec<Vec<u8>> = (0..cfg.simulate.n_paths)
        .into_par_iter()
        .map(|k| {
            let path = sim.trial(seed, k)?;
            let cols = [
                ("B", restrict(&path.driver_b, &window)?),
                ("sigma", restrict(&path.sigma, &window)?),
                ("Y", restrict(&path.y_part, &window)?),
                ("Z", restrict(&path.z, &window)?),
            ];
            let refs: Vec<(&str, &SamplePath)> = cols.iter().map(|(n, p)| (*n, p)).collect();
            let mut buf = Vec::new();
            write_columns(&mut buf, &refs)?;
            Ok(buf)
        })
        .collect::<Result<_, CliError>>()?;
    for (k, bytes) in files.iter().enumerate() {
        out.write(&format!("path_{k:04}.csv"), bytes)?;
    }
    out.seed("paths", seed);
    Ok(Verdict::Ok)
}

#[derive(Serialize)]
struct CovarianceOutput<'a> {
    t_lower: f64,
    times: &'a [f64],
    sigma_seed: u64,
    matrix: Vec<Vec<f64>>,
}

pub fn covariance(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<Verdict, CliError> {
    let model = validated(cfg)?;
    let (grid, window) = sim_grid(cfg, &model)?;
    let path = frozen_path(&model, grid, seed)?;
    let times = law_times(&window, &cfg.covariance.times);
    let cov = covariance_matrix(&model.kernel, &path.sigma, window.t_start(), &times)?;
    out.write_json(
        "covariance.json",
        &CovarianceOutput {
            t_lower: window.t_start(),
            times: &times,
            sigma_seed: frozen_seed(seed),
            matrix: rows(&cov),
        },
    )?;
    out.write("sigma.csv", series_csv(window.times(), &restrict(&path.sigma, &window)?.values).as_bytes())?;
    out.seed("frozen", frozen_seed(seed));
    Ok(Verdict::Ok)
}

pub fn condlaw(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<Verdict, CliError> {
    let model = validated(cfg)?;
    let (grid, window) = sim_grid(cfg, &model)?;
    let path = frozen_path(&model, grid, seed)?;
    let frozen = FrozenState::from_path(&path);
    let times = law_times(&window, &cfg.condlaw.times);
    let law = conditional_law(&model, &frozen, window.t_start(), &times)?;
    out.write_json("condlaw.json", &law)?;
    out.seed("frozen", frozen_seed(seed));
    if cfg.condlaw.n_samples > 0 {
        let draws = sample_gaussian(&law, cfg.condlaw.n_samples, driver_seed(seed, 0))?;
        let mut text = String::from("sample");
        for t in &times {
            text.push_str(&format!(",t={}", fmt17(*t)));
        }
        text.push('\n');
        for (r, row) in rows(&draws).iter().enumerate() {
            text.push_str(&r.to_string());
            for v in row {
                text.push(',');
                text.push_str(&fmt17(*v));
            }
            text.push('\n');
        }
        out.write("condlaw_samples.csv", text.as_bytes())?;
        out.seed("samples", driver_seed(seed, 0));
    }
    Ok(Verdict::Ok)
}

#[derive(Serialize)]
struct ChernyOutput {
    delta: f64,
    sup_error: f64,
    grid_residual: f64,
    step1_error: f64,
    a_delta_measure: f64,
    perturbation: f64,
    grid_perturbation: f64,
    perturbation_bound: f64,
    h_hat_file: String,
}

#[derive(Serialize)]
struct RkhsTargetOutput {
    name: String,
    sup_error: f64,
    grid_residual: f64,
    h_hat_file: String,
    cherny: Vec<ChernyOutput>,
}

#[derive(Serialize)]
struct RkhsOutput {
    f: WeightFunction,
    ridge: f64,
    operator_norm: f64,
    targets: Vec<RkhsTargetOutput>,
}

pub fn rkhs(cfg: &ExperimentConfig, seed: Option<u64>, out: &mut Outputs) -> Result<Verdict, CliError> {
    let window = cfg.window()?;
    let kernel = cfg.bss_model()?.kernel;
    let f = match cfg.rkhs.f {
        WeightFunction::Ones => vec![1.0; window.n_points()],
        WeightFunction::Sigma => {
            let seed = seed.ok_or_else(|| CliError::Config("rkhs: f = \"sigma\" needs a seed".into()))?;
            let model = validated(cfg)?;
            let (grid, window) = sim_grid(cfg, &model)?;
            out.seed("frozen", frozen_seed(seed));
            restrict(&frozen_path(&model, grid, seed)?.sigma, &window)?.values
        }
    };
    let op = build_operator(&kernel, &f, &window)?;
    let ridge = cfg.rkhs.ridge.unwrap_or_else(|| op.default_ridge());
    let cells: Vec<f64> = window.times()[..window.n_steps()].to_vec();
    let targets = cfg.targets(&cfg.rkhs.targets)?;
    let mut report = RkhsOutput {
        f: cfg.rkhs.f,
        ridge,
        operator_norm: op.norm(),
        targets: Vec::new(),
    };
    for (spec, target) in cfg.rkhs.targets.iter().zip(&targets) {
        let a = approximate_target(&op, &target.values, ridge)?;
        let h_file = format!("h_hat_{}.csv", spec.name);
        out.write(&h_file, series_csv(cells.iter().copied(), &a.h_hat).as_bytes())?;
        let mut cherny = Vec::new();
        for (d, &delta) in cfg.rkhs.deltas.iter().enumerate() {
            let c = cherny_two_step(&kernel, &f, &target.values, delta, &window)?;
            let file = format!("h_hat_{}_delta{d}.csv", spec.name);
            out.write(&file, series_csv(cells.iter().copied(), &c.h_hat).as_bytes())?;
            cherny.push(ChernyOutput {
                delta,
                sup_error: c.sup_error,
                grid_residual: c.grid_residual,
                step1_error: c.step1_error,
                a_delta_measure: c.a_delta_measure,
                perturbation: c.perturbation,
                grid_perturbation: c.grid_perturbation,
                perturbation_bound: c.perturbation_bound,
                h_hat_file: file,
            });
        }
        println!("{}: sup_error = {:.3e}", spec.name, a.sup_error);
        report.targets.push(RkhsTargetOutput {
            name: spec.name.clone(),
            sup_error: a.sup_error,
            grid_residual: a.grid_residual,
            h_hat_file: h_file,
            cherny,
        });
    }
    out.write_json("rkhs.json", &report)?;
    Ok(Verdict::Ok)
}

#[derive(Serialize)]
struct ProbeEntry {
    name: String,
    #[serde(flatten)]
    report: TubeProbeReport,
}

#[derive(Serialize)]
struct ProbeOutput {
    t_lower: f64,
    path_scale: f64,
    epsilon: f64,
    probes: Vec<ProbeEntry>,
}

pub fn probe(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<Verdict, CliError> {
    let model = validated(cfg)?;
    let (_, window) = sim_grid(cfg, &model)?;
    let probe = TubeProbe::freeze(&model, window.dt(), window.t_start(), seed)?;
    let epsilon = match cfg.probe.epsilon {
        Some(e) => e,
        None => cfg.probe.epsilon_factor * probe.path_scale(),
    };
    out.seed("frozen", probe.frozen_seed());
    let targets = cfg.targets(&cfg.probe.targets)?;
    let mut summary = String::from("name,epsilon,n_trials,hits,p_hat,wilson_lo,wilson_hi\n");
    let mut probes = Vec::new();
    for (k, (spec, target)) in cfg.probe.targets.iter().zip(&targets).enumerate() {
        let ds = driver_seed(seed, k as u64);
        let r = probe.probe(target, epsilon, cfg.probe.n_trials, ds)?;
        out.seed(&format!("driver.{}", spec.name), ds);
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            spec.name,
            fmt17(r.epsilon),
            r.n_trials,
            r.hits,
            fmt17(r.p_hat),
            fmt17(r.wilson_lo),
            fmt17(r.wilson_hi)
        ));
        println!(
            "{}: hits {}/{} (p = {:.3e}, 95% [{:.3e}, {:.3e}])",
            spec.name, r.hits, r.n_trials, r.p_hat, r.wilson_lo, r.wilson_hi
        );
        probes.push(ProbeEntry {
            name: spec.name.clone(),
            report: r,
        });
    }
    out.write("probe_summary.csv", summary.as_bytes())?;
    out.write_json(
        "probe.json",
        &ProbeOutput {
            t_lower: window.t_start(),
            path_scale: probe.path_scale(),
            epsilon,
            probes,
        },
    )?;
    Ok(Verdict::Ok)
}

pub fn counterexample(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<Verdict, CliError> {
    let c = &cfg.counterexample;
    let r = counterexample_probe_on(c.n_trials, seed, c.horizon, c.n_steps)?;
    out.write_json("counterexample.json", &r)?;
    out.seed("counterexample", seed);
    println!(
        "below floor: {} hits; above floor: {} hits; min Z = {:.4e}; Riemann paths at or below 0: {}",
        r.below_floor.hits, r.above_floor.hits, r.min_z, r.riemann_nonpositive_paths
    );
    if r.below_floor.hits > 0 || !r.all_paths_positive {
        return Ok(Verdict::Failed("a counterexample path reached the floor".into()));
    }
    Ok(Verdict::Ok)
}

impl From<BssError> for CliError {
    fn from(e: BssError) -> Self {
        CliError::Core(e)
    }
}
