//! Experiment configuration.
//!
//! A config file is read, then resolved: CSV inputs are loaded inline, the
//! seed override is applied and defaults are filled in. The resolved config
//! is written next to the outputs and is all that is needed to rerun.

use std::fs;
use std::path::{Path, PathBuf};

use bss_core::cfs_probe::{standard_targets, DEFAULT_EPSILON_FACTOR, STANDARD_TARGETS};
use bss_core::io::{read_kernel_csv, read_target_csv};
use bss_core::model::DEFAULT_TRUNCATION_TOL;
use bss_core::{BssModel, DriftSpec, IntermittencyModel, Kernel, PathRole, SamplePath, SimGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; `--seed` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Where outputs go; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub covariance: CovarianceConfig,
    #[serde(default)]
    pub condlaw: CondlawConfig,
    #[serde(default)]
    pub rkhs: RkhsConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
}

/// Same fields as [`BssModel`], except that the truncation may be left out
/// and the kernel may come from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    /// Two-column `t,value` file for a tabulated kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_csv: Option<PathBuf>,
    pub sigma: IntermittencyModel,
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub beta: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default = "default_truncation_tol")]
    pub truncation_tol: f64,
}

fn default_truncation_tol() -> f64 {
    DEFAULT_TRUNCATION_TOL
}

/// Observation window `[t_start, t_end]`; its step is the simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_paths: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n_paths: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceConfig {
    /// Defaults to every window point after `t_start`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondlawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Draws from the law written to `condlaw_samples.csv`.
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFunction {
    Ones,
    /// The frozen volatility path on the window.
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RkhsConfig {
    pub f: WeightFunction,
    pub targets: Vec<TargetSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    /// Thresholds of the two-step construction; empty skips it.
    pub deltas: Vec<f64>,
}

impl Default for RkhsConfig {
    fn default() -> Self {
        Self {
            f: WeightFunction::Ones,
            targets: vec![TargetSpec::named("hat")],
            ridge: None,
            deltas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub targets: Vec<TargetSpec>,
    /// Absolute tube half-width; wins over `epsilon_factor`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Half-width as a multiple of the path scale.
    pub epsilon_factor: f64,
    pub n_trials: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            targets: STANDARD_TARGETS.iter().map(|n| TargetSpec::named(n)).collect(),
            epsilon: None,
            epsilon_factor: DEFAULT_EPSILON_FACTOR,
            n_trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub n_trials: u64,
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            n_trials: 100_000,
            horizon: bss_core::cfs_probe::COUNTEREXAMPLE_HORIZON,
            n_steps: bss_core::cfs_probe::COUNTEREXAMPLE_STEPS,
        }
    }
}

/// A target on the window: a built-in shape, a CSV file, or inline values
/// at the window points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl TargetSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            csv: None,
            values: None,
        }
    }
}

/// Built-in targets: the standard sweep plus `hat`, the tent rising to 1 at
/// the middle of the window.
pub const BUILTIN_TARGETS: [&str; 6] = ["zero", "up", "down", "sine", "zigzag", "hat"];

pub fn builtin_target(name: &str, window: &SimGrid) -> Option<SamplePath> {
    if name == "hat" {
        let (t0, len) = (window.t_start(), window.t_end() - window.t_start());
        return SamplePath::from_fn(*window, PathRole::Target, |t| {
            1.0 - (2.0 * (t - t0) / len - 1.0).abs()
        })
        .ok();
    }
    let k = STANDARD_TARGETS.iter().position(|n| *n == name)?;
    standard_targets(window).ok().map(|mut v| v.swap_remove(k))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Loads CSV inputs relative to `base`, inlines them and checks targets
    /// and grid against the model.
    pub fn resolve(mut self, base: &Path) -> Result<Self, CliError> {
        if let Some(path) = self.model.kernel_csv.take() {
            if self.model.kernel.is_some() {
                return Err(CliError::Config(
                    "model: set either `kernel` or `kernel_csv`, not both".into(),
                ));
            }
            let file = open(&base.join(&path))?;
            self.model.kernel = Some(read_kernel_csv(file)?);
        }
        if self.model.truncation.is_none() {
            self.model.truncation = Some(self.bss_model()?.required_truncation()?);
        }
        let window = self.window()?;
        for spec in self.rkhs.targets.iter_mut().chain(self.probe.targets.iter_mut()) {
            resolve_target(spec, &window, base)?;
        }
        Ok(self)
    }

    pub fn bss_model(&self) -> Result<BssModel, CliError> {
        let m = &self.model;
        let Some(kernel) = m.kernel.clone() else {
            return Err(CliError::Config("model: missing `kernel` (or `kernel_csv`)".into()));
        };
        let mut model = BssModel::new(kernel, m.sigma.clone(), m.horizon)?
            .with_mu(m.mu)
            .with_beta(m.beta)
            .with_drift(m.drift.clone());
        model.truncation_tol = m.truncation_tol;
        model.truncation = match m.truncation {
            Some(t) => t,
            None => model.required_truncation()?,
        };
        Ok(model)
    }

    pub fn window(&self) -> Result<SimGrid, CliError> {
        let g = self.grid;
        let window = SimGrid::new(g.t_start, g.t_end, g.n_steps)
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        if g.t_end > self.model.horizon + 1e-12 {
            return Err(CliError::Config(format!(
                "grid: t_end = {} exceeds the model horizon {}",
                g.t_end, self.model.horizon
            )));
        }
        Ok(window)
    }

    /// Targets of a resolved config as paths on the window.
    pub fn targets(&self, specs: &[TargetSpec]) -> Result<Vec<SamplePath>, CliError> {
        let window = self.window()?;
        specs
            .iter()
            .map(|s| {
                let values = s.values.clone().expect("resolved targets carry values");
                Ok(SamplePath::new(window, values, PathRole::Target)?)
            })
            .collect()
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("no seed: set `seed` in the config or pass --seed".into()))
    }
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))
}

fn resolve_target(spec: &mut TargetSpec, window: &SimGrid, base: &Path) -> Result<(), CliError> {
    let path = match (spec.csv.take(), &spec.values) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(format!(
                "target `{}`: set either `csv` or `values`, not both",
                spec.name
            )))
        }
        (Some(csv), None) => {
            let path = read_target_csv(open(&base.join(&csv))?)?;
            if path.grid != *window {
                return Err(CliError::Config(format!(
                    "target `{}`: {} is not sampled on the window grid",
                    spec.name,
                    csv.display()
                )));
            }
            path
        }
        (None, Some(values)) => SamplePath::new(*window, values.clone(), PathRole::Target)
            .map_err(|e| CliError::Config(format!("target `{}`: {e}", spec.name)))?,
        (None, None) => builtin_target(&spec.name, window).ok_or_else(|| {
            CliError::Config(format!(
                "unknown target `{}`; built-ins are {}",
                spec.name,
                BUILTIN_TARGETS.join(", ")
            ))
        })?,
    };
    spec.values = Some(path.values);
    Ok(())
}
