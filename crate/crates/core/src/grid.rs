//! Uniform time grids and sampled paths.

use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};

/// Relative slack (in units of `dt`) when matching a time to a grid point.
const ON_GRID_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl SimGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps < 1 {
            return Err(BssError::invalid("grid needs n_steps >= 1"));
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_end > t_start) {
            return Err(BssError::invalid(format!(
                "grid needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// Grid on `[t_end - k dt, t_end]` with the smallest `k` such that it
    /// reaches back to `t_start_max` or earlier.
    pub fn covering(t_start_max: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(BssError::invalid(format!("dt must be > 0, got {dt}")));
        }
        let n_steps = (((t_end - t_start_max) / dt) - 1e-9).ceil().max(1.0) as usize;
        Self::new(t_end - n_steps as f64 * dt, t_end, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|i| self.time(i)).collect()
    }

    /// Index of the grid point at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t_start) / self.dt();
        let i = x.round();
        if (x - i).abs() > ON_GRID_SLACK || i < 0.0 || i > self.n_steps as f64 {
            return Err(BssError::domain(format!(
                "time {t} is not a point of the grid [{}, {}] with dt = {}",
                self.t_start,
                self.t_end,
                self.dt()
            )));
        }
        Ok(i as usize)
    }

    /// The sub-grid from point `from` to point `to` (inclusive).
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if to <= from || to > self.n_steps {
            return Err(BssError::domain(format!(
                "invalid sub-grid [{from}, {to}] of a grid with {} steps",
                self.n_steps
            )));
        }
        Self::new(self.time(from), self.time(to), to - from)
    }

    /// True when both grids share the step and `other`'s points are points of
    /// `self`.
    pub fn contains_grid(&self, other: &SimGrid) -> bool {
        (self.dt() - other.dt()).abs() <= ON_GRID_SLACK * self.dt()
            && self.index_of(other.t_start).is_ok()
            && self.index_of(other.t_end).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRole {
    DriverB,
    DriverWbar,
    Sigma,
    DriftPart,
    YPart,
    Z,
    Target,
}

impl PathRole {
    pub fn name(&self) -> &'static str {
        match self {
            PathRole::DriverB => "driver_B",
            PathRole::DriverWbar => "driver_Wbar",
            PathRole::Sigma => "sigma",
            PathRole::DriftPart => "drift_part",
            PathRole::YPart => "Y_part",
            PathRole::Z => "Z",
            PathRole::Target => "target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub grid: SimGrid,
    pub values: Vec<f64>,
    pub role: PathRole,
}

impl SamplePath {
    pub fn new(grid: SimGrid, values: Vec<f64>, role: PathRole) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(BssError::invalid(format!(
                "path has {} values for a grid of {} points",
                values.len(),
                grid.n_points()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(BssError::numerical(format!(
                "non-finite {} value at grid index {i}",
                role.name()
            )));
        }
        Ok(Self { grid, values, role })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: SimGrid, role: PathRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().into_iter().map(f).collect(), role)
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.index_of(t)?])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
