//! Conditional Gaussian law of `Z' = Z - Z_{t̲}` on `[t̲, T]` given the past of
//! `B` and the whole paths of `Y` and `σ`.
//!
//! With `(Y, σ)` frozen, the only randomness left is the future of `B`, so
//! `Z'` is Gaussian with mean `Y'` (the past contribution) and covariance
//! `(1 - β²) ∫ g(t_j - s) g(t_k - s) σ_s² ds` over `[t̲, t_j ∧ t_k]`. The
//! factor `1 - β²` is the variance rate of `B = √(1-β²) W̄⊥`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convolution::{CausalConvolution, ConvScratch};
use crate::error::{BssError, Result};
use crate::grid::{SamplePath, SimGrid};
use crate::kernels::CellWeights;
use crate::linalg::{cholesky_with_jitter, matrix_rows};
use crate::model::BssModel;
use crate::rng::{fill_normals, stream, Domain};
use crate::simulator::{covariance_matrix, SimulatedPath};

/// Relative pivot below which a covariance counts as singular.
const SINGULAR_PIVOT: f64 = 1e-10;

/// The frozen ingredients: `σ` and `Y` on the whole grid, and the increments
/// of `B`, of which only those before `t̲` are ever read.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenState {
    pub sigma: SamplePath,
    pub y: SamplePath,
    pub b_increments: Vec<f64>,
}

impl FrozenState {
    pub fn new(sigma: SamplePath, y: SamplePath, b_increments: Vec<f64>) -> Result<Self> {
        if sigma.grid != y.grid || b_increments.len() != sigma.grid.n_steps() {
            return Err(BssError::domain(
                "sigma, Y and the B increments must live on the same grid",
            ));
        }
        Ok(Self {
            sigma,
            y,
            b_increments,
        })
    }

    pub fn from_path(path: &SimulatedPath) -> Self {
        Self {
            sigma: path.sigma.clone(),
            y: path.y_part.clone(),
            b_increments: path.b_increments(),
        }
    }

    pub fn grid(&self) -> &SimGrid {
        &self.sigma.grid
    }
}

fn noise_weights(model: &BssModel, grid: &SimGrid) -> Result<CellWeights> {
    CellWeights::for_noise(&model.kernel, grid.dt(), grid.n_steps())
}

/// `Σ_{j < l} ĝ((i - j) dt) σ_j ΔB_j`.
fn past_sum(weights: &CellWeights, frozen: &FrozenState, lower: usize, i: usize) -> f64 {
    (0..lower)
        .map(|j| weights.lag(i - j) * frozen.sigma.values[j] * frozen.b_increments[j])
        .sum()
}

/// `Y'_t = Y_t - Z_{t̲} + Σ_{s_j < t̲} ĝ(t - s_j) σ(s_j) ΔB_j`.
pub fn past_contribution(
    model: &BssModel,
    frozen: &FrozenState,
    t_lower: f64,
    t: f64,
) -> Result<f64> {
    let grid = *frozen.grid();
    let lower = grid.index_of(t_lower)?;
    let i = grid.index_of(t)?;
    if i < lower {
        return Err(BssError::domain(format!("t = {t} precedes t_lower = {t_lower}")));
    }
    let weights = noise_weights(model, &grid)?;
    let z_lower = frozen.y.values[lower] + past_sum(&weights, frozen, lower, lower);
    Ok(frozen.y.values[i] - z_lower + past_sum(&weights, frozen, lower, i))
}

/// `Y'` at every grid point from `t̲` to the end of the grid, by FFT.
pub fn past_contribution_window(
    model: &BssModel,
    frozen: &FrozenState,
    t_lower: f64,
) -> Result<Vec<f64>> {
    let grid = *frozen.grid();
    let lower = grid.index_of(t_lower)?;
    let n = grid.n_steps();
    let weights = noise_weights(model, &grid)?;
    let mut x = vec![0.0; n];
    for j in 0..lower {
        x[j] = frozen.sigma.values[j] * frozen.b_increments[j];
    }
    let conv = CausalConvolution::new(weights.as_slice(), n).apply(&x);
    let z_lower = frozen.y.values[lower] + conv[lower];
    Ok((lower..=n)
        .map(|i| frozen.y.values[i] - z_lower + conv[i])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub cov: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(times: Vec<f64>, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if times.len() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(BssError::invalid("law dimensions disagree"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(BssError::numerical("law has non-finite entries"));
        }
        Ok(Self { times, mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Law of `Z'` at `times` given the frozen state.
pub fn conditional_law(
    model: &BssModel,
    frozen: &FrozenState,
    t_lower: f64,
    times: &[f64],
) -> Result<GaussianLaw> {
    if let Some(&t) = times.iter().find(|&&t| !(t > t_lower) || t > model.horizon + 1e-12) {
        return Err(BssError::domain(format!(
            "conditional times must lie in (t_lower, T] = ({t_lower}, {}], got {t}",
            model.horizon
        )));
    }
    let grid = *frozen.grid();
    let lower = grid.index_of(t_lower)?;
    let weights = noise_weights(model, &grid)?;
    let z_lower = frozen.y.values[lower] + past_sum(&weights, frozen, lower, lower);
    let mean = times
        .iter()
        .map(|&t| {
            let i = grid.index_of(t)?;
            Ok(frozen.y.values[i] - z_lower + past_sum(&weights, frozen, lower, i))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cov = covariance_matrix(&model.kernel, &frozen.sigma, t_lower, times)?;
    let rate = 1.0 - model.beta * model.beta;
    if rate != 1.0 {
        cov *= rate;
    }
    GaussianLaw::new(times.to_vec(), mean, cov)
}

/// `n` draws as the rows of an `n × d` matrix; row `r` reads stream `r`.
pub fn sample_gaussian(law: &GaussianLaw, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = law.dim();
    let factor = cholesky_with_jitter(&law.cov)?;
    let mean = DVector::from_column_slice(&law.mean);
    let mut out = DMatrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for r in 0..n {
        fill_normals(&mut stream(seed, Domain::Gaussian, r as u64), &mut z);
        let x = &factor * DVector::from_column_slice(&z) + &mean;
        out.set_row(r, &x.transpose());
    }
    Ok(out)
}

pub fn log_density(law: &GaussianLaw, x: &[f64]) -> Result<f64> {
    let d = law.dim();
    if x.len() != d {
        return Err(BssError::invalid(format!("point has {} entries, law has {d}", x.len())));
    }
    let factor = cholesky_with_jitter(&law.cov)?;
    let scale = law.cov.trace() / d as f64;
    if (0..d).any(|i| factor[(i, i)] * factor[(i, i)] <= SINGULAR_PIVOT * scale) {
        return Err(BssError::Numerical {
            message: "covariance is singular; the law has no density".into(),
            estimate: (0..d).map(|i| factor[(i, i)]).fold(f64::INFINITY, f64::min),
            error_bound: (SINGULAR_PIVOT * scale).sqrt(),
        });
    }
    let diff = DVector::from_iterator(d, x.iter().zip(&law.mean).map(|(a, b)| a - b));
    let y = factor
        .solve_lower_triangular(&diff)
        .ok_or_else(|| BssError::numerical("triangular solve failed"))?;
    let log_det: f64 = (0..d).map(|i| factor[(i, i)].ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + y.norm_squared()))
}

/// Draws `Z'` on every grid point of `[t̲, end]` with fresh future
/// increments of `B`: the exact conditional law of the discretized process.
pub struct FreshDriverSampler {
    mean: Vec<f64>,
    scaled_sigma: Vec<f64>,
    conv: CausalConvolution,
}

impl FreshDriverSampler {
    pub fn new(model: &BssModel, frozen: &FrozenState, t_lower: f64) -> Result<Self> {
        let grid = *frozen.grid();
        let lower = grid.index_of(t_lower)?;
        let cells = grid.n_steps() - lower;
        if cells == 0 {
            return Err(BssError::domain("t_lower is the last grid point"));
        }
        let mean = past_contribution_window(model, frozen, t_lower)?;
        let rate = (1.0 - model.beta * model.beta).sqrt() * grid.dt().sqrt();
        let scaled_sigma = frozen.sigma.values[lower..lower + cells]
            .iter()
            .map(|s| s * rate)
            .collect();
        let weights = CellWeights::for_noise(&model.kernel, grid.dt(), cells)?;
        Ok(Self {
            mean,
            scaled_sigma,
            conv: CausalConvolution::new(weights.as_slice(), cells),
        })
    }

    /// Number of monitored points, `t̲` included.
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Writes trial `index` into `out`; `noise` is a work buffer.
    pub fn sample_into(
        &self,
        seed: u64,
        index: u64,
        out: &mut [f64],
        noise: &mut Vec<f64>,
        scratch: &mut ConvScratch,
    ) {
        noise.resize(self.scaled_sigma.len(), 0.0);
        fill_normals(&mut stream(seed, Domain::TubeTrial, index), noise);
        for (x, s) in noise.iter_mut().zip(&self.scaled_sigma) {
            *x *= s;
        }
        self.conv.apply_with(noise, out, scratch);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }

    pub fn sample(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.sample_into(seed, index, &mut out, &mut Vec::new(), &mut ConvScratch::default());
        out
    }
}
