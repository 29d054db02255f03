//! Sample paths of `Z_t = Y_t + ∫ g(t-s) σ_s dB_s` on a uniform grid, and
//! Gaussian covariance matrices for comparison.
//!
//! The stochastic integral is a left-point Riemann sum over grid cells.
//! Cell `j` covers `[s_j, s_j + dt)`, carries `σ(s_j)` and the increment
//! `ΔB_j`, and enters `Z(t_i)` with weight `ĝ((i - j) dt)` from
//! [`CellWeights::for_noise`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::convolution::{CausalConvolution, ConvScratch};
use crate::error::{BssError, Result};
use crate::grid::{PathRole, SamplePath, SimGrid};
use crate::kernels::{CellWeights, Kernel};
use crate::linalg::{cholesky_with_jitter, symmetrize};
use crate::model::{BssModel, IntermittencyModel, ValidatedModel};
use crate::quadrature::{integrate_left_singular, integrate_pieces, Tolerance};
use crate::rng::{fill_normals, stream, Domain};

/// `σ` on `grid` for trial 0.
pub fn simulate_intermittency(model: &BssModel, grid: &SimGrid, seed: u64) -> Result<SamplePath> {
    intermittency_trial(&model.sigma, grid, seed, 0)
}

pub fn intermittency_trial(
    sigma: &IntermittencyModel,
    grid: &SimGrid,
    seed: u64,
    trial: u64,
) -> Result<SamplePath> {
    let mut rng = stream(seed, Domain::Intermittency, trial);
    let values = sigma.sample_on_grid(grid, &mut rng)?;
    SamplePath::new(*grid, values, PathRole::Sigma)
}

/// One simulated trajectory with all of its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub z: SamplePath,
    /// `B = √(1-β²) W̄⊥`, zero at the first grid point.
    pub driver_b: SamplePath,
    pub driver_wbar: SamplePath,
    pub sigma: SamplePath,
    /// `Y = μ + β ∫ g σ dW̄ + drift`.
    pub y_part: SamplePath,
    pub drift_part: SamplePath,
}

impl SimulatedPath {
    pub fn grid(&self) -> &SimGrid {
        &self.z.grid
    }

    /// Increments `ΔB_j` of the cells.
    pub fn b_increments(&self) -> Vec<f64> {
        self.driver_b.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Simulates trial 0 of `model` on `grid`.
pub fn simulate_path(model: &ValidatedModel, grid: &SimGrid, seed: u64) -> Result<SimulatedPath> {
    PathSimulator::new(model, *grid)?.trial(seed, 0)
}

/// Reusable simulator: kernel weights and FFT plans are built once.
pub struct PathSimulator {
    model: BssModel,
    grid: SimGrid,
    weights: CellWeights,
    noise: CausalConvolution,
    drift: Option<CausalConvolution>,
}

impl PathSimulator {
    pub fn new(model: &ValidatedModel, grid: SimGrid) -> Result<Self> {
        let slack = 1e-6 * grid.dt();
        if grid.t_start() > -model.truncation + slack {
            return Err(BssError::domain(format!(
                "grid starts at {} but the truncation requires a start at or before {}",
                grid.t_start(),
                -model.truncation
            )));
        }
        let n = grid.n_steps();
        let weights = CellWeights::for_noise(&model.kernel, grid.dt(), n)?;
        let noise = CausalConvolution::new(weights.as_slice(), n);
        let drift = match model.drift.parts()? {
            Some((q, _)) => {
                let w = CellWeights::for_drift(q, grid.dt(), n)?;
                Some(CausalConvolution::new(w.as_slice(), n))
            }
            None => None,
        };
        Ok(Self {
            model: model.model().clone(),
            grid,
            weights,
            noise,
            drift,
        })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn weights(&self) -> &CellWeights {
        &self.weights
    }

    /// Trial `index` under `seed`; each ingredient reads its own stream.
    pub fn trial(&self, seed: u64, index: u64) -> Result<SimulatedPath> {
        let grid = self.grid;
        let n = grid.n_steps();
        let sqrt_dt = grid.dt().sqrt();
        let beta = self.model.beta;
        let b_scale = (1.0 - beta * beta).sqrt();
        let mut scratch = ConvScratch::default();

        let sigma = intermittency_trial(&self.model.sigma, &grid, seed, index)?;

        let mut dwbar = vec![0.0; n];
        fill_normals(&mut stream(seed, Domain::DriverCorrelated, index), &mut dwbar);
        let mut db = vec![0.0; n];
        fill_normals(&mut stream(seed, Domain::DriverIndependent, index), &mut db);
        for (x, y) in dwbar.iter_mut().zip(db.iter_mut()) {
            *x *= sqrt_dt;
            *y *= sqrt_dt * b_scale;
        }

        let mut drift_part = vec![0.0; n + 1];
        if let (Some(conv), Some((_, a))) = (&self.drift, self.model.drift.parts()?) {
            let mut rng = stream(seed, Domain::DriftProcess, index);
            let a_vals = a.sample_on_grid(&grid, &mut rng)?;
            let x: Vec<f64> = a_vals[..n].iter().map(|v| v * grid.dt()).collect();
            conv.apply_with(&x, &mut drift_part, &mut scratch);
        }

        let mut y = vec![self.model.mu; n + 1];
        if beta != 0.0 {
            let x: Vec<f64> = (0..n).map(|j| sigma.values[j] * dwbar[j]).collect();
            let mut conv = vec![0.0; n + 1];
            self.noise.apply_with(&x, &mut conv, &mut scratch);
            for (yi, c) in y.iter_mut().zip(&conv) {
                *yi += beta * c;
            }
        }
        for (yi, d) in y.iter_mut().zip(&drift_part) {
            *yi += d;
        }

        let x: Vec<f64> = (0..n).map(|j| sigma.values[j] * db[j]).collect();
        let mut z = vec![0.0; n + 1];
        self.noise.apply_with(&x, &mut z, &mut scratch);
        for (zi, yi) in z.iter_mut().zip(&y) {
            *zi += yi;
        }

        Ok(SimulatedPath {
            z: SamplePath::new(grid, z, PathRole::Z)?,
            driver_b: SamplePath::new(grid, cumulative(&db), PathRole::DriverB)?,
            driver_wbar: SamplePath::new(grid, cumulative(&dwbar), PathRole::DriverWbar)?,
            sigma,
            y_part: SamplePath::new(grid, y, PathRole::YPart)?,
            drift_part: SamplePath::new(grid, drift_part, PathRole::DriftPart)?,
        })
    }
}

fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

fn indices_on(grid: &SimGrid, t_lower: f64, times: &[f64]) -> Result<(usize, Vec<usize>)> {
    let lower = grid.index_of(t_lower)?;
    let idx = times
        .iter()
        .map(|&t| grid.index_of(t))
        .collect::<Result<Vec<_>>>()?;
    if idx.windows(2).any(|w| w[1] < w[0]) {
        return Err(BssError::invalid("times must be sorted"));
    }
    if idx.first().is_some_and(|&i| i < lower) {
        return Err(BssError::domain(format!(
            "times must not precede t_lower = {t_lower}"
        )));
    }
    Ok((lower, idx))
}

/// Covariance of the discretized integral `Σ_{lower ≤ j < i} w_{i-j} σ_j ΔB_j`
/// at `times`: the exact law of the scheme, with `ΔB_j ~ N(0, dt)`.
pub fn scheme_covariance(
    weights: &CellWeights,
    sigma_path: &SamplePath,
    t_lower: f64,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    let grid = sigma_path.grid;
    let (lower, idx) = indices_on(&grid, t_lower, times)?;
    if let Some(&last) = idx.last() {
        if last - lower > weights.max_lag() {
            return Err(BssError::invalid("cell weights do not reach the requested lag"));
        }
    }
    let dt = grid.dt();
    let d = idx.len();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..=a {
            let (ia, ib) = (idx[a], idx[b]);
            let s: f64 = (lower..ib)
                .map(|j| {
                    let s = sigma_path.values[j];
                    weights.lag(ia - j) * weights.lag(ib - j) * s * s
                })
                .sum();
            cov[(a, b)] = s * dt;
            cov[(b, a)] = s * dt;
        }
    }
    Ok(cov)
}

/// `Σ_{j,k} = ∫_{t_lower}^{t_j ∧ t_k} g(t_j - s) g(t_k - s) σ_s² ds` with
/// `σ` piecewise constant on the cells of `sigma_path`.
///
/// Each cell is integrated by adaptive quadrature; the cell touching the
/// kernel origin uses a substitution that removes the power singularity.
/// Cell integrals depend only on the cell position relative to the earlier
/// time and on the lag between the two times, and are shared.
pub fn covariance_matrix(
    kernel: &Kernel,
    sigma_path: &SamplePath,
    t_lower: f64,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    let grid = sigma_path.grid;
    let (lower, idx) = indices_on(&grid, t_lower, times)?;
    let h = grid.dt();
    let d = idx.len();

    // Deepest cell index needed for each lag between two times.
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    for a in 0..d {
        for b in 0..=a {
            let lag = idx[a] - idx[b];
            let r = idx[b] - lower;
            let e = depth.entry(lag).or_insert(0);
            *e = (*e).max(r);
        }
    }
    let tables: BTreeMap<usize, Vec<f64>> = depth
        .into_par_iter()
        .map(|(lag, r_max)| {
            let cells = (1..=r_max)
                .map(|r| cell_product(kernel, r, lag, h))
                .collect::<Result<Vec<_>>>()?;
            Ok((lag, cells))
        })
        .collect::<Result<_>>()?;

    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..=a {
            let (ia, ib) = (idx[a], idx[b]);
            let cells = &tables[&(ia - ib)];
            let s: f64 = (1..=ib - lower)
                .map(|r| {
                    let sg = sigma_path.values[ib - r];
                    sg * sg * cells[r - 1]
                })
                .sum();
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    symmetrize(&mut cov);
    Ok(cov)
}

/// Diagonal of [`covariance_matrix`] at every grid point from `t_lower` to
/// the end of the grid.
pub fn variance_profile(kernel: &Kernel, sigma_path: &SamplePath, t_lower: f64) -> Result<Vec<f64>> {
    kernel.validate()?;
    let grid = sigma_path.grid;
    let lower = grid.index_of(t_lower)?;
    let cells = grid.n_steps() - lower;
    let mut table = vec![0.0; cells + 1];
    let computed = (1..=cells)
        .into_par_iter()
        .map(|r| cell_product(kernel, r, 0, grid.dt()))
        .collect::<Result<Vec<_>>>()?;
    table[1..].copy_from_slice(&computed);
    let x: Vec<f64> = sigma_path.values[lower..lower + cells]
        .iter()
        .map(|s| s * s)
        .collect();
    Ok(CausalConvolution::new(&table, cells).apply(&x))
}

/// `∫_{(r-1)h}^{rh} g(u) g(u + lag h) du`.
fn cell_product(kernel: &Kernel, r: usize, lag: usize, h: f64) -> Result<f64> {
    let lo = (r - 1) as f64 * h;
    let hi = r as f64 * h;
    let shift = lag as f64 * h;
    if r == 1 && lag == 0 {
        return kernel.cumulative_l2(h);
    }
    let f = |u: f64| kernel.value(u) * kernel.value(u + shift);
    let mut points = vec![lo];
    if let Kernel::Tabulated { knots, .. } = kernel {
        for &k in knots {
            for p in [k, k - shift] {
                if p > lo && p < hi {
                    points.push(p);
                }
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.push(hi);
    let tol = Tolerance::new(1e-15 * h * kernel.l2_norm_sq().max(1e-300), 1e-12);
    let result = if r == 1 {
        let head = integrate_left_singular(f, points[0], points[1], tol);
        let tail = integrate_pieces(f, &points[1..], tol);
        crate::quadrature::QuadResult {
            value: head.value + tail.value,
            abs_error: head.abs_error + tail.abs_error,
            converged: head.converged && tail.converged,
        }
    } else {
        integrate_pieces(f, &points, tol)
    };
    result.into_result("covariance cell integral")
}

/// Exact Gaussian law of `∫₀^t g(t-s) σ dB_s` at the points of a grid
/// starting at 0, sampled through a Cholesky factor.
pub struct ExactGaussianSampler {
    grid: SimGrid,
    factor: DMatrix<f64>,
}

impl ExactGaussianSampler {
    pub fn new(kernel: &Kernel, sigma_const: f64, grid: &SimGrid) -> Result<Self> {
        if grid.t_start() != 0.0 {
            return Err(BssError::invalid(format!(
                "exact sampler needs a grid starting at 0, got {}",
                grid.t_start()
            )));
        }
        if !(sigma_const >= 0.0 && sigma_const.is_finite()) {
            return Err(BssError::invalid(format!("sigma must be >= 0, got {sigma_const}")));
        }
        let sigma = SamplePath::new(*grid, vec![sigma_const; grid.n_points()], PathRole::Sigma)?;
        let times: Vec<f64> = (1..grid.n_points()).map(|i| grid.time(i)).collect();
        let cov = covariance_matrix(kernel, &sigma, 0.0, &times)?;
        Ok(Self {
            grid: *grid,
            factor: cholesky_with_jitter(&cov)?,
        })
    }

    pub fn sample(&self, seed: u64, index: u64) -> Result<SamplePath> {
        let d = self.factor.nrows();
        let mut z = vec![0.0; d];
        fill_normals(&mut stream(seed, Domain::Gaussian, index), &mut z);
        let x = &self.factor * DVector::from_vec(z);
        let mut values = Vec::with_capacity(d + 1);
        values.push(0.0);
        values.extend(x.iter());
        SamplePath::new(self.grid, values, PathRole::Z)
    }
}

pub fn exact_gaussian_path(
    kernel: &Kernel,
    sigma_const: f64,
    grid: &SimGrid,
    seed: u64,
) -> Result<SamplePath> {
    ExactGaussianSampler::new(kernel, sigma_const, grid)?.sample(seed, 0)
}
