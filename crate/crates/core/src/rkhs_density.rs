//! The Volterra operator `(K_f h)(t) = ∫_{t̲}^t g(t-s) f(s) h(s) ds` on a grid,
//! and least-squares approximation of targets in its range.
//!
//! `h` is piecewise constant on the cells `[s_j, s_j + dt)` and `f` is taken
//! at the left point of each cell. Errors are reported in two ways:
//!
//! * `grid_residual`: `max_i |(K ĥ)_i - target_i|` with the matrix `K`.
//! * `sup_error`: the sup norm of `K_f ĥ - target` as functions on
//!   `[t̲, T]`, using exact cell integrals of `g` and the piecewise-linear
//!   interpolant of the target, evaluated at the nodes and at
//!   [`SUBCELL_POINTS`] interior points of every cell.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::grid::SimGrid;
use crate::kernels::{CellWeights, Kernel};
use crate::linalg::{matrix_rows, spectral_norm};
use crate::quadrature::{integrate, integrate_left_singular, Tolerance};

/// Interior evaluation points per cell, as fractions of `dt`.
pub const SUBCELL_POINTS: [f64; 3] = [0.25, 0.5, 0.75];

/// Default ridge relative to `‖K‖²`.
pub const RELATIVE_RIDGE: f64 = 1e-10;

/// Discretized `K_f` from the `n_cells` cell values of `h` to the `n_cells + 1`
/// grid values of `K_f h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    pub grid: SimGrid,
    #[serde(with = "matrix_rows")]
    pub entries: DMatrix<f64>,
    pub f_samples: Vec<f64>,
    pub kernel: Kernel,
}

impl OperatorMatrix {
    pub fn n_cells(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        (&self.entries * DVector::from_column_slice(h))
            .iter()
            .copied()
            .collect()
    }

    /// Largest singular value of the matrix.
    pub fn norm(&self) -> f64 {
        spectral_norm(&self.entries)
    }

    /// `‖g‖₂ · max|f| · √(T - t̲)`.
    pub fn norm_bound(&self) -> f64 {
        let fmax = self.f_samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.kernel.l2_norm_sq().sqrt() * fmax * (self.grid.t_end() - self.grid.t_start()).sqrt()
    }

    pub fn default_ridge(&self) -> f64 {
        let norm = self.norm();
        RELATIVE_RIDGE * norm * norm
    }
}

/// `K[i][j] = ĝ((i - j) dt) f(s_j) dt` for `j < i`.
pub fn build_operator(kernel: &Kernel, f: &[f64], grid: &SimGrid) -> Result<OperatorMatrix> {
    kernel.validate()?;
    let n = grid.n_steps();
    if n < 2 {
        return Err(BssError::invalid("operator grid needs at least 2 steps"));
    }
    if f.len() != n + 1 {
        return Err(BssError::invalid(format!(
            "f has {} samples for a grid of {} points",
            f.len(),
            n + 1
        )));
    }
    let dt = grid.dt();
    let w = CellWeights::for_noise(kernel, dt, n)?;
    let entries = DMatrix::from_fn(n + 1, n, |i, j| {
        if j < i {
            w.lag(i - j) * f[j] * dt
        } else {
            0.0
        }
    });
    Ok(OperatorMatrix {
        grid: *grid,
        entries,
        f_samples: f.to_vec(),
        kernel: kernel.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub h_hat: Vec<f64>,
    pub sup_error: f64,
    pub grid_residual: f64,
}

fn check_target(grid: &SimGrid, target: &[f64]) -> Result<()> {
    if target.len() != grid.n_points() {
        return Err(BssError::invalid(format!(
            "target has {} values for a grid of {} points",
            target.len(),
            grid.n_points()
        )));
    }
    let scale = target.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if target[0].abs() > 1e-12 * scale {
        return Err(BssError::invalid(format!(
            "target must vanish at t_lower, got {}",
            target[0]
        )));
    }
    Ok(())
}

/// Minimizes `‖K h - target‖² + ridge ‖h‖² dt` through the normal equations.
pub fn approximate_target(op: &OperatorMatrix, target: &[f64], ridge: f64) -> Result<Approximation> {
    check_target(&op.grid, target)?;
    if !(ridge >= 0.0) {
        return Err(BssError::invalid(format!("ridge must be >= 0, got {ridge}")));
    }
    let k = &op.entries;
    let mut normal = k.transpose() * k;
    let shift = ridge * op.grid.dt();
    for i in 0..normal.nrows() {
        normal[(i, i)] += shift;
    }
    let rhs = k.transpose() * DVector::from_column_slice(target);
    let chol = normal.cholesky().ok_or_else(|| BssError::Numerical {
        message: "normal equations are not positive definite".into(),
        estimate: shift,
        error_bound: f64::NAN,
    })?;
    let h = chol.solve(&rhs);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(BssError::numerical("normal-equation solution is not finite"));
    }
    let h_hat: Vec<f64> = h.iter().copied().collect();
    let evaluator = ResolvedEvaluator::new(&op.kernel, &op.grid)?;
    Ok(Approximation {
        sup_error: evaluator.sup_distance(&op.f_samples, &h_hat, target),
        grid_residual: grid_residual(op, &h_hat, target),
        h_hat,
    })
}

fn grid_residual(op: &OperatorMatrix, h: &[f64], target: &[f64]) -> f64 {
    op.apply(h)
        .iter()
        .zip(target)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Exact action of `K_f` on piecewise-constant `h` at nodes and sub-cell
/// points, through `G(x) = ∫₀^x g` tabulated on a lattice of step `dt / 4`.
pub struct ResolvedEvaluator {
    grid: SimGrid,
    /// `cumulative[m] = G(m dt / 4)`.
    cumulative: Vec<f64>,
}

const LATTICE: usize = 4;

impl ResolvedEvaluator {
    pub fn new(kernel: &Kernel, grid: &SimGrid) -> Result<Self> {
        let n = grid.n_steps();
        let step = grid.dt() / LATTICE as f64;
        let tol = Tolerance::new(1e-300, 1e-13);
        let mut cumulative = Vec::with_capacity(LATTICE * n + 1);
        cumulative.push(0.0);
        let f = |u: f64| kernel.value(u);
        let mut acc = integrate_left_singular(f, 0.0, step, tol).into_result("kernel primitive")?;
        cumulative.push(acc);
        for m in 1..LATTICE * n {
            acc += integrate(f, m as f64 * step, (m + 1) as f64 * step, tol)
                .into_result("kernel primitive")?;
            cumulative.push(acc);
        }
        Ok(Self {
            grid: *grid,
            cumulative,
        })
    }

    /// `∫` over cell `j` of `g(t - s)` for `t = (q / 4) dt` past the grid start.
    fn cell_integral(&self, q: usize, j: usize) -> f64 {
        let start = LATTICE * j;
        if q <= start {
            return 0.0;
        }
        let hi = q - start;
        let lo = hi.saturating_sub(LATTICE);
        self.cumulative[hi] - self.cumulative[lo]
    }

    /// `(K_f h)` at lattice point `q` (in units of `dt / 4`).
    fn value_at(&self, f: &[f64], h: &[f64], q: usize) -> f64 {
        let cells = q.div_ceil(LATTICE).min(h.len());
        (0..cells)
            .map(|j| f[j] * h[j] * self.cell_integral(q, j))
            .sum()
    }

    /// Evaluation points as lattice indices: every node and the sub-cell
    /// points of every cell.
    fn points(&self) -> impl Iterator<Item = usize> {
        let n = self.grid.n_steps();
        (0..=LATTICE * n).filter(|q| {
            let r = q % LATTICE;
            r == 0
                || SUBCELL_POINTS
                    .iter()
                    .any(|&th| (th * LATTICE as f64).round() as usize == r)
        })
    }

    fn interpolate(values: &[f64], q: usize) -> f64 {
        let i = q / LATTICE;
        let r = q % LATTICE;
        if r == 0 {
            values[i]
        } else {
            let th = r as f64 / LATTICE as f64;
            values[i] * (1.0 - th) + values[i + 1] * th
        }
    }

    /// `sup |K_f h - target|` over the evaluation points.
    pub fn sup_distance(&self, f: &[f64], h: &[f64], target: &[f64]) -> f64 {
        self.points()
            .map(|q| (self.value_at(f, h, q) - Self::interpolate(target, q)).abs())
            .fold(0.0, f64::max)
    }

    /// `sup |K_f h|` over the evaluation points.
    pub fn sup_norm(&self, f: &[f64], h: &[f64]) -> f64 {
        self.points()
            .map(|q| self.value_at(f, h, q).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernyResult {
    /// Step 1: least-squares solution for `f ≡ 1`.
    pub h_tilde: Vec<f64>,
    pub step1_error: f64,
    /// Step 2: `h̃ / f` off `A_δ`, zero on it.
    pub h_hat: Vec<f64>,
    pub sup_error: f64,
    /// Step 2 error on the grid with the matrix of `K_f`.
    pub grid_residual: f64,
    /// `dt · #{cells with |f| ≤ δ}`.
    pub a_delta_measure: f64,
    /// `sup |K₁ h̃ - K_f ĥ|` as functions.
    pub perturbation: f64,
    /// The same on the grid with the matrices.
    pub grid_perturbation: f64,
    /// `‖g‖₂ ‖h̃ 1_{A_δ}‖₂`.
    pub perturbation_bound: f64,
}

/// Two-step construction: approximate with `f ≡ 1`, then divide by `f` away
/// from `A_δ = {|f| ≤ δ}` and drop the rest.
pub fn cherny_two_step(
    kernel: &Kernel,
    f: &[f64],
    target: &[f64],
    delta: f64,
    grid: &SimGrid,
) -> Result<ChernyResult> {
    if !(delta > 0.0) {
        return Err(BssError::invalid(format!("delta must be > 0, got {delta}")));
    }
    let ones = vec![1.0; grid.n_points()];
    let k1 = build_operator(kernel, &ones, grid)?;
    let kf = build_operator(kernel, f, grid)?;
    let step1 = approximate_target(&k1, target, k1.default_ridge())?;
    let h_tilde = step1.h_hat;

    let n = grid.n_steps();
    let dt = grid.dt();
    let in_a: Vec<bool> = (0..n).map(|j| f[j].abs() <= delta).collect();
    let h_hat: Vec<f64> = (0..n)
        .map(|j| if in_a[j] { 0.0 } else { h_tilde[j] / f[j] })
        .collect();
    let a_delta_measure = dt * in_a.iter().filter(|&&b| b).count() as f64;

    let evaluator = ResolvedEvaluator::new(kernel, grid)?;
    let dropped: Vec<f64> = (0..n)
        .map(|j| if in_a[j] { h_tilde[j] } else { 0.0 })
        .collect();
    let perturbation = evaluator.sup_norm(&ones, &dropped);
    let grid_perturbation = k1.apply(&dropped).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let dropped_l2 = (dropped.iter().map(|v| v * v).sum::<f64>() * dt).sqrt();

    Ok(ChernyResult {
        step1_error: step1.sup_error,
        sup_error: evaluator.sup_distance(f, &h_hat, target),
        grid_residual: grid_residual(&kf, &h_hat, target),
        perturbation_bound: kernel.l2_norm_sq().sqrt() * dropped_l2,
        h_tilde,
        h_hat,
        a_delta_measure,
        perturbation,
        grid_perturbation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> SimGrid {
        SimGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn constant_kernel_integrates() {
        let grid = unit_grid(50);
        let op = build_operator(&Kernel::constant(1.0, 2.0).unwrap(), &vec![1.0; 51], &grid).unwrap();
        let kh = op.apply(&vec![1.0; 50]);
        for (i, v) in kh.iter().enumerate() {
            assert!((v - grid.time(i)).abs() < 1e-12);
        }
        let target: Vec<f64> = grid.times();
        let a = approximate_target(&op, &target, 0.0).unwrap();
        assert!(a.h_hat.iter().all(|h| (h - 1.0).abs() < 1e-9));
        assert!(a.sup_error < 1e-9, "{}", a.sup_error);
    }

    #[test]
    fn zero_f_gives_zero_matrix() {
        let grid = unit_grid(10);
        let op = build_operator(&Kernel::gamma(0.25, 1.0).unwrap(), &vec![0.0; 11], &grid).unwrap();
        assert!(op.entries.iter().all(|&x| x == 0.0));
        assert!(approximate_target(&op, &vec![0.0; 11], 0.0).unwrap_err().is_numerical());
    }

    #[test]
    fn range_vanishes_at_origin_and_norm_is_bounded() {
        let grid = unit_grid(64);
        let f: Vec<f64> = grid.times().iter().map(|t| 1.0 + t).collect();
        for kernel in [Kernel::gamma(0.25, 1.0).unwrap(), Kernel::gamma(-0.25, 1.0).unwrap()] {
            let op = build_operator(&kernel, &f, &grid).unwrap();
            assert!(op.entries.row(0).iter().all(|&x| x == 0.0));
            assert!(op.norm() * grid.dt().sqrt() <= op.norm_bound());
        }
    }

    #[test]
    fn target_must_vanish_at_start() {
        let grid = unit_grid(10);
        let op = build_operator(&Kernel::exponential(1.0).unwrap(), &vec![1.0; 11], &grid).unwrap();
        assert!(approximate_target(&op, &vec![1.0; 11], 0.0).is_err());
    }

    #[test]
    fn empty_a_delta_is_direct_division() {
        let grid = unit_grid(40);
        let kernel = Kernel::gamma(0.25, 1.0).unwrap();
        let f = vec![2.0; 41];
        let target: Vec<f64> = grid.times().iter().map(|t| (3.0 * t).sin()).collect();
        let r = cherny_two_step(&kernel, &f, &target, 0.5, &grid).unwrap();
        assert_eq!(r.a_delta_measure, 0.0);
        for (a, b) in r.h_hat.iter().zip(&r.h_tilde) {
            assert_eq!(*a, b / 2.0);
        }
        assert!((r.sup_error - r.step1_error).abs() < 1e-10);
    }
}
