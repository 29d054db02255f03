//! Memory kernels `g` on `(0, ∞)` and the quantities derived from them:
//! L² norm, autocovariance `R(t) = ∫ g(t+s) g(s) ds`, the gap
//! `‖g‖² − R(t)`, regularity certificates and truncation horizons.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{BssError, Result};
use crate::quadrature::{integrate_half_line, HalfLineEnd, Tolerance};

/// Strict positivity floor separating a vanishing integral from quadrature
/// noise.
pub const NONDEGENERACY_FLOOR: f64 = 1e-14;

/// Safety factor applied to the regularity constant `C`.
pub const REGULARITY_MARGIN: f64 = 0.10;

/// Decades spanned by the regularity probe grid below `T`.
pub const PROBE_DECADES: f64 = 3.0;

/// Smallest exponent a certificate will report.
pub const ALPHA_FLOOR: f64 = 1e-3;

const KERNEL_TOL: Tolerance = Tolerance::new(1e-300, 1e-13);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `g(t) = t^kappa exp(-rho t)`.
    Gamma { kappa: f64, rho: f64 },
    /// `g(t) = exp(-rho t)`.
    Exponential { rho: f64 },
    /// Piecewise-linear interpolation of `(knots, values)`, zero before the
    /// first knot and beyond the last one.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl Kernel {
    pub fn gamma(kappa: f64, rho: f64) -> Result<Self> {
        let k = Kernel::Gamma { kappa, rho };
        k.validate()?;
        Ok(k)
    }

    pub fn exponential(rho: f64) -> Result<Self> {
        let k = Kernel::Exponential { rho };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let k = Kernel::Tabulated { knots, values };
        k.validate()?;
        Ok(k)
    }

    /// `g ≡ value` on `(0, end]`, zero afterwards.
    pub fn constant(value: f64, end: f64) -> Result<Self> {
        Self::tabulated(vec![0.0, end], vec![value, value])
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gamma { kappa, rho } => {
                let admissible =
                    (kappa > -0.5 && kappa < 0.0) || (kappa > 0.0 && kappa < 0.5);
                if !admissible {
                    return Err(BssError::invalid(format!(
                        "gamma kernel requires kappa in (-1/2, 0) ∪ (0, 1/2), got {kappa}"
                    )));
                }
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(BssError::invalid(format!(
                        "gamma kernel requires rho > 0, got {rho}"
                    )));
                }
            }
            Kernel::Exponential { rho } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(BssError::invalid(format!(
                        "exponential kernel requires rho > 0, got {rho}"
                    )));
                }
            }
            Kernel::Tabulated {
                ref knots,
                ref values,
            } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(BssError::invalid(
                        "tabulated kernel needs at least two knots and one value per knot",
                    ));
                }
                if !(knots[0] >= 0.0) {
                    return Err(BssError::invalid("tabulated kernel knots must start at t >= 0"));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(BssError::invalid(
                        "tabulated kernel knots must be strictly increasing",
                    ));
                }
                if knots.iter().chain(values).any(|x| !x.is_finite()) {
                    return Err(BssError::invalid("tabulated kernel entries must be finite"));
                }
            }
        }
        Ok(())
    }

    /// `g(t)`; the kernel lives on `(0, ∞)` only.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(BssError::domain(format!(
                "kernel is defined on (0, ∞), got t = {t}"
            )));
        }
        Ok(self.value(t))
    }

    /// `g(t)` without the domain check. Callers guarantee `t > 0`.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Kernel::Gamma { kappa, rho } => t.powf(kappa) * (-rho * t).exp(),
            Kernel::Exponential { rho } => (-rho * t).exp(),
            Kernel::Tabulated {
                ref knots,
                ref values,
            } => tabulated_value(knots, values, t),
        }
    }

    /// `g(s + t) - g(s)` for `s, t > 0`, without cancellation for the
    /// parametric families.
    fn increment(&self, s: f64, t: f64) -> f64 {
        match *self {
            Kernel::Gamma { kappa, rho } => {
                self.value(s) * (kappa * (t / s).ln_1p() - rho * t).exp_m1()
            }
            Kernel::Exponential { rho } => self.value(s) * (-rho * t).exp_m1(),
            Kernel::Tabulated { .. } => self.value(s + t) - self.value(s),
        }
    }

    fn breakpoints(&self) -> &[f64] {
        match self {
            Kernel::Tabulated { knots, .. } => knots,
            _ => &[],
        }
    }

    /// Exponential decay rate of `g`, or `None` for compactly supported kernels.
    fn decay_rate(&self) -> Option<f64> {
        match *self {
            Kernel::Gamma { rho, .. } | Kernel::Exponential { rho } => Some(rho),
            Kernel::Tabulated { .. } => None,
        }
    }

    fn support_end(&self) -> f64 {
        match self {
            Kernel::Tabulated { knots, .. } => *knots.last().expect("validated"),
            _ => f64::INFINITY,
        }
    }

    /// `∫₀^∞ F(s) ds` for an integrand built from `g` that decays at
    /// `decay_multiple` times the kernel rate, with extra breakpoints.
    fn integrate_over_support<F: Fn(f64) -> f64>(
        &self,
        f: F,
        extra_breaks: &[f64],
        finite_end: f64,
        decay_multiple: f64,
    ) -> Result<f64> {
        let mut breaks: Vec<f64> = self.breakpoints().to_vec();
        breaks.extend_from_slice(extra_breaks);
        let end = match self.decay_rate() {
            Some(rate) => {
                breaks.push(1.0 / rate);
                HalfLineEnd::Infinite {
                    rate: decay_multiple * rate,
                }
            }
            None => HalfLineEnd::Finite(finite_end),
        };
        integrate_half_line(f, &breaks, end, KERNEL_TOL).into_result("kernel integral")
    }

    /// `‖g‖₂² = ∫₀^∞ g(s)² ds`, in closed form.
    pub fn l2_norm_sq(&self) -> f64 {
        match *self {
            Kernel::Gamma { kappa, rho } => {
                let a = 2.0 * kappa + 1.0;
                gamma(a) / (2.0 * rho).powf(a)
            }
            Kernel::Exponential { rho } => 0.5 / rho,
            Kernel::Tabulated {
                ref knots,
                ref values,
            } => knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| segment_sq_integral(k[1] - k[0], v[0], v[1]))
                .sum(),
        }
    }

    /// `‖g‖₂²` by adaptive quadrature, independent of the closed forms.
    pub fn l2_norm_sq_quadrature(&self) -> Result<f64> {
        self.integrate_over_support(|s| self.value(s).powi(2), &[], self.support_end(), 2.0)
    }

    /// `∫₀^x g(s)² ds`.
    pub fn cumulative_l2(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let Kernel::Exponential { rho } = *self {
            return Ok(-(-2.0 * rho * x).exp_m1() / (2.0 * rho));
        }
        let end = x.min(self.support_end());
        integrate_half_line(
            |s| self.value(s).powi(2),
            self.breakpoints(),
            HalfLineEnd::Finite(end),
            KERNEL_TOL,
        )
        .into_result("cumulative L2 mass")
    }

    /// `∫₀^x g(s) ds`.
    pub fn integral(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let Kernel::Exponential { rho } = *self {
            return Ok(-(-rho * x).exp_m1() / rho);
        }
        let end = x.min(self.support_end());
        integrate_half_line(
            |s| self.value(s),
            self.breakpoints(),
            HalfLineEnd::Finite(end),
            KERNEL_TOL,
        )
        .into_result("kernel integral")
    }

    /// `∫₀^x |g(s)| ds`.
    pub fn abs_integral(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let end = x.min(self.support_end());
        integrate_half_line(
            |s| self.value(s).abs(),
            self.breakpoints(),
            HalfLineEnd::Finite(end),
            KERNEL_TOL,
        )
        .into_result("absolute kernel integral")
    }

    /// Tail mass `∫_m^∞ g(s)² ds`.
    pub fn tail_l2(&self, m: f64) -> Result<f64> {
        if m <= 0.0 {
            return Ok(self.l2_norm_sq());
        }
        Ok(match *self {
            Kernel::Gamma { kappa, rho } => {
                let a = 2.0 * kappa + 1.0;
                gamma(a) * gamma_ur(a, 2.0 * rho * m) / (2.0 * rho).powf(a)
            }
            Kernel::Exponential { rho } => (-2.0 * rho * m).exp() / (2.0 * rho),
            Kernel::Tabulated {
                ref knots,
                ref values,
            } => tabulated_tail_sq(knots, values, m),
        })
    }

    /// Autocovariance `R(t) = ∫₀^∞ g(t+s) g(s) ds` of the unit-volatility
    /// moving average.
    pub fn autocovariance(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(BssError::domain(format!(
                "autocovariance lag must be >= 0, got {t}"
            )));
        }
        if t == 0.0 {
            return self.l2_norm_sq_quadrature();
        }
        let end = self.support_end() - t;
        if end <= 0.0 {
            return Ok(0.0);
        }
        let shifted: Vec<f64> = self.breakpoints().iter().map(|k| k - t).collect();
        let mut extra = shifted;
        extra.push(t);
        self.integrate_over_support(|s| self.value(s + t) * self.value(s), &extra, end, 2.0)
    }

    /// `‖g‖₂² − R(t)` evaluated through the cancellation-free identity
    /// `½ [∫₀^t g² + ∫₀^∞ (g(s+t) − g(s))² ds]`.
    pub fn gap(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(BssError::domain(format!("gap lag must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let head = self.cumulative_l2(t)?;
        let mut extra: Vec<f64> = self.breakpoints().iter().map(|k| k - t).collect();
        extra.push(t);
        let increments = self.integrate_over_support(
            |s| {
                let d = self.increment(s, t);
                d * d
            },
            &extra,
            self.support_end(),
            2.0,
        )?;
        Ok(0.5 * (head + increments))
    }

    /// Smallest `M` with `∫_M^∞ g² ≤ tol²`; zero when `tol² ≥ ‖g‖²`.
    pub fn truncation_horizon(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(BssError::invalid(format!(
                "truncation tolerance must be > 0, got {tol}"
            )));
        }
        let budget = tol * tol;
        if budget >= self.l2_norm_sq() {
            return Ok(0.0);
        }
        if let Kernel::Exponential { rho } = *self {
            return Ok((1.0 / (2.0 * rho * budget)).ln() / (2.0 * rho));
        }
        let mut hi = match self {
            Kernel::Tabulated { knots, .. } => *knots.last().expect("validated"),
            _ => 1.0,
        };
        while self.tail_l2(hi)? > budget {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(BssError::numerical("truncation horizon search diverged"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.tail_l2(mid)? > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// [`Kernel::truncation_horizon`] rounded up to a multiple of `dt`.
    pub fn truncation_horizon_aligned(&self, tol: f64, dt: f64) -> Result<f64> {
        let m = self.truncation_horizon(tol)?;
        Ok((m / dt - 1e-9).ceil().max(0.0) * dt)
    }

    /// Numerical certificate for the gap bound `‖g‖² − R(t) ≤ C t^α` on
    /// `(0, t_max]`.
    pub fn certify_regularity(&self, t_max: f64, n_probe: usize) -> Result<RegularityCertificate> {
        if !(t_max > 0.0) {
            return Err(BssError::invalid(format!("T must be > 0, got {t_max}")));
        }
        if n_probe < 8 {
            return Err(BssError::invalid(format!(
                "at least 8 probe points are required, got {n_probe}"
            )));
        }
        let norm = self.l2_norm_sq();
        let tol = 1e-10 * norm.max(1.0);
        let lo = t_max.ln() - PROBE_DECADES * std::f64::consts::LN_10;
        let hi = t_max.ln();
        let probe_times: Vec<f64> = (0..n_probe)
            .map(|i| (lo + (hi - lo) * i as f64 / (n_probe - 1) as f64).exp())
            .collect();

        let mut gaps = Vec::with_capacity(n_probe);
        for &t in &probe_times {
            let by_subtraction = norm - self.autocovariance(t)?;
            if by_subtraction < -tol {
                return Err(BssError::Numerical {
                    message: format!("negative gap at t = {t}: quadrature is inconsistent"),
                    estimate: by_subtraction,
                    error_bound: tol,
                });
            }
            gaps.push(self.gap(t)?);
        }

        let usable = gaps.iter().all(|g| g.is_finite() && *g > 0.0);
        let fitted_slope = if usable {
            let xs: Vec<f64> = probe_times.iter().map(|t| t.ln()).collect();
            let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
            least_squares_slope(&xs, &ys)
        } else {
            f64::NAN
        };
        let passed = usable && fitted_slope > 0.0;
        let alpha = if fitted_slope.is_finite() {
            fitted_slope.max(ALPHA_FLOOR)
        } else {
            ALPHA_FLOOR
        };
        let c = probe_times
            .iter()
            .zip(&gaps)
            .map(|(t, g)| g / t.powf(alpha))
            .fold(0.0_f64, f64::max)
            * (1.0 + REGULARITY_MARGIN);

        Ok(RegularityCertificate {
            alpha,
            c,
            probe_times,
            gaps,
            fitted_slope,
            passed,
        })
    }

    /// For each `ε`, whether `∫₀^ε |g| > 0` beyond the strict floor.
    pub fn nondegeneracy_check(&self, epsilons: &[f64]) -> Result<Vec<bool>> {
        epsilons
            .iter()
            .map(|&eps| {
                if !(eps > 0.0) {
                    return Err(BssError::invalid(format!("epsilon must be > 0, got {eps}")));
                }
                Ok(self.abs_integral(eps)? > NONDEGENERACY_FLOOR)
            })
            .collect()
    }
}

/// Outcome of [`Kernel::certify_regularity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityCertificate {
    pub alpha: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub probe_times: Vec<f64>,
    pub gaps: Vec<f64>,
    pub fitted_slope: f64,
    pub passed: bool,
}

/// Kernel weights of the discretized moving average on a uniform grid.
///
/// `lag(k)` is the weight attached to the cell whose left point lies `k`
/// steps behind the evaluation time. The first cell (lags in `(0, dt]`)
/// carries the singularity of the kernel and gets a cell average instead of
/// a point value; all other cells use `g(k dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    dt: f64,
    weights: Vec<f64>,
}

impl CellWeights {
    /// Weights for a stochastic integral: the first cell gets the root mean
    /// square `(∫₀^dt g² / dt)^{1/2}`, preserving its L² contribution.
    pub fn for_noise(kernel: &Kernel, dt: f64, max_lag: usize) -> Result<Self> {
        let first = (kernel.cumulative_l2(dt)? / dt).sqrt();
        Ok(Self::build(kernel, dt, max_lag, first))
    }

    /// Weights for a Lebesgue integral: the first cell gets the mean
    /// `∫₀^dt q / dt`.
    pub fn for_drift(kernel: &Kernel, dt: f64, max_lag: usize) -> Result<Self> {
        let first = kernel.integral(dt)? / dt;
        Ok(Self::build(kernel, dt, max_lag, first))
    }

    fn build(kernel: &Kernel, dt: f64, max_lag: usize, first: f64) -> Self {
        let mut weights = vec![0.0; max_lag + 1];
        if max_lag >= 1 {
            weights[1] = first;
        }
        for (k, w) in weights.iter_mut().enumerate().skip(2) {
            *w = kernel.value(k as f64 * dt);
        }
        Self { dt, weights }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_lag(&self) -> usize {
        self.weights.len() - 1
    }

    #[inline]
    pub fn lag(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// All weights, index 0 (zero lag) included and equal to zero.
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

fn tabulated_value(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let last = knots.len() - 1;
    if t < knots[0] {
        return 0.0;
    }
    if t >= knots[last] {
        // Grid lags computed as k * dt may overshoot the last knot by a few ulps.
        let slack = 1e-12 * knots[last].abs().max(1.0);
        return if t <= knots[last] + slack {
            values[last]
        } else {
            0.0
        };
    }
    let i = knots.partition_point(|&k| k <= t);
    let (k0, k1) = (knots[i - 1], knots[i]);
    let (v0, v1) = (values[i - 1], values[i]);
    v0 + (v1 - v0) * (t - k0) / (k1 - k0)
}

/// `∫ over a segment of length h of the square of the linear interpolant
/// between a and b`.
fn segment_sq_integral(h: f64, a: f64, b: f64) -> f64 {
    h * (a * a + a * b + b * b) / 3.0
}

fn tabulated_tail_sq(knots: &[f64], values: &[f64], m: f64) -> f64 {
    let mut total = 0.0;
    for (k, v) in knots.windows(2).zip(values.windows(2)) {
        if k[1] <= m {
            continue;
        }
        if k[0] >= m {
            total += segment_sq_integral(k[1] - k[0], v[0], v[1]);
        } else {
            let vm = v[0] + (v[1] - v[0]) * (m - k[0]) / (k[1] - k[0]);
            total += segment_sq_integral(k[1] - m, vm, v[1]);
        }
    }
    total
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
