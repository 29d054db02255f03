//! Process definition and the numerical checks of its standing
//! conditions.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BssError, Result};
use crate::grid::SimGrid;
use crate::kernels::{Kernel, RegularityCertificate};

/// Default L² budget for discarding the kernel tail beyond `M`.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-6;

/// Probe points used for the regularity certificate.
pub const REGULARITY_PROBES: usize = 16;

/// Windows `ε` at which `∫₀^ε |g|` must be positive.
pub const NONDEGENERACY_EPSILONS: [f64; 3] = [1e-4, 1e-2, 1e-1];

/// Model for the volatility `σ`, or for the drift process `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntermittencyModel {
    Constant {
        value: f64,
    },
    /// Piecewise-linear table covering the simulated window.
    Deterministic {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// `σ_t = exp(U_t)` for a stationary Ornstein–Uhlenbeck process
    /// `dU = -reversion (U - mean_log) dt + vol_log dW`.
    ExpOu {
        reversion: f64,
        mean_log: f64,
        vol_log: f64,
    },
}

impl IntermittencyModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IntermittencyModel::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(BssError::invalid(format!(
                        "constant intermittency must be > 0, got {value}"
                    )));
                }
            }
            IntermittencyModel::Deterministic {
                ref knots,
                ref values,
            } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(BssError::invalid(
                        "deterministic table needs at least two knots and one value per knot",
                    ));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(BssError::invalid(
                        "deterministic table knots must be strictly increasing",
                    ));
                }
                if knots.iter().chain(values).any(|x| !x.is_finite()) {
                    return Err(BssError::invalid("deterministic table entries must be finite"));
                }
            }
            IntermittencyModel::ExpOu {
                reversion,
                mean_log,
                vol_log,
            } => {
                if !(reversion > 0.0 && reversion.is_finite()) {
                    return Err(BssError::invalid(format!(
                        "exp-OU reversion must be > 0, got {reversion}"
                    )));
                }
                if !(vol_log >= 0.0 && vol_log.is_finite()) || !mean_log.is_finite() {
                    return Err(BssError::invalid(
                        "exp-OU needs finite mean_log and vol_log >= 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// `sup_t E[σ_t²]` over the table or the stationary law.
    pub fn sup_second_moment(&self) -> f64 {
        match *self {
            IntermittencyModel::Constant { value } => value * value,
            IntermittencyModel::Deterministic { ref values, .. } => {
                values.iter().fold(0.0, |m, v| m.max(v * v))
            }
            IntermittencyModel::ExpOu {
                reversion,
                mean_log,
                vol_log,
            } => (2.0 * mean_log + 2.0 * vol_log * vol_log / (2.0 * reversion)).exp(),
        }
    }

    /// Lebesgue measure of `{t ∈ [t0, t1] : σ_t = 0}` for deterministic
    /// tables; zero for the other families, whose marginals have no atom at 0.
    pub fn zero_set_measure(&self, t0: f64, t1: f64) -> f64 {
        match self {
            IntermittencyModel::Deterministic { knots, values } => knots
                .windows(2)
                .zip(values.windows(2))
                .filter(|(_, v)| v[0] == 0.0 && v[1] == 0.0)
                .map(|(k, _)| (k[1].min(t1) - k[0].max(t0)).max(0.0))
                .sum(),
            _ => 0.0,
        }
    }

    fn table_value(knots: &[f64], values: &[f64], t: f64) -> Result<f64> {
        let last = knots.len() - 1;
        let slack = 1e-9 * (knots[last] - knots[0]);
        if t < knots[0] - slack || t > knots[last] + slack {
            return Err(BssError::domain(format!(
                "time {t} is outside the deterministic table [{}, {}]",
                knots[0], knots[last]
            )));
        }
        let t = t.clamp(knots[0], knots[last]);
        let i = knots.partition_point(|&k| k <= t).clamp(1, last);
        let (k0, k1) = (knots[i - 1], knots[i]);
        Ok(values[i - 1] + (values[i] - values[i - 1]) * (t - k0) / (k1 - k0))
    }

    /// Values at the grid points. Stochastic variants read normals from `rng`.
    pub fn sample_on_grid(&self, grid: &SimGrid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let n = grid.n_points();
        match *self {
            IntermittencyModel::Constant { value } => Ok(vec![value; n]),
            IntermittencyModel::Deterministic {
                ref knots,
                ref values,
            } => (0..n)
                .map(|i| Self::table_value(knots, values, grid.time(i)))
                .collect(),
            IntermittencyModel::ExpOu {
                reversion,
                mean_log,
                vol_log,
            } => {
                let stationary_var = vol_log * vol_log / (2.0 * reversion);
                let decay = (-reversion * grid.dt()).exp();
                let innovation_sd = (stationary_var * -(-2.0 * reversion * grid.dt()).exp_m1()).sqrt();
                let z: f64 = StandardNormal.sample(rng);
                let mut u = mean_log + stationary_var.sqrt() * z;
                let mut out = Vec::with_capacity(n);
                out.push(u.exp());
                for _ in 1..n {
                    let z: f64 = StandardNormal.sample(rng);
                    u = mean_log + (u - mean_log) * decay + innovation_sd * z;
                    out.push(u.exp());
                }
                Ok(out)
            }
        }
    }
}

/// Optional drift term `∫ q(t-s) a_s ds`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub q: Option<Kernel>,
    pub a: Option<IntermittencyModel>,
}

impl DriftSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(q: Kernel, a: IntermittencyModel) -> Self {
        Self {
            q: Some(q),
            a: Some(a),
        }
    }

    pub fn parts(&self) -> Result<Option<(&Kernel, &IntermittencyModel)>> {
        match (&self.q, &self.a) {
            (None, None) => Ok(None),
            (Some(q), Some(a)) => Ok(Some((q, a))),
            _ => Err(BssError::invalid(
                "drift needs both the kernel q and the process a, or neither",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BssModel {
    #[serde(default)]
    pub mu: f64,
    pub kernel: Kernel,
    pub sigma: IntermittencyModel,
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub beta: f64,
    pub horizon: f64,
    /// Past truncation `M`: the moving average starts at `-M`.
    pub truncation: f64,
    #[serde(default = "default_truncation_tol")]
    pub truncation_tol: f64,
}

fn default_truncation_tol() -> f64 {
    DEFAULT_TRUNCATION_TOL
}

impl BssModel {
    /// A driftless model with `μ = 0`, `β = 0` and the required truncation.
    pub fn new(kernel: Kernel, sigma: IntermittencyModel, horizon: f64) -> Result<Self> {
        let mut model = Self {
            mu: 0.0,
            kernel,
            sigma,
            drift: DriftSpec::none(),
            beta: 0.0,
            horizon,
            truncation: 0.0,
            truncation_tol: DEFAULT_TRUNCATION_TOL,
        };
        model.truncation = model.required_truncation()?;
        Ok(model)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_drift(mut self, drift: DriftSpec) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_truncation(mut self, m: f64) -> Self {
        self.truncation = m;
        self
    }

    /// Scale of σ used to turn the truncation budget into a kernel tail bound.
    pub fn sigma_scale(&self) -> f64 {
        self.sigma.sup_second_moment().sqrt()
    }

    /// `M` such that the discarded part of the moving average has L² norm at
    /// most `truncation_tol`.
    pub fn required_truncation(&self) -> Result<f64> {
        let scale = self.sigma_scale();
        if !(scale > 0.0) {
            return Ok(0.0);
        }
        self.kernel.truncation_horizon(self.truncation_tol / scale)
    }

    /// Simulation grid with step `dt` covering `[-M, T]`, aligned so that 0
    /// and `T` are grid points.
    pub fn grid(&self, dt: f64) -> Result<SimGrid> {
        SimGrid::covering(-self.truncation, self.horizon, dt)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn check_invariants(&self) -> Result<()> {
        self.kernel.validate()?;
        self.sigma.validate()?;
        if let Some((q, a)) = self.drift.parts()? {
            q.validate()?;
            a.validate()?;
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(BssError::invalid(format!(
                "horizon T must be > 0, got {}",
                self.horizon
            )));
        }
        if !(self.truncation >= 0.0) || !self.mu.is_finite() || !self.beta.is_finite() {
            return Err(BssError::invalid("mu, beta and truncation must be finite, M >= 0"));
        }
        if !(self.truncation_tol > 0.0) {
            return Err(BssError::invalid("truncation_tol must be > 0"));
        }
        Ok(())
    }

    /// Checks the standing conditions (i)–(vi) to the extent they are
    /// numerically checkable.
    pub fn validate(&self) -> Result<ConditionReport> {
        self.check_invariants()?;
        let t = self.horizon;
        let mut checks = Vec::new();

        let drift = match self.drift.parts()? {
            None => ConditionCheck::new("i", "drift integrability", true, "no drift term", None),
            Some((q, a)) => {
                let mass = q.abs_integral(t)?;
                let moment = a.sup_second_moment();
                let ok = mass.is_finite() && moment.is_finite();
                ConditionCheck::new(
                    "i",
                    "drift integrability",
                    ok,
                    format!("∫₀^T |q| = {mass:.6e}, sup E[a²] = {moment:.6e}"),
                    Some(mass),
                )
            }
        };
        checks.push(drift);

        let moment = self.sigma.sup_second_moment();
        checks.push(ConditionCheck::new(
            "ii",
            "finite second moment of sigma",
            moment.is_finite(),
            format!("sup E[σ²] = {moment:.6e}"),
            Some(moment),
        ));

        let regularity = self.kernel.certify_regularity(t, REGULARITY_PROBES)?;
        checks.push(ConditionCheck::new(
            "iii",
            "L2 kernel with power-law gap bound",
            regularity.passed,
            format!(
                "‖g‖² = {:.6e}, alpha = {:.4}, C = {:.6e}",
                self.kernel.l2_norm_sq(),
                regularity.alpha,
                regularity.c
            ),
            Some(regularity.alpha),
        ));

        let beta_ok = self.beta > -1.0 && self.beta < 1.0;
        checks.push(ConditionCheck::new(
            "iv",
            "driver decomposition",
            beta_ok,
            format!(
                "beta = {}; sigma and a are generated independently of both drivers",
                self.beta
            ),
            Some(self.beta),
        ));

        let zeros = self.sigma.zero_set_measure(0.0, t);
        let positivity_detail = match self.sigma {
            IntermittencyModel::Constant { value } => format!("constant σ = {value}"),
            IntermittencyModel::ExpOu { .. } => "log-normal marginals have no atom at 0".into(),
            IntermittencyModel::Deterministic { .. } => {
                format!("measure of {{σ = 0}} on [0, T] is {zeros}")
            }
        };
        checks.push(ConditionCheck::new(
            "v",
            "sigma vanishes on a null set",
            zeros == 0.0,
            positivity_detail,
            Some(zeros),
        ));

        let nondeg = self.kernel.nondegeneracy_check(&NONDEGENERACY_EPSILONS)?;
        checks.push(ConditionCheck::new(
            "vi",
            "kernel non-degenerate at the origin",
            nondeg.iter().all(|&b| b),
            format!("epsilons {NONDEGENERACY_EPSILONS:?} -> {nondeg:?}"),
            None,
        ));

        let required = self.required_truncation()?;
        let truncation = ConditionCheck::new(
            "M",
            "past truncation",
            self.truncation >= required * (1.0 - 1e-9),
            format!("M = {}, required {required:.6}", self.truncation),
            Some(required),
        );

        let passed = checks.iter().all(|c| c.passed) && truncation.passed;
        Ok(ConditionReport {
            checks,
            truncation,
            regularity,
            passed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub value: Option<f64>,
}

impl ConditionCheck {
    fn new(id: &str, name: &str, passed: bool, detail: impl Into<String>, value: Option<f64>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            passed,
            detail: detail.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Conditions (i)–(vi) in order.
    pub checks: Vec<ConditionCheck>,
    pub truncation: ConditionCheck,
    pub regularity: RegularityCertificate,
    pub passed: bool,
}

impl ConditionReport {
    pub fn check(&self, id: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// A model whose conditions all passed. Simulation entry points take this
/// type so an unchecked model cannot reach them.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    model: BssModel,
    report: ConditionReport,
}

impl ValidatedModel {
    pub fn new(model: BssModel) -> Result<Self> {
        let report = model.validate()?;
        if !report.passed {
            let failed: Vec<String> = report
                .checks
                .iter()
                .chain(std::iter::once(&report.truncation))
                .filter(|c| !c.passed)
                .map(|c| format!("({}) {}: {}", c.id, c.name, c.detail))
                .collect();
            return Err(BssError::invalid(format!(
                "model failed validation: {}",
                failed.join("; ")
            )));
        }
        Ok(Self { model, report })
    }

    pub fn model(&self) -> &BssModel {
        &self.model
    }

    pub fn report(&self) -> &ConditionReport {
        &self.report
    }
}

impl std::ops::Deref for ValidatedModel {
    type Target = BssModel;

    fn deref(&self) -> &BssModel {
        &self.model
    }
}
