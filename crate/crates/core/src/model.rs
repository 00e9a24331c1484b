//! Economy parameters, sharing schemes and equilibrium constants.
//!
//! A sharing scheme maps a participant's fraction `x` of the total stake (or
//! of the total spent tokens) to the fraction of the rewards (or service) it
//! receives. Schemes are evaluated against a participant count `k`: `n` for
//! reward schemes, `m` for service schemes.

use std::fmt;

use thiserror::Error;

/// Grid size for the sampled concavity check.
pub const CONCAVITY_GRID: usize = 1000;
/// Largest second difference still accepted as concave.
pub const CONCAVITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
}

/// The three supported share functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchemeKind {
    /// `x`
    Proportional,
    /// `x - x^ell`, `ell > 1`
    PowerPenalty { ell: f64 },
    /// `2x / (exp(T (x - 1/k)) + 1)`, `T > 0`
    Softcap { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeRole {
    Reward,
    Service,
}

impl SchemeKind {
    /// Canonical config spelling.
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Proportional => "proportional",
            SchemeKind::PowerPenalty { .. } => "power_penalty",
            SchemeKind::Softcap { .. } => "softcap",
        }
    }

    fn params_valid(&self) -> Result<(), ModelError> {
        match *self {
            SchemeKind::Proportional => Ok(()),
            SchemeKind::PowerPenalty { ell } if ell > 1.0 && ell.is_finite() => Ok(()),
            SchemeKind::PowerPenalty { ell } => Err(ModelError::Domain(format!(
                "power_penalty requires ell > 1, got {ell}"
            ))),
            SchemeKind::Softcap { t } if t > 0.0 && t.is_finite() => Ok(()),
            SchemeKind::Softcap { t } => Err(ModelError::Domain(format!(
                "softcap requires T > 0, got {t}"
            ))),
        }
    }

    /// Unchecked evaluation; callers guarantee `x` in `[0, 1]` and `k >= 2`.
    pub(crate) fn eval(&self, x: f64, k: usize) -> f64 {
        match *self {
            SchemeKind::Proportional => x,
            SchemeKind::PowerPenalty { ell } => x - x.powf(ell),
            SchemeKind::Softcap { t } => {
                let e = (t * (x - 1.0 / k as f64)).exp();
                2.0 * x / (e + 1.0)
            }
        }
    }

    pub(crate) fn eval_derivative(&self, x: f64, k: usize) -> f64 {
        match *self {
            SchemeKind::Proportional => 1.0,
            SchemeKind::PowerPenalty { ell } => 1.0 - ell * x.powf(ell - 1.0),
            SchemeKind::Softcap { t } => {
                let e = (t * (x - 1.0 / k as f64)).exp();
                let d = e + 1.0;
                2.0 / d - 2.0 * x * t * e / (d * d)
            }
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::Proportional => write!(f, "proportional"),
            SchemeKind::PowerPenalty { ell } => write!(f, "power_penalty(ell={ell})"),
            SchemeKind::Softcap { t } => write!(f, "softcap(T={t})"),
        }
    }
}

/// A share function together with the role it plays in the economy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub role: SchemeRole,
}

fn check_domain(x: f64, k: usize) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ModelError::Domain(format!("share {x} outside [0, 1]")));
    }
    if k < 2 {
        return Err(ModelError::Domain(format!(
            "participant count must be at least 2, got {k}"
        )));
    }
    Ok(())
}

impl SchemeSpec {
    pub fn reward(kind: SchemeKind) -> Self {
        Self {
            kind,
            role: SchemeRole::Reward,
        }
    }

    pub fn service(kind: SchemeKind) -> Self {
        Self {
            kind,
            role: SchemeRole::Service,
        }
    }

    /// Share of the total received by a participant holding fraction `x`.
    pub fn value(&self, x: f64, k: usize) -> Result<f64, ModelError> {
        check_domain(x, k)?;
        self.kind.params_valid()?;
        Ok(self.kind.eval(x, k))
    }

    /// Analytic first derivative of [`SchemeSpec::value`].
    pub fn derivative(&self, x: f64, k: usize) -> Result<f64, ModelError> {
        check_domain(x, k)?;
        self.kind.params_valid()?;
        Ok(self.kind.eval_derivative(x, k))
    }

    /// Runs the three usability checks (sampled concavity, no
    /// over-allocation at the symmetric share, positive slope there).
    ///
    /// Never fails: problems are reported in the returned
    /// [`ValidationReport`].
    pub fn validate(&self, k: usize) -> ValidationReport {
        let mut checks = Vec::with_capacity(3);
        if let Err(e) = check_domain(0.5, k).and_then(|_| self.kind.params_valid()) {
            checks.push(CheckOutcome {
                check: AssumptionCheck::Parameters,
                passed: false,
                at: None,
                value: f64::NAN,
                detail: e.to_string(),
            });
            return ValidationReport {
                scheme: *self,
                k,
                checks,
            };
        }

        // Uniform interior grid x_i = i / (N + 1); neighbours at +-h stay in [0, 1].
        let h = 1.0 / (CONCAVITY_GRID as f64 + 1.0);
        let mut worst = f64::NEG_INFINITY;
        let mut worst_at = 0.0;
        let mut first_bad = None;
        for i in 1..=CONCAVITY_GRID {
            let x = i as f64 * h;
            let d2 = self.kind.eval((x - h).max(0.0), k) - 2.0 * self.kind.eval(x, k)
                + self.kind.eval((x + h).min(1.0), k);
            if d2 > worst {
                worst = d2;
                worst_at = x;
            }
            if d2 > CONCAVITY_TOLERANCE && first_bad.is_none() {
                first_bad = Some(x);
            }
        }
        checks.push(CheckOutcome {
            check: AssumptionCheck::Concavity,
            passed: first_bad.is_none(),
            at: Some(first_bad.unwrap_or(worst_at)),
            value: worst,
            detail: match first_bad {
                Some(x) => format!(
                    "second difference {worst:e} exceeds {CONCAVITY_TOLERANCE:e} (first at x = {x:.6})"
                ),
                None => format!("max second difference {worst:e}"),
            },
        });

        let sym = 1.0 / k as f64;
        let v = self.kind.eval(sym, k);
        checks.push(CheckOutcome {
            check: AssumptionCheck::Allocation,
            passed: v <= sym,
            at: Some(sym),
            value: v,
            detail: format!("value at 1/{k} = {v} (limit {sym})"),
        });

        let d = self.kind.eval_derivative(sym, k);
        checks.push(CheckOutcome {
            check: AssumptionCheck::PositiveDerivative,
            passed: d > 0.0,
            at: Some(sym),
            value: d,
            detail: format!("derivative at 1/{k} = {d}"),
        });

        ValidationReport {
            scheme: *self,
            k,
            checks,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssumptionCheck {
    Parameters,
    Concavity,
    Allocation,
    PositiveDerivative,
}

impl fmt::Display for AssumptionCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssumptionCheck::Parameters => "parameters",
            AssumptionCheck::Concavity => "concavity",
            AssumptionCheck::Allocation => "allocation",
            AssumptionCheck::PositiveDerivative => "derivative",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub check: AssumptionCheck,
    pub passed: bool,
    /// Sample point the outcome refers to.
    pub at: Option<f64>,
    pub value: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub scheme: SchemeSpec,
    pub k: usize,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, check: AssumptionCheck) -> bool {
        self.failures().any(|c| c.check == check)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fails: Vec<String> = self
            .failures()
            .map(|c| format!("{} check failed: {}", c.check, c.detail))
            .collect();
        if fails.is_empty() {
            write!(f, "{} with k = {}: ok", self.scheme.kind, self.k)
        } else {
            write!(f, "{} with k = {}: {}", self.scheme.kind, self.k, fails.join("; "))
        }
    }
}

/// Economy parameters shared by the single- and two-token models.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Number of users.
    pub m: usize,
    /// Number of validators.
    pub n: usize,
    /// Discount factor, `1 / (1 + risk-free rate)`.
    pub delta: f64,
    /// Per-round validator cost in money units.
    pub v: f64,
    /// Decentralization factor `g(n)`.
    pub g: f64,
    pub reward_scheme: SchemeSpec,
    pub service_scheme: SchemeSpec,
}

impl ModelParams {
    /// Validated constructor.
    pub fn new(
        m: usize,
        n: usize,
        delta: f64,
        v: f64,
        g: f64,
        reward: SchemeKind,
        service: SchemeKind,
    ) -> Result<Self, ModelError> {
        let p = Self {
            m,
            n,
            delta,
            v,
            g,
            reward_scheme: SchemeSpec::reward(reward),
            service_scheme: SchemeSpec::service(service),
        };
        let issues = p.issues();
        if issues.is_empty() {
            Ok(p)
        } else {
            Err(ModelError::InvalidParams(
                issues.into_iter().map(|(_, msg)| msg).collect(),
            ))
        }
    }

    /// Two users, two validators, `delta = 0.9`, `v = 1`, `g = 1`,
    /// proportional schemes.
    pub fn baseline() -> Self {
        Self::new(
            2,
            2,
            0.9,
            1.0,
            1.0,
            SchemeKind::Proportional,
            SchemeKind::Proportional,
        )
        .expect("baseline parameters are valid")
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Every problem with the parameters, keyed by the config field name.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.m < 2 {
            out.push(("model.m", format!("m must be at least 2, got {}", self.m)));
        }
        if self.n < 2 {
            out.push(("model.n", format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            out.push(("model.delta", format!("delta must be in (0,1), got {}", self.delta)));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            out.push(("model.v", format!("v must be a finite value >= 0, got {}", self.v)));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            out.push(("model.g", format!("g must be > 0, got {}", self.g)));
        }
        if self.n >= 2 {
            let r = self.reward_scheme.validate(self.n);
            if !r.passed() {
                out.push(("model.reward_scheme", r.to_string()));
            }
        }
        if self.m >= 2 {
            let s = self.service_scheme.validate(self.m);
            if !s.passed() {
                out.push(("model.service_scheme", s.to_string()));
            }
        }
        out
    }

    /// `r(x)` for the configured validator count.
    pub fn r(&self, x: f64) -> f64 {
        self.reward_scheme.kind.eval(x, self.n)
    }

    pub fn r_prime(&self, x: f64) -> f64 {
        self.reward_scheme.kind.eval_derivative(x, self.n)
    }

    /// `s(x)` for the configured user count.
    pub fn s(&self, x: f64) -> f64 {
        self.service_scheme.kind.eval(x, self.m)
    }

    pub fn s_prime(&self, x: f64) -> f64 {
        self.service_scheme.kind.eval_derivative(x, self.m)
    }

    /// Each validator's reward fraction at the symmetric point, `r(1/n)`.
    pub fn validator_share(&self) -> f64 {
        self.r(1.0 / self.n as f64)
    }

    /// Each user's service fraction at the symmetric point, `s(1/m)`.
    pub fn user_share(&self) -> f64 {
        self.s(1.0 / self.m as f64)
    }
}

/// `(kappa_R, kappa_S)` with `kappa_R = (n-1)/n * r'(1/n)` and
/// `kappa_S = g * (m-1)/m * s'(1/m)`.
pub fn kappa_constants(params: &ModelParams) -> Result<(f64, f64), ModelError> {
    let n = params.n as f64;
    let m = params.m as f64;
    let rp = params.r_prime(1.0 / n);
    let sp = params.s_prime(1.0 / m);
    if rp <= 0.0 {
        return Err(ModelError::AssumptionViolation(format!(
            "reward scheme derivative at 1/n is {rp}, must be positive"
        )));
    }
    if sp <= 0.0 {
        return Err(ModelError::AssumptionViolation(format!(
            "service scheme derivative at 1/m is {sp}, must be positive"
        )));
    }
    Ok(((n - 1.0) / n * rp, params.g * (m - 1.0) / m * sp))
}

/// `1 + rew2stake * kappa_R`: the per-round price drift created by staking
/// rewards.
pub fn growth_factor(params: &ModelParams, rew2stake: f64) -> Result<f64, ModelError> {
    if !(rew2stake >= 0.0) {
        return Err(ModelError::Domain(format!(
            "rewards-to-stake ratio must be >= 0, got {rew2stake}"
        )));
    }
    let (kappa_r, _) = kappa_constants(params)?;
    Ok(1.0 + rew2stake * kappa_r)
}

/// Constants of a generic symmetric equilibrium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumConstants {
    pub kappa_r: f64,
    pub kappa_s: f64,
    /// Service level over the money value of the users' tokens.
    pub ser2fees: f64,
    /// Total rewards over total staked tokens.
    pub rew2stake: f64,
    /// `rew2stake * n * r(1/n)`
    pub a: f64,
    /// `rew2stake / (ser2fees * price0)`
    pub b: f64,
    /// `1 + rew2stake * kappa_R`
    pub growth: f64,
    /// Price factor `delta * growth`; exactly 1 for stable prices.
    pub gamma: f64,
    pub price0: f64,
}

impl EquilibriumConstants {
    /// Stable-price constants: `ser2fees = 1/(delta kappa_S)` and
    /// `rew2stake = (1 - delta)/(delta kappa_R)`.
    pub fn stable(params: &ModelParams, price0: f64) -> Result<Self, ModelError> {
        Self::generic(params, 1.0, price0)
    }

    /// Constants for prices that move by the factor `gamma` per round.
    ///
    /// `gamma` must be at least `delta` so that the rewards-to-stake ratio is
    /// non-negative.
    pub fn generic(params: &ModelParams, gamma: f64, price0: f64) -> Result<Self, ModelError> {
        if !(price0 > 0.0 && price0.is_finite()) {
            return Err(ModelError::Domain(format!(
                "initial price must be positive, got {price0}"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ModelError::Domain(format!(
                "price factor must be positive, got {gamma}"
            )));
        }
        let (kappa_r, kappa_s) = kappa_constants(params)?;
        let delta = params.delta;
        if gamma < delta {
            return Err(ModelError::Domain(format!(
                "price factor {gamma} below delta {delta} needs negative rewards"
            )));
        }
        let ser2fees = gamma / (delta * kappa_s);
        let rew2stake = if gamma == 1.0 {
            (1.0 - delta) / (delta * kappa_r)
        } else {
            (gamma / delta - 1.0) / kappa_r
        };
        let a = rew2stake * params.n as f64 * params.validator_share();
        let b = rew2stake / (ser2fees * price0);
        let growth = 1.0 + rew2stake * kappa_r;
        Ok(Self {
            kappa_r,
            kappa_s,
            ser2fees,
            rew2stake,
            a,
            b,
            growth,
            gamma,
            price0,
        })
    }

    pub fn is_stable(&self) -> bool {
        self.gamma == 1.0
    }
}

/// Alias for [`EquilibriumConstants::stable`].
pub fn stable_ratios(params: &ModelParams, price0: f64) -> Result<EquilibriumConstants, ModelError> {
    EquilibriumConstants::stable(params, price0)
}
