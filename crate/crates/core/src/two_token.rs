//! Two-token model: token A is staked, token B pays for service.
//!
//! Under the stable-price mechanism validators are paid only in B, sized so
//! that the B market clears exactly, and token A keeps its value through the
//! discounted stream of B rewards it entitles its holders to.

use thiserror::Error;

use crate::model::{kappa_constants, ModelError, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwoTokenError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "price_A turns negative ({price}) at round {round}; \
         initial price_A must be at least {min_feasible}"
    )]
    NegativePrice {
        round: usize,
        price: f64,
        min_feasible: f64,
    },
    #[error("price_B would have to change: {0}")]
    UnstablePriceB(String),
}

/// Per-capita state at the start of a round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoTokenState {
    pub t: usize,
    pub b_u: f64,
    pub a_v: f64,
    pub price_a: f64,
    pub price_b: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub service: f64,
}

/// Mechanism constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoTokenConstants {
    /// `delta kappa_S / (n r(1/n))`: B-reward value per unit of next service.
    pub l: f64,
    /// `1 / (delta kappa_S)`
    pub ser2fees_b: f64,
    /// Per-round price-A source term `q S` at the reference service level.
    pub c: f64,
    pub kappa_r: f64,
    pub kappa_s: f64,
    /// `L kappa_R / (n a_V0)`: price-A source per unit of service.
    pub q: f64,
}

impl TwoTokenConstants {
    /// Constants for an initial per-validator stake `a_v0`, with `c`
    /// evaluated at service level `service`.
    pub fn new(params: &ModelParams, a_v0: f64, service: f64) -> Result<Self, ModelError> {
        if !(a_v0 > 0.0 && a_v0.is_finite()) {
            return Err(ModelError::Domain(format!(
                "a_V0 must be positive, got {a_v0}"
            )));
        }
        let (kappa_r, kappa_s) = kappa_constants(params)?;
        let l = no_buy_back_coefficient(params)?;
        let q = l * kappa_r / (params.n as f64 * a_v0);
        Ok(Self {
            l,
            ser2fees_b: 1.0 / (params.delta * kappa_s),
            c: q * service,
            kappa_r,
            kappa_s,
            q,
        })
    }

    /// Price of A that the constant source `c` sustains forever.
    pub fn stationary_price_a(&self, delta: f64) -> f64 {
        self.c * delta / (1.0 - delta)
    }
}

/// `L = delta kappa_S / (n r(1/n))`.
pub fn no_buy_back_coefficient(params: &ModelParams) -> Result<f64, ModelError> {
    let (_, kappa_s) = kappa_constants(params)?;
    let share = params.n as f64 * params.validator_share();
    if share <= 0.0 {
        return Err(ModelError::Degenerate(
            "validators receive no reward share at the symmetric point".into(),
        ));
    }
    Ok(params.delta * kappa_s / share)
}

/// Largest total B reward that avoids buying back B tokens.
pub fn reward_cap_b(params: &ModelParams, service_next: f64, price_b: f64) -> Result<f64, ModelError> {
    if !(service_next > 0.0) {
        return Err(ModelError::Domain(format!(
            "next service level must be positive, got {service_next}"
        )));
    }
    if !(price_b > 0.0) {
        return Err(ModelError::Domain(format!(
            "price_B must be positive, got {price_b}"
        )));
    }
    Ok(service_next * no_buy_back_coefficient(params)? / price_b)
}

/// Rewards `(R_A, R_B)` paid by the stable-price mechanism.
pub fn mechanism_rewards(
    params: &ModelParams,
    service_next: f64,
    price_b: f64,
) -> Result<(f64, f64), ModelError> {
    Ok((0.0, reward_cap_b(params, service_next, price_b)?))
}

/// Result of one forward step of the price-A recursion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriceStep {
    Feasible(f64),
    Negative { round: usize, price: f64 },
}

impl PriceStep {
    pub fn value(&self) -> f64 {
        match *self {
            PriceStep::Feasible(p) => p,
            PriceStep::Negative { price, .. } => price,
        }
    }
}

/// `price_A^t = price_A^{t-1} / delta - q S^{t+1}` with
/// `q = L kappa_R / (n a_V0)`.
pub fn price_a_step(
    params: &ModelParams,
    price_a_prev: f64,
    service_next: f64,
    l: f64,
    a_v0: f64,
    round: usize,
) -> Result<PriceStep, ModelError> {
    if !(a_v0 > 0.0) {
        return Err(ModelError::Domain(format!(
            "a_V0 must be positive, got {a_v0}"
        )));
    }
    let (kappa_r, _) = kappa_constants(params)?;
    let q = l * kappa_r / (params.n as f64 * a_v0);
    let p = price_a_prev / params.delta - q * service_next;
    Ok(if p < 0.0 {
        PriceStep::Negative { round, price: p }
    } else {
        PriceStep::Feasible(p)
    })
}

/// Smallest initial price of A keeping it non-negative for `horizon` rounds:
/// `sum_{k=1}^{horizon} delta^k S^{k+1} q`.
///
/// `service[t]` is the service level of round `t`; indices past the end reuse
/// the last entry.
pub fn initial_price_a(
    params: &ModelParams,
    service: &[f64],
    l: f64,
    a_v0: f64,
    horizon: usize,
) -> Result<f64, ModelError> {
    if horizon == 0 {
        return Err(ModelError::Domain("horizon must be at least 1".into()));
    }
    if service.is_empty() {
        return Ok(0.0);
    }
    let (kappa_r, _) = kappa_constants(params)?;
    let q = l * kappa_r / (params.n as f64 * a_v0);
    let at = |t: usize| service[t.min(service.len() - 1)];
    let mut sum = 0.0;
    let mut disc = 1.0;
    for t in 0..horizon {
        disc *= params.delta;
        sum += disc * at(t + 2);
    }
    Ok(sum * q)
}

/// Fundamental price of A for rounds `0..=rounds`, where the service level
/// is `service(t)` and constant at `settled` from round `settle_from` on.
///
/// `F_t = q sum_{k>=1} delta^k S^{t+1+k}`, computed backwards from the
/// stationary tail so that no step amplifies rounding errors.
pub fn fundamental_price_a<F>(
    delta: f64,
    q: f64,
    service: F,
    settle_from: usize,
    settled: f64,
    rounds: usize,
) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    let last = rounds.max(settle_from);
    let mut f = vec![0.0; last + 1];
    f[last] = q * settled * delta / (1.0 - delta);
    for t in (1..=last).rev() {
        f[t - 1] = delta * (f[t] + q * service(t + 1));
    }
    f.truncate(rounds + 1);
    f
}

/// Price-A path from an arbitrary initial price: the fundamental plus a
/// bubble term `(p0 - F_0) / delta^t`.
///
/// Fails at the first round whose price is negative, naming the smallest
/// initial price that stays feasible over the path.
pub fn price_a_path(
    delta: f64,
    fundamental: &[f64],
    price_a0: f64,
) -> Result<Vec<f64>, TwoTokenError> {
    let f0 = fundamental[0];
    let bubble = price_a0 - f0;
    let mut out = Vec::with_capacity(fundamental.len());
    let mut disc = 1.0;
    for (t, &f) in fundamental.iter().enumerate() {
        if t > 0 {
            disc *= delta;
        }
        let p = if t == 0 { price_a0 } else { f + bubble / disc };
        if p < 0.0 {
            let mut min_feasible: f64 = 0.0;
            let mut d = 1.0;
            for &g in fundamental.iter() {
                min_feasible = min_feasible.max(f0 - d * g);
                d *= delta;
            }
            return Err(TwoTokenError::NegativePrice {
                round: t,
                price: p,
                min_feasible,
            });
        }
        out.push(p);
    }
    Ok(out)
}

/// Per-capita equilibrium actions in the two-token model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoTokenProfile {
    /// B tokens each user spends (all of its holding).
    pub u_b: f64,
    /// B tokens each user buys for the next round.
    pub b_b: f64,
    /// B tokens each validator sells (its whole reward).
    pub s_b: f64,
    /// A tokens each validator sells; always zero on the mechanism path.
    pub s_a: f64,
    /// `m b_B - n s_B`
    pub system_sell_b: f64,
    pub system_sell_a: f64,
}

/// Round strategies under the stable-price mechanism. `state.r_b` must be
/// the mechanism reward for `service_next`.
pub fn two_token_round_strategies(
    params: &ModelParams,
    state: &TwoTokenState,
    service_next: f64,
) -> Result<TwoTokenProfile, TwoTokenError> {
    if !(state.price_b > 0.0) {
        return Err(TwoTokenError::UnstablePriceB(format!(
            "price_B must be positive, got {}",
            state.price_b
        )));
    }
    let (_, r_b) = mechanism_rewards(params, service_next, state.price_b)?;
    if (state.r_b - r_b).abs() > 1e-9 * r_b.max(1.0) || state.r_a != 0.0 {
        return Err(TwoTokenError::UnstablePriceB(format!(
            "rewards (R_A, R_B) = ({}, {}) differ from the mechanism's (0, {r_b})",
            state.r_a, state.r_b
        )));
    }
    let (_, kappa_s) = kappa_constants(params)?;
    let m = params.m as f64;
    let n = params.n as f64;
    let b_b = service_next * params.delta * kappa_s / (m * state.price_b);
    let s_b = state.r_b * params.validator_share();
    Ok(TwoTokenProfile {
        u_b: state.b_u,
        b_b,
        s_b,
        s_a: 0.0,
        system_sell_b: m * b_b - n * s_b,
        system_sell_a: 0.0,
    })
}

/// Comparison between selling the whole stake at round `tau` and staying
/// on the equilibrium path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationBound {
    /// `delta^tau a_V0 price_A^tau`
    pub deviation_value: f64,
    /// Discounted per-validator value of the reward stream minus costs.
    pub equilibrium_value: f64,
    /// `deviation_value <= a_V0 price_A^0`
    pub ok: bool,
}

/// Value of dumping all A tokens at round `tau` versus the equilibrium
/// stream. `r_b[t]` and `price_b[t]` cover the truncation horizon.
pub fn deviation_value_bound(
    params: &ModelParams,
    a_v0: f64,
    price_a: &[f64],
    tau: usize,
    r_b: &[f64],
    price_b: &[f64],
) -> Result<DeviationBound, ModelError> {
    let p_tau = *price_a.get(tau).ok_or_else(|| {
        ModelError::Domain(format!(
            "tau = {tau} is beyond the price series of length {}",
            price_a.len()
        ))
    })?;
    let deviation_value = params.delta.powi(tau as i32) * a_v0 * p_tau;
    let share = params.validator_share();
    let mut disc = 1.0;
    let mut equilibrium_value = 0.0;
    for (r, p) in r_b.iter().zip(price_b) {
        equilibrium_value += disc * (r * share * p - params.v);
        disc *= params.delta;
    }
    Ok(DeviationBound {
        deviation_value,
        equilibrium_value,
        ok: deviation_value <= a_v0 * price_a[0],
    })
}
