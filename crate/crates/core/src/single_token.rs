//! Single-token equilibria: price paths, stable-price holdings and the
//! minimal rewards that avoid token buy backs.

use thiserror::Error;

use crate::model::{EquilibriumConstants, ModelError, ModelParams};

/// Magnitude above which the closed form reports an explosion instead of a
/// value.
pub const CLOSED_FORM_LIMIT: f64 = 1e300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingleTokenError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no-buy-back violated: system would buy back {} tokens", -.system_sell)]
    BuyBack {
        system_sell: f64,
        profile: StrategyProfile,
    },
    #[error("rewards exploded past {CLOSED_FORM_LIMIT:e} at round {round}")]
    Explosion { round: usize },
}

/// How the price factor `gamma = delta * growth` is applied over time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PriceConvention {
    /// `price_t = price_0 / gamma^t`; the reading the no-buy-back algebra uses.
    #[default]
    Proof,
    /// `price_t = price_0 * gamma^t`.
    Figure,
}

impl PriceConvention {
    pub fn name(&self) -> &'static str {
        match self {
            PriceConvention::Proof => "proof",
            PriceConvention::Figure => "figure",
        }
    }
}

/// Per-capita state at the start of a round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleTokenState {
    pub t: usize,
    pub tk_u: f64,
    pub tk_v: f64,
    pub price: f64,
    pub service: f64,
    pub reward: f64,
}

/// Round-by-round reward rule for the single-token system.
#[derive(Clone, Debug, PartialEq)]
pub enum RewardPolicy {
    Constant(f64),
    /// Values past the end repeat the last entry.
    Explicit(Vec<f64>),
    /// Tight no-buy-back rewards, clamped from below at `floor`.
    MinimalNoBuyBack { r0: f64, floor: f64 },
}

impl RewardPolicy {
    pub fn initial(&self) -> f64 {
        match self {
            RewardPolicy::Constant(r) => *r,
            RewardPolicy::Explicit(v) => v.first().copied().unwrap_or(0.0),
            RewardPolicy::MinimalNoBuyBack { r0, .. } => *r0,
        }
    }

    /// Reward announced for round `t + 1`, given this round's reward and the
    /// users' total token demand `m * b_U` in round `t`.
    pub fn next_reward(
        &self,
        t: usize,
        reward: f64,
        consts: &EquilibriumConstants,
        demand: f64,
    ) -> f64 {
        match self {
            RewardPolicy::Constant(r) => *r,
            RewardPolicy::Explicit(v) => v
                .get(t + 1)
                .or_else(|| v.last())
                .copied()
                .unwrap_or(0.0),
            RewardPolicy::MinimalNoBuyBack { floor, .. } => {
                (reward * (1.0 + consts.a) - consts.rew2stake * demand).max(*floor)
            }
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            RewardPolicy::Constant(r) if !(*r >= 0.0 && r.is_finite()) => {
                out.push(format!("reward must be >= 0, got {r}"))
            }
            RewardPolicy::Explicit(v) => {
                if v.is_empty() {
                    out.push("explicit reward series is empty".to_string());
                }
                if let Some(bad) = v.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
                    out.push(format!("rewards must be >= 0, got {bad}"));
                }
            }
            RewardPolicy::MinimalNoBuyBack { r0, floor } => {
                if !(*floor >= 0.0 && floor.is_finite()) {
                    out.push(format!("floor must be >= 0, got {floor}"));
                }
                if !(*r0 >= *floor && r0.is_finite()) {
                    out.push(format!("R0 must be >= floor, got {r0}"));
                }
            }
            _ => {}
        }
        out
    }
}

/// Per-capita equilibrium actions for one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyProfile {
    /// Tokens each user spends on service.
    pub u_u: f64,
    /// Tokens each user buys (next round's holding).
    pub b_u: f64,
    /// Tokens each validator sells; negative means buying.
    pub s_v: f64,
    /// Tokens the system sells to clear the market, `m b_U - n s_V`.
    pub system_sell: f64,
}

/// Price at round `t`.
pub fn price_at(price0: f64, gamma: f64, t: usize, convention: PriceConvention) -> f64 {
    let factor = gamma.powi(t as i32);
    match convention {
        PriceConvention::Proof => price0 / factor,
        PriceConvention::Figure => price0 * factor,
    }
}

/// Prices for rounds `0..horizon`.
pub fn price_path(
    consts: &EquilibriumConstants,
    price0: f64,
    horizon: usize,
    convention: PriceConvention,
) -> Vec<f64> {
    (0..horizon)
        .map(|t| price_at(price0, consts.gamma, t, convention))
        .collect()
}

/// Holdings `(tk_U, tk_V)` that keep Ser2Fees and Rew2Stake at their
/// equilibrium values when the token trades at `price`.
pub fn equilibrium_holdings_at(
    params: &ModelParams,
    consts: &EquilibriumConstants,
    service: f64,
    reward: f64,
    price: f64,
) -> Result<(f64, f64), ModelError> {
    if !(service > 0.0) {
        return Err(ModelError::Domain(format!(
            "service level must be positive, got {service}"
        )));
    }
    if !(reward >= 0.0) {
        return Err(ModelError::Domain(format!(
            "reward must be non-negative, got {reward}"
        )));
    }
    if consts.rew2stake <= 0.0 {
        return Err(ModelError::Degenerate(
            "rewards-to-stake ratio is zero; validator stake is undetermined".into(),
        ));
    }
    let tk_u = service / (params.m as f64 * consts.ser2fees * price);
    let tk_v = reward / (params.n as f64 * consts.rew2stake);
    if tk_v <= 0.0 {
        return Err(ModelError::Degenerate(format!(
            "reward {reward} gives validator stake {tk_v}; holdings must be strictly positive"
        )));
    }
    Ok((tk_u, tk_v))
}

/// Stable-price holdings at the initial price:
/// `tk_U = S/m * delta * kappa_S`, `tk_V = R/n * delta/(1-delta) * kappa_R`
/// (for `price0 = 1`).
pub fn equilibrium_holdings(
    params: &ModelParams,
    consts: &EquilibriumConstants,
    service: f64,
    reward: f64,
) -> Result<(f64, f64), ModelError> {
    equilibrium_holdings_at(params, consts, service, reward, consts.price0)
}

/// Smallest reward for round `t + 1` that avoids a buy back in round `t`,
/// clamped at `floor`.
pub fn no_buy_back_min_next_reward(
    consts: &EquilibriumConstants,
    reward: f64,
    service_next: f64,
    t: usize,
    floor: f64,
) -> f64 {
    let demand_term = consts.b * service_next * consts.gamma.powi(t as i32 + 1);
    (reward * (1.0 + consts.a) - demand_term).max(floor)
}

/// Closed form of the unclamped minimal-reward recursion after `t` steps.
///
/// `service[tau]` is the service level of round `tau`; entries `1..=t` are
/// used.
pub fn minimal_reward_closed_form(
    consts: &EquilibriumConstants,
    r0: f64,
    service: &[f64],
    t: usize,
) -> Result<f64, SingleTokenError> {
    if t == 0 {
        return Ok(r0);
    }
    if service.len() <= t {
        return Err(ModelError::Domain(format!(
            "service series has {} entries, need index {t}",
            service.len()
        ))
        .into());
    }
    let growth = (1.0 + consts.a).powi(t as i32);
    let ratio = consts.gamma / (1.0 + consts.a);
    let discounted: f64 = (1..=t)
        .map(|tau| service[tau] * ratio.powi(tau as i32))
        .sum();
    let value = growth * (r0 - consts.b * discounted);
    if !growth.is_finite() || growth > CLOSED_FORM_LIMIT || !(value.abs() <= CLOSED_FORM_LIMIT) {
        return Err(SingleTokenError::Explosion { round: t });
    }
    Ok(value)
}

/// Fixed point `R* = b S / a` separating reward explosion from decay under a
/// constant service level and stable prices.
pub fn critical_initial_reward(
    consts: &EquilibriumConstants,
    service: f64,
) -> Result<f64, ModelError> {
    if (consts.gamma - 1.0).abs() > 1e-12 {
        return Err(ModelError::Domain(format!(
            "threshold needs stable prices, price factor is {}",
            consts.gamma
        )));
    }
    if !(service > 0.0) {
        return Err(ModelError::Domain(format!(
            "service level must be positive, got {service}"
        )));
    }
    if consts.a <= 0.0 {
        return Err(ModelError::Degenerate(
            "rewards-to-stake ratio is zero: no explosion threshold".into(),
        ));
    }
    Ok(consts.b * service / consts.a)
}

/// Equilibrium actions for a round given the next round's service, reward and
/// price. Never fails; the sign of `system_sell` tells whether the system
/// has to buy back tokens.
pub fn equilibrium_strategies(
    params: &ModelParams,
    consts: &EquilibriumConstants,
    state: &SingleTokenState,
    service_next: f64,
    reward_next: f64,
    price_next: f64,
) -> StrategyProfile {
    let m = params.m as f64;
    let n = params.n as f64;
    let b_u = service_next / (m * consts.ser2fees * price_next);
    let tk_v_next = reward_next / (n * consts.rew2stake);
    let s_v = state.tk_v + state.reward * params.validator_share() - tk_v_next;
    StrategyProfile {
        u_u: state.tk_u,
        b_u,
        s_v,
        system_sell: m * b_u - n * s_v,
    }
}

/// Stable-price round strategies built from the service and reward levels
/// of rounds `t` and `t + 1`.
///
/// Each validator sells `(R_t - R_next)/n * delta/(1-delta) * kappa_R +
/// R_t r(1/n)`, which moves its stake exactly to the next round's
/// equilibrium holding.
pub fn round_strategies_stable(
    params: &ModelParams,
    consts: &EquilibriumConstants,
    service: f64,
    service_next: f64,
    reward: f64,
    reward_next: f64,
) -> Result<StrategyProfile, SingleTokenError> {
    if !consts.is_stable() {
        return Err(ModelError::Domain("stable-price constants required".into()).into());
    }
    let m = params.m as f64;
    let n = params.n as f64;
    let delta = params.delta;
    if !(service > 0.0 && service_next > 0.0) {
        return Err(ModelError::Domain("service levels must be positive".into()).into());
    }
    let u_u = service / m * delta * consts.kappa_s / consts.price0;
    let b_u = service_next / m * delta * consts.kappa_s / consts.price0;
    let s_v = (reward - reward_next) / n * delta / (1.0 - delta) * consts.kappa_r
        + reward * params.validator_share();
    let profile = StrategyProfile {
        u_u,
        b_u,
        s_v,
        system_sell: m * b_u - n * s_v,
    };
    if profile.system_sell < -1e-9 {
        return Err(SingleTokenError::BuyBack {
            system_sell: profile.system_sell,
            profile,
        });
    }
    Ok(profile)
}
