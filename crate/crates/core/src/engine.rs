//! Round-by-round simulation with exact per-capita bookkeeping, plus the
//! audits run over finished traces.

use std::fmt;

use thiserror::Error;

use crate::exec::Execution;
use crate::model::{EquilibriumConstants, ModelError, ModelParams};
use crate::scenario::{Mode, ScenarioConfig};
use crate::single_token::{
    equilibrium_strategies, price_at, SingleTokenState, StrategyProfile,
};
use crate::two_token::{
    fundamental_price_a, mechanism_rewards, price_a_path, two_token_round_strategies,
    TwoTokenConstants, TwoTokenError, TwoTokenProfile, TwoTokenState,
};

/// Any token quantity above this ends a run as exploded.
pub const EXPLOSION_LIMIT: f64 = 1e12;
/// Tolerance for the no-buy-back and conservation audits.
pub const TOKEN_TOLERANCE: f64 = 1e-9;
/// Relative tolerance for the single-token price identities.
pub const PRICE_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance for the staking-token price recursion.
pub const PRICE_A_TOLERANCE: f64 = 1e-12;
/// Deviation gains above `DEVIATION_TOLERANCE * scale` count as profitable.
pub const DEVIATION_TOLERANCE: f64 = 1e-6;

pub const DEVIATION_EPS: [f64; 6] = [1e-2, -1e-2, 1e-3, -1e-3, 1e-4, -1e-4];
pub const DEVIATION_ROUNDS: [usize; 4] = [0, 1, 10, 100];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("round {round}: constraint violated: {detail}")]
    Constraint { round: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Unsupported(String),
}

/// Per-capita flows of one token in one round.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TokenLedger {
    pub price: f64,
    /// Total reward minted this round.
    pub reward: f64,
    pub user_start: f64,
    pub validator_start: f64,
    /// Tokens each user spends on service.
    pub spent: f64,
    /// Tokens each user buys.
    pub bought: f64,
    /// Tokens each validator sells.
    pub sold: f64,
    /// Reward received by each validator.
    pub validator_reward: f64,
    pub user_end: f64,
    pub validator_end: f64,
    /// `m * bought - n * sold`
    pub system_net_sold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Market {
    Single(TokenLedger),
    /// Token A is staked, token B pays for service.
    Two { a: TokenLedger, b: TokenLedger },
}

impl Market {
    pub fn tokens(&self) -> Vec<(&'static str, &TokenLedger)> {
        match self {
            Market::Single(l) => vec![("token", l)],
            Market::Two { a, b } => vec![("A", a), ("B", b)],
        }
    }

    fn tokens_mut(&mut self) -> Vec<&mut TokenLedger> {
        match self {
            Market::Single(l) => vec![l],
            Market::Two { a, b } => vec![a, b],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub service: f64,
    pub market: Market,
    pub user_utility: f64,
    pub validator_utility: f64,
}

impl RoundRecord {
    /// The single-token ledger, if this is a single-token round.
    pub fn single(&self) -> Option<&TokenLedger> {
        match &self.market {
            Market::Single(l) => Some(l),
            Market::Two { .. } => None,
        }
    }

    /// The `(A, B)` ledgers, if this is a two-token round.
    pub fn two(&self) -> Option<(&TokenLedger, &TokenLedger)> {
        match &self.market {
            Market::Two { a, b } => Some((a, b)),
            Market::Single(_) => None,
        }
    }

    /// Mutable access for fault injection in tests and tools.
    pub fn ledgers_mut(&mut self) -> Vec<&mut TokenLedger> {
        self.market.tokens_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TerminalStatus {
    Completed,
    Exploded { round: usize },
    Infeasible { round: usize, reason: String },
}

impl TerminalStatus {
    pub fn is_exploded(&self) -> bool {
        matches!(self, TerminalStatus::Exploded { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, TerminalStatus::Infeasible { .. })
    }
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalStatus::Completed => write!(f, "completed"),
            TerminalStatus::Exploded { round } => write!(f, "exploded@t={round}"),
            TerminalStatus::Infeasible { round, reason } => {
                write!(f, "infeasible@t={round}: {reason}")
            }
        }
    }
}

/// Constants the trace was generated with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceModel {
    Single(EquilibriumConstants),
    Two(TwoTokenConstants),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub params: ModelParams,
    pub model: Option<TraceModel>,
    pub records: Vec<RoundRecord>,
    pub status: TerminalStatus,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest absolute per-round utility, at least 1.
    pub fn utility_scale(&self) -> f64 {
        self.records.iter().fold(1.0f64, |acc, r| {
            acc.max(r.user_utility.abs()).max(r.validator_utility.abs())
        })
    }
}

fn constraint(round: usize, detail: String) -> EngineError {
    EngineError::Constraint { round, detail }
}

fn settle_ledger(
    params: &ModelParams,
    round: usize,
    token: &str,
    mut l: TokenLedger,
) -> Result<TokenLedger, EngineError> {
    let m = params.m as f64;
    let n = params.n as f64;
    if l.spent > l.user_start + TOKEN_TOLERANCE || l.spent < 0.0 {
        return Err(constraint(
            round,
            format!("user spends {} {token} but holds {}", l.spent, l.user_start),
        ));
    }
    if l.sold > l.validator_start + l.validator_reward {
        return Err(constraint(
            round,
            format!(
                "validator selling constraint s <= tk_V + R_j: sells {} {token} of {}",
                l.sold,
                l.validator_start + l.validator_reward
            ),
        ));
    }
    if -l.bought > l.user_start - l.spent {
        return Err(constraint(
            round,
            format!(
                "user selling constraint -b <= tk_U - u: sells {} {token} of {}",
                -l.bought,
                l.user_start - l.spent
            ),
        ));
    }
    l.user_end = l.user_start - l.spent + l.bought;
    l.validator_end = l.validator_start + l.validator_reward - l.sold;
    l.system_net_sold = m * l.bought - n * l.sold;
    Ok(l)
}

/// Applies one single-token round at the symmetric point.
///
/// Both holdings must stay strictly positive.
pub fn run_round(
    params: &ModelParams,
    state: &SingleTokenState,
    strategies: &StrategyProfile,
) -> Result<RoundRecord, EngineError> {
    let ledger = TokenLedger {
        price: state.price,
        reward: state.reward,
        user_start: state.tk_u,
        validator_start: state.tk_v,
        spent: strategies.u_u,
        bought: strategies.b_u,
        sold: strategies.s_v,
        validator_reward: state.reward * params.validator_share(),
        ..TokenLedger::default()
    };
    let l = settle_ledger(params, state.t, "tokens", ledger)?;
    if !(l.user_end > 0.0) {
        return Err(constraint(state.t, format!("user holding {} is not positive", l.user_end)));
    }
    if !(l.validator_end > 0.0) {
        return Err(constraint(
            state.t,
            format!("validator holding {} is not positive", l.validator_end),
        ));
    }
    Ok(RoundRecord {
        t: state.t,
        service: state.service,
        market: Market::Single(l),
        user_utility: state.service * params.user_share() * params.g - l.bought * l.price,
        validator_utility: l.sold * l.price - params.v,
    })
}

/// Applies one two-token round: users spend and rebuy B, validators sell
/// their B rewards and keep their A stake.
pub fn run_two_token_round(
    params: &ModelParams,
    state: &TwoTokenState,
    profile: &TwoTokenProfile,
) -> Result<RoundRecord, EngineError> {
    let a = settle_ledger(
        params,
        state.t,
        "A",
        TokenLedger {
            price: state.price_a,
            reward: state.r_a,
            user_start: 0.0,
            validator_start: state.a_v,
            spent: 0.0,
            bought: 0.0,
            sold: profile.s_a,
            validator_reward: state.r_a * params.validator_share(),
            ..TokenLedger::default()
        },
    )?;
    let b = settle_ledger(
        params,
        state.t,
        "B",
        TokenLedger {
            price: state.price_b,
            reward: state.r_b,
            user_start: state.b_u,
            validator_start: 0.0,
            spent: profile.u_b,
            bought: profile.b_b,
            sold: profile.s_b,
            validator_reward: state.r_b * params.validator_share(),
            ..TokenLedger::default()
        },
    )?;
    if !(a.validator_end > 0.0) {
        return Err(constraint(state.t, format!("validator A holding {} is not positive", a.validator_end)));
    }
    if !(b.user_end > 0.0) {
        return Err(constraint(state.t, format!("user B holding {} is not positive", b.user_end)));
    }
    Ok(RoundRecord {
        t: state.t,
        service: state.service,
        market: Market::Two { a, b },
        user_utility: state.service * params.user_share() * params.g
            - a.bought * a.price
            - b.bought * b.price,
        validator_utility: a.sold * a.price + b.sold * b.price - params.v,
    })
}

fn exceeds_limit(xs: &[f64]) -> bool {
    xs.iter().any(|x| !(x.abs() <= EXPLOSION_LIMIT))
}

/// Runs a validated scenario for its horizon or until it explodes or
/// becomes infeasible.
pub fn run_scenario(config: &ScenarioConfig) -> Trace {
    let mut trace = Trace {
        params: config.params.clone(),
        model: None,
        records: Vec::with_capacity(config.horizon),
        status: TerminalStatus::Completed,
    };
    let result = match config.mode {
        Mode::SingleToken => run_single(config, &mut trace),
        Mode::TwoToken => run_two(config, &mut trace),
    };
    if let Err(status) = result {
        trace.status = status;
    }
    trace
}

fn infeasible(round: usize, reason: impl fmt::Display) -> TerminalStatus {
    TerminalStatus::Infeasible {
        round,
        reason: reason.to_string(),
    }
}

fn run_single(config: &ScenarioConfig, trace: &mut Trace) -> Result<(), TerminalStatus> {
    let params = &config.params;
    let consts = EquilibriumConstants::generic(params, config.gamma, config.price0)
        .map_err(|e| infeasible(0, e))?;
    trace.model = Some(TraceModel::Single(consts));
    let m = params.m as f64;
    let n = params.n as f64;
    let conv = config.price_convention;
    let price = |t: usize| price_at(config.price0, consts.gamma, t, conv);
    let r0 = config.policy.initial();
    if consts.rew2stake <= 0.0 {
        return Err(infeasible(0, "rewards-to-stake ratio is zero; validators hold no stake"));
    }
    let s0 = config.service.at(0);
    let mut state = SingleTokenState {
        t: 0,
        tk_u: s0 / (m * consts.ser2fees * price(0)),
        tk_v: r0 / (n * consts.rew2stake),
        price: price(0),
        service: s0,
        reward: r0,
    };
    for t in 0..config.horizon {
        if exceeds_limit(&[state.tk_u, state.tk_v, state.reward]) {
            return Err(TerminalStatus::Exploded { round: t });
        }
        let s_next = config.service.at(t + 1);
        let p_next = price(t + 1);
        let demand = s_next / (consts.ser2fees * p_next);
        let r_next = config.policy.next_reward(t, state.reward, &consts, demand);
        let profile = equilibrium_strategies(params, &consts, &state, s_next, r_next, p_next);
        if exceeds_limit(&[profile.b_u, profile.s_v]) {
            return Err(TerminalStatus::Exploded { round: t });
        }
        let record = run_round(params, &state, &profile).map_err(|e| infeasible(t, e))?;
        let l = record.single().copied().expect("single-token record");
        trace.records.push(record);
        state = SingleTokenState {
            t: t + 1,
            tk_u: l.user_end,
            tk_v: l.validator_end,
            price: p_next,
            service: s_next,
            reward: r_next,
        };
    }
    Ok(())
}

fn run_two(config: &ScenarioConfig, trace: &mut Trace) -> Result<(), TerminalStatus> {
    let params = &config.params;
    let s0 = config.service.at(0);
    let consts = TwoTokenConstants::new(params, config.a_v0, s0).map_err(|e| infeasible(0, e))?;
    trace.model = Some(TraceModel::Two(consts));
    let settle = config.service.settles_at();
    let fundamental = fundamental_price_a(
        params.delta,
        consts.q,
        |t| config.service.at(t),
        settle,
        config.service.at(settle),
        config.horizon,
    );
    let price_a0 = config.price_a0.unwrap_or(fundamental[0]);
    let (prices_a, failure) = match price_a_path(params.delta, &fundamental, price_a0) {
        Ok(p) => (p, None),
        Err(err) => {
            let round = match err {
                TwoTokenError::NegativePrice { round, .. } => round,
                _ => 0,
            };
            let prefix = price_a_path(params.delta, &fundamental[..round], price_a0)
                .unwrap_or_default();
            (prefix, Some(infeasible(round, err)))
        }
    };
    let p_b = config.price_b0;
    let m = params.m as f64;
    let mut b_u = s0 * params.delta * consts.kappa_s / (m * p_b);
    let a_v = config.a_v0;
    for t in 0..config.horizon {
        if t >= prices_a.len() {
            return Err(failure.unwrap_or_else(|| infeasible(t, "price path ended early")));
        }
        let service = config.service.at(t);
        let s_next = config.service.at(t + 1);
        let (r_a, r_b) = mechanism_rewards(params, s_next, p_b).map_err(|e| infeasible(t, e))?;
        let state = TwoTokenState {
            t,
            b_u,
            a_v,
            price_a: prices_a[t],
            price_b: p_b,
            r_a,
            r_b,
            service,
        };
        if exceeds_limit(&[b_u, a_v, r_b]) {
            return Err(TerminalStatus::Exploded { round: t });
        }
        let profile =
            two_token_round_strategies(params, &state, s_next).map_err(|e| infeasible(t, e))?;
        let record =
            run_two_token_round(params, &state, &profile).map_err(|e| infeasible(t, e))?;
        b_u = record.two().expect("two-token record").1.user_end;
        trace.records.push(record);
    }
    Ok(())
}

/// Outcome of one audit over a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub first_failure: Option<usize>,
    pub passed: bool,
    /// Number of residuals evaluated.
    pub checked: usize,
}

impl AuditReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_residual: 0.0,
            tolerance,
            first_failure: None,
            passed: true,
            checked: 0,
        }
    }

    fn observe(&mut self, t: usize, residual: f64) {
        self.checked += 1;
        if !(residual <= self.max_residual) {
            self.max_residual = if residual.is_nan() { f64::INFINITY } else { residual };
        }
        if !(residual <= self.tolerance) && self.first_failure.is_none() {
            self.first_failure = Some(t);
        }
        self.passed = self.max_residual <= self.tolerance;
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: max residual {:.3e} (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_residual,
            self.tolerance
        )?;
        if let Some(t) = self.first_failure {
            write!(f, ", first failure at t={t}")?;
        }
        if self.checked == 0 {
            write!(f, " [no applicable rounds]")?;
        }
        Ok(())
    }
}

/// The system never buys tokens: `system_net_sold >= -1e-9` for every round
/// and token, relative to the token stock once it exceeds one token.
pub fn audit_no_buy_back(trace: &Trace) -> AuditReport {
    let mut rep = AuditReport::new("no-buy-back", TOKEN_TOLERANCE);
    let m = trace.params.m as f64;
    let n = trace.params.n as f64;
    for r in &trace.records {
        for (_, l) in r.market.tokens() {
            let stock = [m * l.user_start, n * l.validator_start, m * l.bought, n * l.sold]
                .iter()
                .fold(1.0f64, |a, x| a.max(x.abs()));
            rep.observe(r.t, (-l.system_net_sold).max(0.0) / stock);
        }
    }
    rep
}

/// Token bookkeeping closes every round: holdings change only through
/// rewards, spending and the system's net sales, and each round starts
/// where the previous one ended.
pub fn conservation_audit(trace: &Trace) -> AuditReport {
    let mut rep = AuditReport::new("conservation", TOKEN_TOLERANCE);
    let m = trace.params.m as f64;
    let n = trace.params.n as f64;
    let mut prev: Option<&RoundRecord> = None;
    for r in &trace.records {
        for (i, (_, l)) in r.market.tokens().into_iter().enumerate() {
            let start = m * l.user_start + n * l.validator_start;
            let end = m * l.user_end + n * l.validator_end;
            let scale = start.abs().max(end.abs()).max(1.0);
            let flow = end - start - n * l.validator_reward + m * l.spent - l.system_net_sold;
            let user = l.user_end - (l.user_start - l.spent + l.bought);
            let val = l.validator_end - (l.validator_start + l.validator_reward - l.sold);
            let mut worst = flow.abs().max(m * user.abs()).max(n * val.abs());
            if let Some(p) = prev {
                let (_, pl) = p.market.tokens()[i];
                worst = worst
                    .max(m * (l.user_start - pl.user_end).abs())
                    .max(n * (l.validator_start - pl.validator_end).abs());
            }
            rep.observe(r.t, worst / scale);
        }
        prev = Some(r);
    }
    rep
}

fn relative(residual: f64, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        residual.abs()
    } else {
        residual.abs() / scale
    }
}

/// Equilibrium price identities along the trace.
///
/// Single token: `price^{t-1} = delta R^t price^t` and `price^t R^t = S^t`
/// (relative). Two tokens: the staking-token recursion (absolute) and the
/// service-token user condition `price_B^{t-1} = delta S^t` (relative).
pub fn audit_price_identity(trace: &Trace) -> Vec<AuditReport> {
    let p = &trace.params;
    let m = p.m as f64;
    let n = p.n as f64;
    let delta = p.delta;
    let (kappa_r, kappa_s) = match trace.model {
        Some(TraceModel::Single(c)) => (c.kappa_r, c.kappa_s),
        Some(TraceModel::Two(c)) => (c.kappa_r, c.kappa_s),
        None => return Vec::new(),
    };
    match trace.model {
        Some(TraceModel::Single(_)) => {
            let mut rec = AuditReport::new("price recursion", PRICE_TOLERANCE);
            let mut ident = AuditReport::new("price identity", PRICE_TOLERANCE);
            let mut prev_price = None;
            for r in &trace.records {
                let l = r.single().expect("single-token trace");
                let big_r = 1.0 + l.reward / (n * l.validator_start) * kappa_r;
                let big_s = r.service / (m * l.user_start) * kappa_s;
                let lhs = l.price * big_r;
                ident.observe(r.t, relative(lhs - big_s, &[lhs, big_s]));
                if let Some(pp) = prev_price {
                    let rhs = delta * big_r * l.price;
                    rec.observe(r.t, relative(pp - rhs, &[pp, rhs]));
                }
                prev_price = Some(l.price);
            }
            vec![rec, ident]
        }
        Some(TraceModel::Two(_)) => {
            let mut eq_a = AuditReport::new("staking-token recursion", PRICE_A_TOLERANCE);
            let mut eq_b = AuditReport::new("service-token validator recursion", PRICE_TOLERANCE);
            let mut user = AuditReport::new("service-token user condition", PRICE_TOLERANCE);
            let mut prev: Option<(&TokenLedger, &TokenLedger)> = None;
            for r in &trace.records {
                let (a, b) = r.two().expect("two-token trace");
                let i_a = a.reward / (n * a.validator_start) * kappa_r;
                let i_b = b.reward / (n * a.validator_start) * kappa_r;
                if let Some((pa, pb)) = prev {
                    let rhs = delta * a.price * (1.0 + i_a) + delta * b.price * i_b;
                    eq_a.observe(r.t, (pa.price - rhs).abs());
                    if b.validator_start > 0.0 {
                        // validators carrying B value it like a stake
                        let j_b = b.reward / (n * b.validator_start) * kappa_r;
                        let j_a = a.reward / (n * b.validator_start) * kappa_r;
                        let rhs = delta * b.price * (1.0 + j_b) + delta * a.price * j_a;
                        eq_b.observe(r.t, relative(pb.price - rhs, &[pb.price, rhs]));
                    }
                    let big_s = r.service / (m * b.user_start) * kappa_s;
                    user.observe(r.t, relative(pb.price - delta * big_s, &[pb.price, delta * big_s]));
                }
                prev = Some((a, b));
            }
            vec![eq_a, eq_b, user]
        }
        None => Vec::new(),
    }
}

/// The no-buy-back, conservation and price-identity audits.
pub fn run_audits(trace: &Trace) -> Vec<AuditReport> {
    let mut out = vec![audit_no_buy_back(trace), conservation_audit(trace)];
    out.extend(audit_price_identity(trace));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeviationRole {
    User,
    Validator,
}

impl fmt::Display for DeviationRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviationRole::User => "user",
            DeviationRole::Validator => "validator",
        })
    }
}

/// Per-round utilities of one player for rounds `t..t + len`, with a
/// one-shot deviation of size `eps` at round `t`. `eps = 0` reproduces the
/// equilibrium path.
fn deviation_utilities(
    trace: &Trace,
    role: DeviationRole,
    t: usize,
    eps: f64,
    len: usize,
) -> Result<Vec<f64>, EngineError> {
    let p = &trace.params;
    let recs = &trace.records;
    let mut u: Vec<f64> = recs[t..t + len]
        .iter()
        .map(|r| match role {
            DeviationRole::User => r.user_utility,
            DeviationRole::Validator => r.validator_utility,
        })
        .collect();
    let (r0, r1) = (&recs[t], &recs[t + 1]);
    let m = p.m as f64;
    let n = p.n as f64;
    match role {
        DeviationRole::Validator => {
            // Sell eps more stake now, earn the smaller reward share next
            // round, then rebalance back to the path holding.
            let (stake1, rew1, pay0, pay1) = match (&r0.market, &r1.market) {
                (Market::Single(l0), Market::Single(l1)) => (l1, l1, l0.price, l1.price),
                (Market::Two { a: a0, .. }, Market::Two { a: a1, b: b1 }) => {
                    (a1, b1, a0.price, b1.price)
                }
                _ => return Err(EngineError::Unsupported("mixed trace".into())),
            };
            let h = stake1.validator_start - eps;
            if !(h > 0.0) {
                return Err(constraint(t, format!("deviation {eps} leaves stake {h} <= 0")));
            }
            let x = h / (h + (n - 1.0) * stake1.validator_start);
            let reward = rew1.reward * p.r(x);
            let base0 = u[0];
            u[0] = base0 + eps * pay0;
            match &r1.market {
                Market::Single(l1) => {
                    let sold = h + reward - l1.validator_end;
                    u[1] = sold * l1.price - p.v;
                }
                Market::Two { a: a1, .. } => {
                    u[1] = (a1.sold - eps) * a1.price + reward * pay1 - p.v;
                }
            }
        }
        DeviationRole::User => {
            let (l0, l1) = match (&r0.market, &r1.market) {
                (Market::Single(l0), Market::Single(l1)) => (l0, l1),
                (Market::Two { b: b0, .. }, Market::Two { b: b1, .. }) => (b0, b1),
                _ => return Err(EngineError::Unsupported("mixed trace".into())),
            };
            let other_cost = u[0] - (r0.service * p.user_share() * p.g - l0.bought * l0.price);
            if eps >= 0.0 {
                // Spend eps less, buy eps less; holdings rejoin the path at t+1.
                let spend = l0.spent - eps;
                if !(spend > 0.0) {
                    return Err(constraint(t, format!("deviation {eps} leaves spending {spend} <= 0")));
                }
                let x = spend / (spend + (m - 1.0) * l0.spent);
                u[0] = r0.service * p.s(x) * p.g - (l0.bought - eps) * l0.price + other_cost;
            } else {
                // Buy |eps| more now and spend it next round.
                let e = -eps;
                u[0] = r0.service * p.user_share() * p.g - (l0.bought + e) * l0.price + other_cost;
                let other1 = u[1] - (r1.service * p.user_share() * p.g - l1.bought * l1.price);
                let spend = l1.spent + e;
                let x = spend / (spend + (m - 1.0) * l1.spent);
                u[1] = r1.service * p.s(x) * p.g - l1.bought * l1.price + other1;
            }
        }
    }
    Ok(u)
}

fn discounted(delta: f64, u: &[f64]) -> f64 {
    let mut disc = 1.0;
    let mut sum = 0.0;
    for x in u {
        sum += disc * x;
        disc *= delta;
    }
    sum
}

/// Gain in discounted utility from round `t` on when one player deviates by
/// `eps` at round `t` and then returns to the equilibrium path, with prices
/// held at their path values. Negative means the deviation does not pay.
pub fn one_shot_deviation_gain(
    trace: &Trace,
    role: DeviationRole,
    t: usize,
    eps: f64,
    horizon: usize,
) -> Result<f64, EngineError> {
    if t + 2 >= trace.records.len() {
        return Err(EngineError::Unsupported(format!(
            "round {t} needs at least {} recorded rounds, trace has {}",
            t + 3,
            trace.records.len()
        )));
    }
    let len = horizon.max(3).min(trace.records.len() - t);
    let delta = trace.params.delta;
    let base = discounted(delta, &deviation_utilities(trace, role, t, 0.0, len)?);
    let dev = discounted(delta, &deviation_utilities(trace, role, t, eps, len)?);
    Ok(dev - base)
}

/// One probe of the deviation suite.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationProbe {
    pub role: DeviationRole,
    pub t: usize,
    pub eps: f64,
    pub gain: Result<f64, EngineError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationSuite {
    pub probes: Vec<DeviationProbe>,
    /// Utility scale the tolerance is measured against.
    pub scale: f64,
    pub max_gain: f64,
    pub passed: bool,
}

impl fmt::Display for DeviationSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let skipped = self.probes.iter().filter(|p| p.gain.is_err()).count();
        write!(
            f,
            "{} one-shot deviations: {} probes ({} skipped), max gain {:.3e} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.probes.len(),
            skipped,
            self.max_gain,
            DEVIATION_TOLERANCE * self.scale
        )
    }
}

/// Runs one-shot deviations for both roles over the standard epsilons and
/// rounds that fit in the trace. Probes whose deviation would break a
/// holding constraint are recorded as skipped.
pub fn deviation_suite(trace: &Trace, exec: Execution) -> DeviationSuite {
    let mut cases = Vec::new();
    for role in [DeviationRole::Validator, DeviationRole::User] {
        for &t in DEVIATION_ROUNDS.iter().filter(|&&t| t + 2 < trace.len()) {
            for &eps in &DEVIATION_EPS {
                cases.push((role, t, eps));
            }
        }
    }
    let horizon = trace.len();
    let probes = exec.map(&cases, |&(role, t, eps)| DeviationProbe {
        role,
        t,
        eps,
        gain: one_shot_deviation_gain(trace, role, t, eps, horizon),
    });
    let scale = trace.utility_scale();
    let max_gain = probes
        .iter()
        .filter_map(|p| p.gain.as_ref().ok())
        .fold(f64::NEG_INFINITY, |a, &g| a.max(g));
    let zero_ok = DEVIATION_ROUNDS
        .iter()
        .filter(|&&t| t + 2 < trace.len())
        .all(|&t| {
            [DeviationRole::User, DeviationRole::Validator]
                .iter()
                .all(|&role| one_shot_deviation_gain(trace, role, t, 0.0, horizon) == Ok(0.0))
        });
    let any = probes.iter().any(|p| p.gain.is_ok());
    DeviationSuite {
        passed: any && zero_ok && max_gain <= DEVIATION_TOLERANCE * scale,
        probes,
        scale,
        max_gain,
    }
}
