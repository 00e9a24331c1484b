//! Proof-of-stake tokenomics equilibria.
//!
//! The crate models an economy of `m` users who pay tokens for a share of a
//! service level and `n` validators who stake tokens for a share of minted
//! rewards. It provides:
//!
//! * [`model`]: sharing schemes, economy parameters and the equilibrium
//!   constants (κ_R, κ_S, Ser2Fees, Rew2Stake, ...).
//! * [`single_token`]: price paths, stable-price holdings, the minimal
//!   no-buy-back reward recursion and its closed form, the explosion threshold
//!   and the per-round strategy generator.
//! * [`two_token`]: the staking/service token split, the reward cap and the
//!   stable-price mechanism.
//! * [`engine`]: a round-by-round ledger simulator plus audits (no buy back,
//!   price identities, conservation, one-shot deviations).
//! * [`scenario`]: the flat `key = value` config format, CSV traces, sweeps
//!   and figure presets.
//!
//! Batch evaluations (sweep grids, deviation suites) run through
//! [`exec::Execution`], which uses rayon when the `parallel` feature is on.

pub mod engine;
pub mod exec;
pub mod model;
pub mod scenario;
pub mod single_token;
pub mod two_token;

pub use engine::{
    audit_no_buy_back, audit_price_identity, conservation_audit, deviation_suite,
    one_shot_deviation_gain, run_audits, run_round, run_scenario, run_two_token_round,
    AuditReport, DeviationRole, DeviationSuite, RoundRecord, TerminalStatus, Trace,
};
pub use exec::Execution;
pub use model::{
    EquilibriumConstants, ModelError, ModelParams, SchemeKind, SchemeRole, SchemeSpec,
    ValidationReport,
};
pub use scenario::{parse_scenario, Mode, ScenarioConfig, ServiceSeries};
pub use single_token::{PriceConvention, RewardPolicy, StrategyProfile};
