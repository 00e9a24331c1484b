//! One-parameter sweeps: grid evaluation and threshold bisection.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{run_scenario, TerminalStatus};
use crate::exec::Execution;
use crate::scenario::{ScenarioConfig, ServiceSeries};
use crate::single_token::RewardPolicy;

pub const BISECTION_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    R0,
    SConst,
    Delta,
    PriceA0,
    AV0,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::R0 => "R0",
            SweepVar::SConst => "S_const",
            SweepVar::Delta => "delta",
            SweepVar::PriceA0 => "price_A0",
            SweepVar::AV0 => "a_V0",
        }
    }

    /// The terminal event a bisection on this variable looks for.
    pub fn predicate(&self, status: &TerminalStatus) -> bool {
        match self {
            SweepVar::R0 | SweepVar::SConst | SweepVar::Delta => status.is_exploded(),
            SweepVar::PriceA0 | SweepVar::AV0 => status.is_infeasible(),
        }
    }

    fn event(&self) -> &'static str {
        match self {
            SweepVar::R0 | SweepVar::SConst | SweepVar::Delta => "exploded",
            SweepVar::PriceA0 | SweepVar::AV0 => "infeasible",
        }
    }

    /// Copy of `base` with this variable set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = base.clone();
        match self {
            SweepVar::R0 => {
                c.policy = match c.policy {
                    RewardPolicy::MinimalNoBuyBack { floor, .. } => {
                        RewardPolicy::MinimalNoBuyBack { r0: value, floor }
                    }
                    _ => RewardPolicy::Constant(value),
                }
            }
            SweepVar::SConst => c.service = ServiceSeries::Constant(value),
            SweepVar::Delta => c.params.delta = value,
            SweepVar::PriceA0 => c.price_a0 = Some(value),
            SweepVar::AV0 => c.a_v0 = value,
        }
        c
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R0" => Ok(SweepVar::R0),
            "S_const" | "S" => Ok(SweepVar::SConst),
            "delta" => Ok(SweepVar::Delta),
            "price_A0" => Ok(SweepVar::PriceA0),
            "a_V0" => Ok(SweepVar::AV0),
            _ => Err(format!(
                "unknown sweep variable `{s}` (R0, S_const, delta, price_A0, a_V0)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepSpec {
    Grid(Vec<f64>),
    Bisect { lo: f64, hi: f64, rel_tol: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("bracket [{lo}, {hi}] does not straddle the threshold: both endpoints are {status}")]
    Bracket { lo: f64, hi: f64, status: String },
    #[error("invalid sweep: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVar,
    /// Every evaluated point in evaluation order.
    pub points: Vec<(f64, TerminalStatus)>,
    /// Final `(lo, hi)` bracket of a bisection.
    pub bracket: Option<(f64, f64)>,
    pub threshold: Option<f64>,
    pub iterations: usize,
}

/// Runs the scenario once with the variable at `value`. Configs that fail
/// validation count as infeasible at round 0.
pub fn evaluate(base: &ScenarioConfig, var: SweepVar, value: f64) -> TerminalStatus {
    let cfg = var.apply(base, value);
    let issues = cfg.issues();
    if let Some((field, msg)) = issues.first() {
        return TerminalStatus::Infeasible {
            round: 0,
            reason: format!("{field}: {msg}"),
        };
    }
    run_scenario(&cfg).status
}

pub fn sweep(
    base: &ScenarioConfig,
    var: SweepVar,
    spec: &SweepSpec,
    exec: Execution,
) -> Result<SweepResult, SweepError> {
    match spec {
        SweepSpec::Grid(values) => {
            let statuses = exec.map(values, |&v| evaluate(base, var, v));
            Ok(SweepResult {
                variable: var,
                points: values.iter().copied().zip(statuses).collect(),
                bracket: None,
                threshold: None,
                iterations: 0,
            })
        }
        &SweepSpec::Bisect { lo, hi, rel_tol } => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SweepError::Invalid(format!("need lo < hi, got [{lo}, {hi}]")));
            }
            if !(rel_tol > 0.0) {
                return Err(SweepError::Invalid(format!("tolerance must be > 0, got {rel_tol}")));
            }
            let ends = exec.map(&[lo, hi], |&v| evaluate(base, var, v));
            let (s_lo, s_hi) = (ends[0].clone(), ends[1].clone());
            let (p_lo, p_hi) = (var.predicate(&s_lo), var.predicate(&s_hi));
            let mut points = vec![(lo, s_lo), (hi, s_hi)];
            if p_lo == p_hi {
                let status = if p_lo { var.event().to_string() } else { format!("not {}", var.event()) };
                return Err(SweepError::Bracket { lo, hi, status });
            }
            let (mut a, mut b) = (lo, hi);
            let mut iterations = 0;
            while b - a > rel_tol * a.abs().max(b.abs()) * 0.5 && iterations < MAX_ITERATIONS {
                let mid = 0.5 * (a + b);
                let s = evaluate(base, var, mid);
                if var.predicate(&s) == p_lo {
                    a = mid;
                } else {
                    b = mid;
                }
                points.push((mid, s));
                iterations += 1;
            }
            Ok(SweepResult {
                variable: var,
                points,
                bracket: Some((a, b)),
                threshold: Some(0.5 * (a + b)),
                iterations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(r0: f64) -> ScenarioConfig {
        ScenarioConfig {
            policy: RewardPolicy::MinimalNoBuyBack { r0, floor: 0.1 },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn delta_grid() {
        let res = sweep(
            &minimal(4.2),
            SweepVar::Delta,
            &SweepSpec::Grid(vec![0.8, 0.9]),
            Execution::Parallel,
        )
        .unwrap();
        assert!(res.points[0].1.is_exploded());
        assert_eq!(res.points[1].1, TerminalStatus::Completed);
    }

    #[test]
    fn bracket_error() {
        let err = sweep(
            &minimal(4.2),
            SweepVar::R0,
            &SweepSpec::Bisect { lo: 1.0, hi: 2.0, rel_tol: 1e-6 },
            Execution::Sequential,
        )
        .unwrap_err();
        assert!(matches!(err, SweepError::Bracket { .. }));
    }

    #[test]
    fn service_bisection() {
        let res = sweep(
            &minimal(5.0),
            SweepVar::SConst,
            &SweepSpec::Bisect { lo: 1.0, hi: 30.0, rel_tol: 1e-6 },
            Execution::Parallel,
        )
        .unwrap();
        assert!((res.threshold.unwrap() - 100.0 / 9.0).abs() < 1e-4);
    }

    #[test]
    fn parse_names() {
        assert_eq!("S_const".parse::<SweepVar>().unwrap(), SweepVar::SConst);
        assert!("x".parse::<SweepVar>().is_err());
    }
}
