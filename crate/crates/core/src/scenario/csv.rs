//! CSV trace output.

use std::fs;
use std::io;
use std::path::Path;

use crate::engine::{Market, Trace};

pub const SINGLE_COLUMNS: &[&str] = &[
    "t",
    "S",
    "R",
    "price",
    "tk_U",
    "tk_V",
    "u_U",
    "b_U",
    "s_V",
    "system_net_sold",
    "staked_total",
    "staked_market_cap",
    "reward_market_cap",
    "user_utility",
    "validator_utility",
];

pub const TWO_COLUMNS: &[&str] = &[
    "t",
    "S",
    "R_A",
    "R_B",
    "price_A",
    "price_B",
    "a_V",
    "b_U",
    "u_B",
    "b_B",
    "s_B",
    "s_A",
    "system_net_sold_A",
    "system_net_sold_B",
    "staked_total",
    "staked_market_cap",
    "reward_market_cap",
    "user_utility",
    "validator_utility",
];

/// Formats with 12 significant digits, dropping trailing zeros; exponent
/// notation outside `[1e-5, 1e12)`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// The whole CSV document for a trace, ending with a `# status=` line.
pub fn trace_to_csv(trace: &Trace) -> String {
    let two = matches!(trace.records.first().map(|r| &r.market), Some(Market::Two { .. }));
    let cols = if two { TWO_COLUMNS } else { SINGLE_COLUMNS };
    let mut out = cols.join(",");
    out.push('\n');
    let n = trace.params.n as f64;
    for r in &trace.records {
        let row: Vec<f64> = match &r.market {
            Market::Single(l) => vec![
                r.t as f64,
                r.service,
                l.reward,
                l.price,
                l.user_start,
                l.validator_start,
                l.spent,
                l.bought,
                l.sold,
                l.system_net_sold,
                n * l.validator_start,
                n * l.validator_start * l.price,
                l.reward * l.price,
                r.user_utility,
                r.validator_utility,
            ],
            Market::Two { a, b } => vec![
                r.t as f64,
                r.service,
                a.reward,
                b.reward,
                a.price,
                b.price,
                a.validator_start,
                b.user_start,
                b.spent,
                b.bought,
                b.sold,
                a.sold,
                a.system_net_sold,
                b.system_net_sold,
                n * a.validator_start,
                n * a.validator_start * a.price,
                b.reward * b.price,
                r.user_utility,
                r.validator_utility,
            ],
        };
        let cells: Vec<String> = row.into_iter().map(format_number).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.push_str(&format!("# status={}\n", trace.status));
    out
}

pub fn write_trace_csv(trace: &Trace, destination: &Path) -> io::Result<()> {
    fs::write(destination, trace_to_csv(trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_scenario;
    use crate::scenario::{Mode, ScenarioConfig};
    use crate::single_token::RewardPolicy;

    #[test]
    fn number_format() {
        assert_eq!(format_number(4.5), "4.5");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.25), "-2.25");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(10.0 / 9.0), "1.11111111111");
        assert_eq!(format_number(123456.0), "123456");
        assert_eq!(format_number(1e-7), "1e-07");
        assert_eq!(format_number(2.5e13), "2.5e+13");
        assert_eq!(format_number(999999999999.4), "999999999999");
        assert_eq!(format_number(0.0001234), "0.0001234");
        assert_eq!(format_number(f64::INFINITY), "inf");
    }

    #[test]
    fn baseline_three_rounds() {
        let tr = run_scenario(&ScenarioConfig {
            horizon: 3,
            ..ScenarioConfig::default()
        });
        let csv = trace_to_csv(&tr);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], SINGLE_COLUMNS.join(","));
        for row in &lines[1..4] {
            assert_eq!(row.split(',').nth(2), Some("4.5"));
        }
        assert_eq!(lines[4], "# status=completed");
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn exploded_status_line() {
        let tr = run_scenario(&ScenarioConfig {
            policy: RewardPolicy::MinimalNoBuyBack { r0: 5.0, floor: 0.1 },
            ..ScenarioConfig::default()
        });
        let csv = trace_to_csv(&tr);
        let last = csv.lines().last().unwrap();
        assert_eq!(last, format!("# status=exploded@t={}", tr.len()));
    }

    #[test]
    fn two_token_price_column() {
        let tr = run_scenario(&ScenarioConfig {
            mode: Mode::TwoToken,
            horizon: 20,
            ..ScenarioConfig::default()
        });
        let csv = trace_to_csv(&tr);
        let idx = TWO_COLUMNS.iter().position(|c| *c == "price_A").unwrap();
        for row in csv.lines().skip(1).filter(|l| !l.starts_with('#')) {
            assert_eq!(row.split(',').nth(idx), Some("1.0125"));
        }
    }
}
