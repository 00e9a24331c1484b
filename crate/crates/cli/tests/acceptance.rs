//! Acceptance run: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tokenomics::engine::{
    deviation_suite, one_shot_deviation_gain, run_audits, DeviationRole, DEVIATION_ROUNDS,
};
use tokenomics::model::{EquilibriumConstants, ModelParams, SchemeKind, SchemeSpec};
use tokenomics::scenario::{
    figures_preset, sweep, trace_to_csv, Figure, SweepSpec, SweepVar,
};
use tokenomics::single_token::{minimal_reward_closed_form, no_buy_back_min_next_reward};
use tokenomics::two_token::reward_cap_b;
use tokenomics::{
    run_scenario, Execution, Mode, RewardPolicy, ScenarioConfig, ServiceSeries, TerminalStatus,
    Trace,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("runtime {elapsed:.2?} exceeds {limit:?}"))
    }
}

fn minimal(r0: f64) -> ScenarioConfig {
    ScenarioConfig {
        policy: RewardPolicy::MinimalNoBuyBack { r0, floor: 0.1 },
        ..ScenarioConfig::default()
    }
}

fn rewards(trace: &Trace) -> Vec<f64> {
    trace.records.iter().filter_map(|r| r.single()).map(|l| l.reward).collect()
}

fn fixed_point_economy() -> Outcome {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        horizon: 1000,
        policy: RewardPolicy::Constant(4.5),
        ..ScenarioConfig::default()
    };
    let tr = run_scenario(&cfg);
    let elapsed = start.elapsed();
    if tr.status != TerminalStatus::Completed || tr.len() != 1000 {
        return Err(format!("status {} after {} rounds", tr.status, tr.len()));
    }
    let mut worst = 0.0f64;
    for r in &tr.records {
        let l = r.single().ok_or("not a single-token trace")?;
        for (got, want) in [
            (l.price, 1.0),
            (l.user_end, 2.25),
            (l.validator_end, 10.125),
            (2.0 * l.bought, 4.5),
            (2.0 * l.sold, 4.5),
            (l.system_net_sold, 0.0),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    let audits = run_audits(&tr);
    let failed: Vec<_> = audits.iter().filter(|a| !a.passed).map(|a| a.name.clone()).collect();
    within(elapsed, Duration::from_secs(1))?;
    check(
        worst <= 1e-9 && failed.is_empty(),
        format!(
            "1000 rounds, max deviation from fixed point {worst:.1e}, {} audits, failed {failed:?}, {elapsed:.2?}",
            audits.len()
        ),
    )
}

fn random_scheme(rng: &mut ChaCha8Rng) -> SchemeKind {
    match rng.gen_range(0..3) {
        0 => SchemeKind::Proportional,
        1 => SchemeKind::PowerPenalty { ell: rng.gen_range(1.2..4.0) },
        _ => SchemeKind::Softcap { t: rng.gen_range(0.2..3.0) },
    }
}

struct RandomCase {
    consts: EquilibriumConstants,
    r0: f64,
    service: Vec<f64>,
}

fn random_cases(n: usize) -> Vec<RandomCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut cases = Vec::with_capacity(n);
    while cases.len() < n {
        let m = rng.gen_range(2..10);
        let k = rng.gen_range(2..10);
        let delta = rng.gen_range(0.5..0.98);
        let v = rng.gen_range(0.1..2.0);
        let g = rng.gen_range(0.5..2.0);
        let (rs, ss) = (random_scheme(&mut rng), random_scheme(&mut rng));
        let Ok(params) = ModelParams::new(m, k, delta, v, g, rs, ss) else {
            continue;
        };
        let gamma = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(delta + 0.01..1.2) };
        let price0 = rng.gen_range(0.2..5.0);
        let Ok(consts) = EquilibriumConstants::generic(&params, gamma, price0) else {
            continue;
        };
        let service = (0..=200).map(|_| rng.gen_range(1.0..30.0)).collect();
        cases.push(RandomCase { consts, r0: rng.gen_range(0.1..20.0), service });
    }
    cases
}

/// Largest error of the closed form against step-by-step iteration, relative
/// to the size of the terms that cancel in both.
fn closed_form_error(case: &RandomCase) -> Result<f64, String> {
    let c = &case.consts;
    let ratio = c.gamma / (1.0 + c.a);
    let mut r = case.r0;
    let mut terms = 0.0;
    let mut worst = 0.0f64;
    for t in 1..=200 {
        r = no_buy_back_min_next_reward(c, r, case.service[t], t - 1, f64::NEG_INFINITY);
        terms += case.service[t] * ratio.powi(t as i32);
        let closed = minimal_reward_closed_form(c, case.r0, &case.service, t).map_err(|e| e.to_string())?;
        let scale = (1.0 + c.a).powi(t as i32) * (case.r0 + c.b * terms);
        worst = worst.max((r - closed).abs() / scale);
    }
    Ok(worst)
}

fn closed_form_matches_recursion() -> Outcome {
    let start = Instant::now();
    let cases = random_cases(100);
    let errors = Execution::Parallel.map(&cases, closed_form_error);
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for e in errors {
        worst = worst.max(e?);
    }
    within(elapsed, Duration::from_secs(10))?;
    check(
        worst <= 1e-9,
        format!("100 configs x 200 steps, max relative error {worst:.1e}, {elapsed:.2?}"),
    )
}

fn explosion_threshold() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    // (delta, S, threshold by hand)
    for (delta, s, expected) in [
        (0.9, 10.0, 4.5),
        (0.9, 5.0, 2.25),
        (0.9, 20.0, 9.0),
        (0.8, 10.0, 4.0),
    ] {
        let mut base = ScenarioConfig { service: ServiceSeries::Constant(s), ..minimal(1.0) };
        base.params.delta = delta;
        let spec = SweepSpec::Bisect { lo: 0.5, hi: 50.0, rel_tol: 1e-6 };
        let res = sweep(&base, SweepVar::R0, &spec, Execution::Sequential).map_err(|e| e.to_string())?;
        let th = res.threshold.ok_or("no threshold")?;
        let rel = (th - expected).abs() / expected;
        ok &= rel <= 1e-5;

        let at = rewards(&run_scenario(&ScenarioConfig { horizon: 50, ..base.clone().with_r0(expected) }));
        let flat = at.iter().all(|r| (r - expected).abs() <= 1e-9 * expected);
        let above = run_scenario(&base.clone().with_r0(expected * 1.001));
        let below = run_scenario(&base.clone().with_r0(expected * 0.999));
        let floor = rewards(&below).last() == Some(&0.1);
        ok &= flat && above.status.is_exploded() && below.status == TerminalStatus::Completed && floor;
        notes.push(format!(
            "d={delta} S={s}: {th:.7} (rel {rel:.0e}), above {}, below {}",
            above.status, below.status
        ));
    }
    check(ok, notes.join("; "))
}

trait WithR0 {
    fn with_r0(self, r0: f64) -> Self;
}

impl WithR0 for ScenarioConfig {
    fn with_r0(mut self, r0: f64) -> Self {
        self.policy = RewardPolicy::MinimalNoBuyBack { r0, floor: 0.1 };
        self
    }
}

fn service_and_delta_regimes() -> Outcome {
    let status = |delta: f64, s: f64| {
        let mut c = ScenarioConfig { service: ServiceSeries::Constant(s), ..minimal(4.2) };
        c.params.delta = delta;
        run_scenario(&c).status
    };
    let d9 = status(0.9, 10.0);
    let d8 = status(0.8, 10.0);
    let s9 = status(0.9, 9.0);
    let s11 = status(0.9, 11.0);
    check(
        d9 == TerminalStatus::Completed
            && d8.is_exploded()
            && s9.is_exploded()
            && s11 == TerminalStatus::Completed,
        format!("delta 0.9: {d9}, delta 0.8: {d8}, S 9: {s9}, S 11: {s11}"),
    )
}

fn price_identities() -> Outcome {
    let step = ServiceSeries::Step { before: 10.0, after: 6.0, t_switch: 50 };
    let mut traces = vec![
        run_scenario(&ScenarioConfig { policy: RewardPolicy::Constant(4.5), ..ScenarioConfig::default() }),
        run_scenario(&minimal(4.0)),
        run_scenario(&ScenarioConfig { mode: Mode::TwoToken, ..ScenarioConfig::default() }),
        run_scenario(&ScenarioConfig { mode: Mode::TwoToken, service: step, ..ScenarioConfig::default() }),
    ];
    for f in Figure::ALL {
        traces.extend(figures_preset(f).iter().map(|p| run_scenario(&p.config)));
    }
    let mut checked = 0;
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut ok = true;
    for tr in traces.iter().filter(|t| t.status == TerminalStatus::Completed) {
        for a in run_audits(tr) {
            if matches!(a.name.as_str(), "no-buy-back" | "conservation") || a.checked == 0 {
                continue;
            }
            checked += 1;
            ok &= a.passed;
            match worst.iter_mut().find(|(n, _)| *n == a.name) {
                Some(w) => w.1 = w.1.max(a.max_residual),
                None => worst.push((a.name.clone(), a.max_residual)),
            }
        }
    }
    let detail = worst
        .iter()
        .map(|(n, r)| format!("{n} {r:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok && checked > 0, format!("{checked} audits on completed traces; {detail}"))
}

fn best_response_suite() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    for mode in [Mode::SingleToken, Mode::TwoToken] {
        let cfg = ScenarioConfig { mode, policy: RewardPolicy::Constant(4.5), ..ScenarioConfig::default() };
        let tr = run_scenario(&cfg);
        let suite = deviation_suite(&tr, Execution::Parallel);
        let mut zero = true;
        for role in [DeviationRole::User, DeviationRole::Validator] {
            for &t in DEVIATION_ROUNDS.iter() {
                zero &= one_shot_deviation_gain(&tr, role, t, 0.0, tr.len()) == Ok(0.0);
            }
        }
        ok &= suite.passed && zero;
        notes.push(format!(
            "{mode:?}: {} probes, max gain {:.1e} (scale {:.3}), zero-eps gain exact: {zero}",
            suite.probes.len(),
            suite.max_gain,
            suite.scale
        ));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    check(ok, format!("{}; {elapsed:.2?}", notes.join("; ")))
}

fn two_token_stationarity() -> Outcome {
    let cfg = ScenarioConfig { mode: Mode::TwoToken, ..ScenarioConfig::default() };
    let tr = run_scenario(&cfg);
    if tr.status != TerminalStatus::Completed || tr.len() != 500 {
        return Err(format!("status {} after {} rounds", tr.status, tr.len()));
    }
    let cap = reward_cap_b(&cfg.params, cfg.a_v0, cfg.price_b0).map_err(|e| e.to_string())?;
    // each validator's share R_B * r(1/n) * price_B = delta * S * kappa_S / n, kappa_S = 1/2
    let income = 0.9 * 10.0 * 0.5 / 2.0;
    let (mut reward, mut clear, mut price, mut pay) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut a_volume = 0.0f64;
    let mut at_cap = true;
    for r in &tr.records {
        let (a, b) = r.two().ok_or("not a two-token trace")?;
        reward = reward.max((b.reward - 4.5).abs());
        clear = clear.max(b.system_net_sold.abs());
        a_volume = a_volume.max(a.bought.abs()).max(a.sold.abs());
        price = price.max((a.price - 1.0125).abs());
        pay = pay.max((b.validator_reward * b.price - income).abs());
        at_cap &= b.reward == cap;
    }
    check(
        reward <= 1e-12 && clear <= 1e-9 && a_volume == 0.0 && price <= 1e-9 && pay <= 1e-12 && at_cap,
        format!(
            "R_B off by {reward:.1e}, B clearing {clear:.1e}, A volume {a_volume}, price_A off by {price:.1e}, \
             cap equality {at_cap}, validator income off by {pay:.1e}"
        ),
    )
}

fn shock_absorption() -> Outcome {
    let step = ServiceSeries::Step { before: 10.0, after: 6.0, t_switch: 50 };
    let two = run_scenario(&ScenarioConfig {
        mode: Mode::TwoToken,
        service: step.clone(),
        ..ScenarioConfig::default()
    });
    let mut unit_price = true;
    let mut net = 0.0f64;
    for r in &two.records {
        let (a, b) = r.two().ok_or("not a two-token trace")?;
        unit_price &= b.price == 1.0;
        net = net.min(b.system_net_sold).min(a.system_net_sold);
    }
    let single = run_scenario(&ScenarioConfig { service: step, ..minimal(4.5) });
    let peak = rewards(&single).into_iter().fold(0.0f64, f64::max);
    check(
        two.status == TerminalStatus::Completed && unit_price && net >= -1e-9 && peak > 45.0,
        format!(
            "two-token {} with price_B = 1: {unit_price}, min net sold {net:.1e}; single-token {} peak R {peak:.3e}",
            two.status, single.status
        ),
    )
}

fn scheme_validation() -> Outcome {
    let steep = ModelParams::new(
        2,
        4,
        0.9,
        1.0,
        1.0,
        SchemeKind::Softcap { t: 10.0 },
        SchemeKind::Proportional,
    );
    let mild = ModelParams::new(
        2,
        4,
        0.9,
        1.0,
        1.0,
        SchemeKind::Softcap { t: 2.0 },
        SchemeKind::Proportional,
    );
    let spec = SchemeSpec::reward(SchemeKind::Softcap { t: 2.0 });
    let d = spec.derivative(0.25, 4).map_err(|e| e.to_string())?;
    let r = |x: f64| 2.0 * x / ((2.0 * (x - 0.25)).exp() + 1.0);
    let h = 1e-5;
    let fd = (r(0.25 + h) - r(0.25 - h)) / (2.0 * h);
    check(
        steep.is_err() && mild.is_ok() && (d - 0.75).abs() <= 1e-9 && (fd - 0.75).abs() <= 1e-9,
        format!(
            "T=10 rejected: {}, T=2 accepted: {}, r'(1/4) = {d:.12} (finite difference {fd:.12})",
            steep.is_err(),
            mild.is_ok()
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tokenomics"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn write_config(dir: &Path, name: &str, cfg: &ScenarioConfig) -> Result<String, String> {
    let path = dir.join(name);
    fs::write(&path, cfg.serialize()).map_err(|e| e.to_string())?;
    Ok(path.to_string_lossy().into_owned())
}

fn determinism_and_format() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut identical = 0;
    let mut presets = 0;
    for f in Figure::ALL {
        for p in figures_preset(f) {
            presets += 1;
            let mut cfg = p.config.clone();
            cfg.output = None;
            let path = write_config(dir.path(), &format!("{}.cfg", p.name), &cfg)?;
            let (_, first) = run_cli(&["simulate", &path])?;
            let (_, second) = run_cli(&["simulate", &path])?;
            let expected = trace_to_csv(&run_scenario(&cfg));
            if first == second && first == expected.as_bytes() {
                identical += 1;
            }
        }
    }

    let baseline = write_config(dir.path(), "baseline.cfg", &ScenarioConfig::default())?;
    let exploding = write_config(dir.path(), "explode.cfg", &minimal(5.0))?;
    let infeasible = write_config(
        dir.path(),
        "infeasible.cfg",
        &ScenarioConfig { mode: Mode::TwoToken, price_a0: Some(0.0), ..ScenarioConfig::default() },
    )?;
    let invalid = dir.path().join("invalid.cfg");
    fs::write(&invalid, "model.delta = 1\n").map_err(|e| e.to_string())?;
    let invalid = invalid.to_string_lossy().into_owned();
    let missing = dir.path().join("missing.cfg").to_string_lossy().into_owned();
    let codes = [
        ("completed", &baseline, 0),
        ("exploded", &exploding, 3),
        ("infeasible", &infeasible, 4),
        ("invalid", &invalid, 2),
        ("unreadable", &missing, 1),
    ];
    let mut code_ok = true;
    let mut seen = Vec::new();
    for (label, path, want) in codes {
        let (got, _) = run_cli(&["verify", path])?;
        code_ok &= got == want;
        seen.push(format!("{label} {got}"));
    }
    check(
        identical == presets && code_ok,
        format!(
            "{identical}/{presets} presets byte-identical; verify exit codes: {}",
            seen.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("fixed-point economy", fixed_point_economy),
        ("closed form matches recursion", closed_form_matches_recursion),
        ("explosion threshold", explosion_threshold),
        ("service-level and discount regimes", service_and_delta_regimes),
        ("price identities", price_identities),
        ("best-response suite", best_response_suite),
        ("two-token stationarity and tightness", two_token_stationarity),
        ("two-token shock absorption", shock_absorption),
        ("scheme validation", scheme_validation),
        ("determinism and exit codes", determinism_and_format),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
