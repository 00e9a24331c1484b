use proptest::prelude::*;

use tokenomics::engine::run_scenario;
use tokenomics::model::{stable_ratios, EquilibriumConstants, ModelParams, SchemeKind, SchemeSpec};
use tokenomics::scenario::{parse_scenario, Mode, ScenarioConfig, ServiceSeries};
use tokenomics::single_token::{
    critical_initial_reward, minimal_reward_closed_form, no_buy_back_min_next_reward,
    round_strategies_stable, PriceConvention, RewardPolicy,
};
use tokenomics::TerminalStatus;

fn scheme() -> impl Strategy<Value = SchemeKind> {
    prop_oneof![
        Just(SchemeKind::Proportional),
        (1.2f64..4.0).prop_map(|ell| SchemeKind::PowerPenalty { ell }),
        (0.2f64..3.0).prop_map(|t| SchemeKind::Softcap { t }),
    ]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (2usize..8, 2usize..8, 0.5f64..0.98, 0.5f64..2.0, scheme(), scheme()).prop_filter_map(
        "scheme fails validation",
        |(m, n, delta, g, r, s)| ModelParams::new(m, n, delta, 1.0, g, r, s).ok(),
    )
}

/// The recursion iterated one step at a time.
fn iterate(c: &EquilibriumConstants, r0: f64, s: &[f64], t: usize) -> f64 {
    let mut r = r0;
    for tau in 0..t {
        r = no_buy_back_min_next_reward(c, r, s[tau + 1], tau, f64::NEG_INFINITY);
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn derivative_matches_central_difference(kind in scheme(), k in 2usize..10, x in 0.05f64..0.95) {
        let spec = SchemeSpec::reward(kind);
        let h = 1e-6;
        let fd = (spec.value(x + h, k).unwrap() - spec.value(x - h, k).unwrap()) / (2.0 * h);
        let d = spec.derivative(x, k).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "fd {} vs {}", fd, d);
    }

    #[test]
    fn stable_ratios_invariants(p in params(), price0 in 0.1f64..10.0) {
        let c = stable_ratios(&p, price0).unwrap();
        prop_assert!((p.delta * c.ser2fees * c.kappa_s - 1.0).abs() < 1e-12);
        prop_assert!((p.delta * c.growth - 1.0).abs() < 1e-12);
        prop_assert!(c.a > 0.0 && c.b > 0.0);
        prop_assert_eq!(c.gamma, 1.0);
    }

    #[test]
    fn closed_form_equals_recursion(
        p in params(),
        gamma_excess in 0.0f64..0.05,
        r0 in 0.1f64..20.0,
        s in prop::collection::vec(1.0f64..30.0, 201),
        t in 1usize..=200,
    ) {
        let gamma = if gamma_excess < 0.01 { 1.0 } else { p.delta + gamma_excess };
        let c = EquilibriumConstants::generic(&p, gamma, 1.0).unwrap();
        let rec = iterate(&c, r0, &s, t);
        let closed = minimal_reward_closed_form(&c, r0, &s, t).unwrap();
        // magnitude of the terms that cancel in both computations
        let ratio = c.gamma / (1.0 + c.a);
        let terms: f64 = (1..=t).map(|k| s[k] * ratio.powi(k as i32)).sum();
        let scale = (1.0 + c.a).powi(t as i32) * (r0 + c.b * terms);
        prop_assert!((rec - closed).abs() <= 1e-9 * scale, "{} vs {} (scale {})", rec, closed, scale);
    }

    #[test]
    fn tight_reward_clears_market(p in params(), r in 0.5f64..20.0, s in 1.0f64..30.0, s_next in 1.0f64..30.0) {
        let c = stable_ratios(&p, 1.0).unwrap();
        let r_next = no_buy_back_min_next_reward(&c, r, s_next, 0, f64::NEG_INFINITY);
        let ok = round_strategies_stable(&p, &c, s, s_next, r, r_next);
        match ok {
            Ok(prof) => prop_assert!(prof.system_sell.abs() <= 1e-9 * r.max(s_next).max(1.0)),
            Err(e) => prop_assert!(false, "tight reward rejected: {}", e),
        }
        let short = round_strategies_stable(&p, &c, s, s_next, r, r_next - 1e-3);
        prop_assert!(short.is_err());
    }

    #[test]
    fn threshold_increases_with_service(p in params(), s in 1.0f64..30.0, ds in 0.1f64..10.0) {
        let c = stable_ratios(&p, 1.0).unwrap();
        prop_assert!(critical_initial_reward(&c, s).unwrap() < critical_initial_reward(&c, s + ds).unwrap());
    }
}

fn minimal(r0: f64) -> ScenarioConfig {
    ScenarioConfig {
        policy: RewardPolicy::MinimalNoBuyBack { r0, floor: 0.1 },
        ..ScenarioConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn explosion_is_monotone(r0 in 4.6f64..20.0, dr in 0.0f64..10.0) {
        let round = |r| match run_scenario(&minimal(r)).status {
            TerminalStatus::Exploded { round } => round,
            s => panic!("R0 = {r} did not explode: {s}"),
        };
        prop_assert!(round(r0 + dr) <= round(r0));
    }

    #[test]
    fn two_token_market_is_tight(
        s in prop::collection::vec(1.0f64..30.0, 1..60),
        a_v0 in 1.0f64..50.0,
        price_b0 in 0.2f64..5.0,
    ) {
        let cfg = ScenarioConfig {
            mode: Mode::TwoToken,
            service: ServiceSeries::Explicit(s),
            a_v0,
            price_b0,
            horizon: 120,
            ..ScenarioConfig::default()
        };
        let tr = run_scenario(&cfg);
        prop_assert_eq!(&tr.status, &TerminalStatus::Completed);
        let p0 = tr.records[0].two().unwrap().0.price;
        for (t, r) in tr.records.iter().enumerate() {
            let (a, b) = r.two().unwrap();
            prop_assert!(b.system_net_sold.abs() <= 1e-9);
            prop_assert_eq!(a.sold, 0.0);
            prop_assert_eq!(a.validator_start, a_v0);
            prop_assert_eq!(b.price, price_b0);
            prop_assert!(a.price >= 0.0);
            if t > 0 {
                prop_assert!(a.price < p0 / 0.9f64.powi(t as i32));
            }
        }
    }

    #[test]
    fn determinism(r0 in 3.0f64..6.0, s in 5.0f64..15.0) {
        let cfg = ScenarioConfig { service: ServiceSeries::Constant(s), ..minimal(r0) };
        prop_assert_eq!(run_scenario(&cfg), run_scenario(&cfg));
    }
}

fn config_strategy() -> impl Strategy<Value = ScenarioConfig> {
    let service = prop_oneof![
        (0.5f64..50.0).prop_map(ServiceSeries::Constant),
        (0.5f64..50.0, 0.5f64..50.0, 0usize..100).prop_map(|(before, after, t_switch)| {
            ServiceSeries::Step { before, after, t_switch }
        }),
        prop::collection::vec(0.5f64..50.0, 1..8).prop_map(ServiceSeries::Explicit),
    ];
    let policy = prop_oneof![
        (0.5f64..10.0).prop_map(RewardPolicy::Constant),
        (0.5f64..10.0, 0.0f64..0.4).prop_map(|(r0, floor)| RewardPolicy::MinimalNoBuyBack { r0, floor }),
        prop::collection::vec(0.5f64..10.0, 1..6).prop_map(RewardPolicy::Explicit),
    ];
    (
        params(),
        service,
        policy,
        prop::option::of(0.0f64..5.0),
        1usize..2000,
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(params, service, policy, price_a0, horizon, two, figure)| ScenarioConfig {
            mode: if two { Mode::TwoToken } else { Mode::SingleToken },
            params,
            service,
            policy,
            price_a0,
            horizon,
            price_convention: if figure { PriceConvention::Figure } else { PriceConvention::Proof },
            ..ScenarioConfig::default()
        })
}

proptest! {
    #[test]
    fn config_round_trip(cfg in config_strategy()) {
        let text = cfg.serialize();
        let parsed = parse_scenario(&text).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.serialize(), text);
    }
}
