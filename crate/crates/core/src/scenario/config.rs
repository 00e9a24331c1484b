//! Flat `key = value` scenario files.
//!
//! ```text
//! # baseline economy
//! mode = single_token
//! model.m = 2
//! model.n = 2
//! model.delta = 0.9
//! model.v = 1
//! model.g = 1
//! model.reward_scheme = proportional
//! model.service_scheme = proportional
//! service.kind = constant
//! service.S = 10
//! policy.kind = constant
//! policy.R0 = 4.5
//! initial.price0 = 1
//! horizon = 500
//! ```
//!
//! Every key is optional; missing keys take the baseline values above.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{ModelParams, SchemeKind, SchemeSpec};
use crate::single_token::{PriceConvention, RewardPolicy};

pub const DEFAULT_HORIZON: usize = 500;

/// Which model a scenario runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    SingleToken,
    TwoToken,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::SingleToken => "single_token",
            Mode::TwoToken => "two_token",
        }
    }
}

/// Deterministic service-level series indexed by round.
#[derive(Clone, Debug, PartialEq)]
pub enum ServiceSeries {
    Constant(f64),
    /// `before` until round `t_switch - 1`, `after` from `t_switch` on.
    Step {
        before: f64,
        after: f64,
        t_switch: usize,
    },
    /// `min(start + slope * t, cap)`
    Ramp { start: f64, slope: f64, cap: f64 },
    /// Rounds past the end repeat the last value.
    Explicit(Vec<f64>),
}

impl ServiceSeries {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            ServiceSeries::Constant(s) => *s,
            ServiceSeries::Step {
                before,
                after,
                t_switch,
            } => {
                if t < *t_switch {
                    *before
                } else {
                    *after
                }
            }
            ServiceSeries::Ramp { start, slope, cap } => (start + slope * t as f64).min(*cap),
            ServiceSeries::Explicit(v) => v[t.min(v.len() - 1)],
        }
    }

    /// First round from which the series is constant.
    pub fn settles_at(&self) -> usize {
        match self {
            ServiceSeries::Constant(_) => 0,
            ServiceSeries::Step { t_switch, .. } => *t_switch,
            ServiceSeries::Ramp { start, slope, cap } => {
                if *slope > 0.0 && cap > start {
                    ((cap - start) / slope).ceil() as usize
                } else {
                    0
                }
            }
            ServiceSeries::Explicit(v) => v.len().saturating_sub(1),
        }
    }

    /// Values of rounds `0..len`.
    pub fn values(&self, len: usize) -> Vec<f64> {
        (0..len).map(|t| self.at(t)).collect()
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceSeries::Constant(_) => "constant",
            ServiceSeries::Step { .. } => "step",
            ServiceSeries::Ramp { .. } => "ramp",
            ServiceSeries::Explicit(_) => "explicit",
        }
    }

    fn issues(&self, s_max: f64) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut check = |field: &'static str, s: f64| {
            if !(s > 0.0 && s <= s_max) {
                out.push((field, format!("service level must be in (0, {s_max}], got {s}")));
            }
        };
        match self {
            ServiceSeries::Constant(s) => check("service.S", *s),
            ServiceSeries::Step { before, after, .. } => {
                check("service.S", *before);
                check("service.S_after", *after);
            }
            ServiceSeries::Ramp { start, slope, cap } => {
                check("service.S", *start);
                check("service.S_max", *cap);
                if !(slope.is_finite() && *slope >= 0.0) {
                    out.push(("service.slope", format!("slope must be >= 0, got {slope}")));
                }
            }
            ServiceSeries::Explicit(v) => {
                if v.is_empty() {
                    out.push(("service.values", "needs at least one value".to_string()));
                }
                if let Some(bad) = v.iter().find(|s| !(**s > 0.0 && **s <= s_max)) {
                    out.push((
                        "service.values",
                        format!("service level must be in (0, {s_max}], got {bad}"),
                    ));
                }
            }
        }
        out
    }
}

/// A fully specified scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub params: ModelParams,
    /// Per-round price factor; 1 for stable prices.
    pub gamma: f64,
    pub service: ServiceSeries,
    /// Upper bound on every service level.
    pub s_max: f64,
    /// Single-token reward rule; ignored in two-token mode.
    pub policy: RewardPolicy,
    pub price0: f64,
    /// Initial price of the staking token; defaults to its fundamental value.
    pub price_a0: Option<f64>,
    pub a_v0: f64,
    pub price_b0: f64,
    pub horizon: usize,
    pub price_convention: PriceConvention,
    pub output: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SingleToken,
            params: ModelParams::baseline(),
            gamma: 1.0,
            service: ServiceSeries::Constant(10.0),
            s_max: f64::INFINITY,
            policy: RewardPolicy::Constant(4.5),
            price0: 1.0,
            price_a0: None,
            a_v0: 10.0,
            price_b0: 1.0,
            horizon: DEFAULT_HORIZON,
            price_convention: PriceConvention::Proof,
            output: None,
        }
    }
}

/// One problem found while reading or validating a config.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if !self.field.is_empty() {
            write!(f, "{}: ", self.field)?;
        }
        write!(f, "{}", self.message)
    }
}

/// Every problem found in a config, in file order.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

const KEYS: &[&str] = &[
    "mode",
    "model.m",
    "model.n",
    "model.delta",
    "model.v",
    "model.g",
    "model.gamma",
    "model.reward_scheme",
    "model.reward_scheme.ell",
    "model.reward_scheme.T",
    "model.service_scheme",
    "model.service_scheme.ell",
    "model.service_scheme.T",
    "service.kind",
    "service.S",
    "service.S_after",
    "service.t_switch",
    "service.slope",
    "service.S_max",
    "service.values",
    "policy.kind",
    "policy.R0",
    "policy.floor",
    "policy.values",
    "initial.price0",
    "initial.price_A0",
    "initial.a_V0",
    "initial.price_B0",
    "horizon",
    "price_convention",
    "output",
];

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, line: Option<usize>, field: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            line,
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(l, _)| *l)
    }

    fn raw(&self, key: &str) -> Option<(usize, String)> {
        self.entries.get(key).cloned()
    }

    fn take<T, F>(&mut self, key: &str, default: T, what: &str, parse: F) -> T
    where
        F: Fn(&str) -> Option<T>,
    {
        match self.raw(key) {
            None => default,
            Some((line, v)) => match parse(&v) {
                Some(x) => x,
                None => {
                    self.issue(Some(line), key, format!("expected {what}, got `{v}`"));
                    default
                }
            },
        }
    }

    fn number(&mut self, key: &str, default: f64) -> f64 {
        self.take(key, default, "a number", |s| s.parse::<f64>().ok())
    }

    fn integer(&mut self, key: &str, default: usize) -> usize {
        self.take(key, default, "a non-negative integer", |s| s.parse::<usize>().ok())
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let (line, v) = self.raw(key)?;
        let parsed: Result<Vec<f64>, _> = v
            .split(',')
            .map(|x| x.trim())
            .filter(|x| !x.is_empty())
            .map(|x| x.parse::<f64>())
            .collect();
        match parsed {
            Ok(xs) => Some(xs),
            Err(_) => {
                self.issue(Some(line), key, format!("expected a comma-separated number list, got `{v}`"));
                Some(Vec::new())
            }
        }
    }

    fn require(&mut self, key: &str, context: &str) -> bool {
        if self.entries.contains_key(key) {
            true
        } else {
            self.issue(None, key, format!("required for {context}"));
            false
        }
    }

    fn forbid(&mut self, keys: &[&str], context: &str) {
        for key in keys {
            if let Some(line) = self.line(key) {
                self.issue(Some(line), key, format!("not used by {context}"));
            }
        }
    }

    fn scheme(&mut self, prefix: &str) -> SchemeKind {
        let ell_key = format!("{prefix}.ell");
        let t_key = format!("{prefix}.T");
        let name = self.raw(prefix);
        match name.as_ref().map(|(l, v)| (*l, v.as_str())) {
            None | Some((_, "proportional")) => {
                self.forbid(&[&ell_key, &t_key], "the proportional scheme");
                SchemeKind::Proportional
            }
            Some((_, "power_penalty")) => {
                self.forbid(&[&t_key], "power_penalty");
                self.require(&ell_key, "power_penalty");
                SchemeKind::PowerPenalty {
                    ell: self.number(&ell_key, 2.0),
                }
            }
            Some((_, "softcap")) => {
                self.forbid(&[&ell_key], "softcap");
                self.require(&t_key, "softcap");
                SchemeKind::Softcap {
                    t: self.number(&t_key, 1.0),
                }
            }
            Some((line, other)) => {
                let other = other.to_string();
                self.issue(
                    Some(line),
                    prefix,
                    format!("unknown scheme `{other}` (proportional, power_penalty, softcap)"),
                );
                SchemeKind::Proportional
            }
        }
    }
}

/// Parses and validates a scenario file, reporting every problem found.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut r = Reader {
        entries: BTreeMap::new(),
        issues: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            r.issue(Some(line), "", format!("expected `key = value`, got `{content}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            r.issue(Some(line), key, "unknown key");
            continue;
        }
        if let Some((first, _)) = r.entries.get(key) {
            let first = *first;
            r.issue(Some(line), key, format!("duplicate key (first set on line {first})"));
            continue;
        }
        r.entries.insert(key.to_string(), (line, value.to_string()));
    }

    let d = ScenarioConfig::default();
    let mode = r.take("mode", d.mode, "single_token or two_token", |s| match s {
        "single_token" => Some(Mode::SingleToken),
        "two_token" => Some(Mode::TwoToken),
        _ => None,
    });
    let reward = r.scheme("model.reward_scheme");
    let service_scheme = r.scheme("model.service_scheme");
    let params = ModelParams {
        m: r.integer("model.m", d.params.m),
        n: r.integer("model.n", d.params.n),
        delta: r.number("model.delta", d.params.delta),
        v: r.number("model.v", d.params.v),
        g: r.number("model.g", d.params.g),
        reward_scheme: SchemeSpec::reward(reward),
        service_scheme: SchemeSpec::service(service_scheme),
    };
    let gamma = r.number("model.gamma", d.gamma);

    let s_max = r.number("service.S_max", d.s_max);
    let kind = r
        .raw("service.kind")
        .map(|(_, v)| v)
        .unwrap_or_else(|| "constant".to_string());
    let service = match kind.as_str() {
        "constant" => {
            r.forbid(&["service.S_after", "service.t_switch", "service.slope", "service.values"], "constant service");
            ServiceSeries::Constant(r.number("service.S", 10.0))
        }
        "step" => {
            r.forbid(&["service.slope", "service.values"], "step service");
            r.require("service.S", "step service");
            r.require("service.S_after", "step service");
            r.require("service.t_switch", "step service");
            ServiceSeries::Step {
                before: r.number("service.S", 10.0),
                after: r.number("service.S_after", 10.0),
                t_switch: r.integer("service.t_switch", 0),
            }
        }
        "ramp" => {
            r.forbid(&["service.S_after", "service.t_switch", "service.values"], "ramp service");
            r.require("service.S", "ramp service");
            r.require("service.slope", "ramp service");
            r.require("service.S_max", "ramp service");
            ServiceSeries::Ramp {
                start: r.number("service.S", 10.0),
                slope: r.number("service.slope", 0.0),
                cap: s_max,
            }
        }
        "explicit" => {
            r.forbid(&["service.S", "service.S_after", "service.t_switch", "service.slope"], "explicit service");
            r.require("service.values", "explicit service");
            ServiceSeries::Explicit(r.list("service.values").unwrap_or_default())
        }
        other => {
            let line = r.line("service.kind");
            r.issue(line, "service.kind", format!("unknown kind `{other}` (constant, step, ramp, explicit)"));
            ServiceSeries::Constant(10.0)
        }
    };

    let pkind = r
        .raw("policy.kind")
        .map(|(_, v)| v)
        .unwrap_or_else(|| "constant".to_string());
    let policy = match pkind.as_str() {
        "constant" => {
            r.forbid(&["policy.floor", "policy.values"], "the constant policy");
            RewardPolicy::Constant(r.number("policy.R0", 4.5))
        }
        "minimal" => {
            r.forbid(&["policy.values"], "the minimal policy");
            r.require("policy.R0", "the minimal policy");
            RewardPolicy::MinimalNoBuyBack {
                r0: r.number("policy.R0", 4.5),
                floor: r.number("policy.floor", 0.1),
            }
        }
        "explicit" => {
            r.forbid(&["policy.R0", "policy.floor"], "the explicit policy");
            r.require("policy.values", "the explicit policy");
            RewardPolicy::Explicit(r.list("policy.values").unwrap_or_default())
        }
        other => {
            let line = r.line("policy.kind");
            r.issue(line, "policy.kind", format!("unknown kind `{other}` (constant, minimal, explicit)"));
            RewardPolicy::Constant(4.5)
        }
    };

    let price_a0 = if r.entries.contains_key("initial.price_A0") {
        Some(r.number("initial.price_A0", 0.0))
    } else {
        None
    };
    let cfg = ScenarioConfig {
        mode,
        params,
        gamma,
        service,
        s_max,
        policy,
        price0: r.number("initial.price0", d.price0),
        price_a0,
        a_v0: r.number("initial.a_V0", d.a_v0),
        price_b0: r.number("initial.price_B0", d.price_b0),
        horizon: r.integer("horizon", d.horizon),
        price_convention: r.take("price_convention", d.price_convention, "proof or figure", |s| {
            match s {
                "proof" => Some(PriceConvention::Proof),
                "figure" => Some(PriceConvention::Figure),
                _ => None,
            }
        }),
        output: r.raw("output").map(|(_, v)| v),
    };

    for (field, message) in cfg.issues() {
        let line = r.line(field);
        r.issue(line, field, message);
    }
    if r.issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { issues: r.issues })
    }
}

impl ScenarioConfig {
    /// Every semantic problem, keyed by config field.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = self.params.issues();
        if !(self.gamma.is_finite() && self.gamma >= self.params.delta) {
            out.push((
                "model.gamma",
                format!("gamma must be >= delta ({}), got {}", self.params.delta, self.gamma),
            ));
        }
        if !(self.s_max > 0.0) {
            out.push(("service.S_max", format!("S_max must be > 0, got {}", self.s_max)));
        }
        out.extend(self.service.issues(self.s_max));
        match self.mode {
            Mode::SingleToken => {
                for msg in self.policy.issues() {
                    out.push(("policy", msg));
                }
                if self.policy.initial() <= 0.0 {
                    out.push((
                        "policy.R0",
                        "initial reward must be > 0 so validators hold a positive stake".into(),
                    ));
                }
            }
            Mode::TwoToken => {
                if self.gamma != 1.0 {
                    out.push((
                        "model.gamma",
                        format!("the two-token mechanism keeps price_B stable; gamma must be 1, got {}", self.gamma),
                    ));
                }
                if !(self.a_v0 > 0.0 && self.a_v0.is_finite()) {
                    out.push(("initial.a_V0", format!("a_V0 must be > 0, got {}", self.a_v0)));
                }
                if !(self.price_b0 > 0.0 && self.price_b0.is_finite()) {
                    out.push(("initial.price_B0", format!("price_B0 must be > 0, got {}", self.price_b0)));
                }
                if let Some(p) = self.price_a0 {
                    if !(p >= 0.0 && p.is_finite()) {
                        out.push(("initial.price_A0", format!("price_A0 must be >= 0, got {p}")));
                    }
                }
            }
        }
        if !(self.price0 > 0.0 && self.price0.is_finite()) {
            out.push(("initial.price0", format!("price0 must be > 0, got {}", self.price0)));
        }
        if self.horizon == 0 {
            out.push(("horizon", "horizon must be at least 1".into()));
        }
        out
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn serialize(&self) -> String {
        let mut lines = Vec::new();
        let mut kv = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        let p = &self.params;
        kv("mode", self.mode.name().into());
        kv("model.m", p.m.to_string());
        kv("model.n", p.n.to_string());
        kv("model.delta", p.delta.to_string());
        kv("model.v", p.v.to_string());
        kv("model.g", p.g.to_string());
        kv("model.gamma", self.gamma.to_string());
        for (prefix, kind) in [
            ("model.reward_scheme", p.reward_scheme.kind),
            ("model.service_scheme", p.service_scheme.kind),
        ] {
            kv(prefix, kind.name().into());
            match kind {
                SchemeKind::Proportional => {}
                SchemeKind::PowerPenalty { ell } => kv(&format!("{prefix}.ell"), ell.to_string()),
                SchemeKind::Softcap { t } => kv(&format!("{prefix}.T"), t.to_string()),
            }
        }
        kv("service.kind", self.service.kind().into());
        match &self.service {
            ServiceSeries::Constant(s) => kv("service.S", s.to_string()),
            ServiceSeries::Step {
                before,
                after,
                t_switch,
            } => {
                kv("service.S", before.to_string());
                kv("service.S_after", after.to_string());
                kv("service.t_switch", t_switch.to_string());
            }
            ServiceSeries::Ramp { start, slope, .. } => {
                kv("service.S", start.to_string());
                kv("service.slope", slope.to_string());
            }
            ServiceSeries::Explicit(v) => kv("service.values", join(v)),
        }
        if self.s_max.is_finite() {
            kv("service.S_max", self.s_max.to_string());
        }
        match &self.policy {
            RewardPolicy::Constant(r) => {
                kv("policy.kind", "constant".into());
                kv("policy.R0", r.to_string());
            }
            RewardPolicy::MinimalNoBuyBack { r0, floor } => {
                kv("policy.kind", "minimal".into());
                kv("policy.R0", r0.to_string());
                kv("policy.floor", floor.to_string());
            }
            RewardPolicy::Explicit(v) => {
                kv("policy.kind", "explicit".into());
                kv("policy.values", join(v));
            }
        }
        kv("initial.price0", self.price0.to_string());
        if let Some(pa) = self.price_a0 {
            kv("initial.price_A0", pa.to_string());
        }
        kv("initial.a_V0", self.a_v0.to_string());
        kv("initial.price_B0", self.price_b0.to_string());
        kv("horizon", self.horizon.to_string());
        kv("price_convention", self.price_convention.name().into());
        if let Some(out) = &self.output {
            kv("output", out.clone());
        }
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}
