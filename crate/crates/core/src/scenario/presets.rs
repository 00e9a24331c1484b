//! Paired scenarios contrasting the reward regimes.

use std::fmt;
use std::str::FromStr;

use crate::scenario::{ScenarioConfig, ServiceSeries};
use crate::single_token::{PriceConvention, RewardPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Service level: S = 9 against S = 11 at R0 = 4.2.
    Fig2,
    /// Initial reward: R0 = 5 against R0 = 4.
    Fig3,
    /// Discount factor: delta = 0.9 against delta = 0.8 at R0 = 4.2.
    Fig4,
    /// Moving prices with price factor 0.9 under both conventions.
    Fig5,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown figure `{s}` (fig2, fig3, fig4, fig5)"))
    }
}

/// A named scenario with a short description for its file header.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: ScenarioConfig,
}

impl Preset {
    /// Config text with a comment header.
    pub fn to_config_text(&self) -> String {
        format!(
            "# {}\n# {}\n# Economy: m = 2, n = 2, delta = 0.9 unless overridden, proportional \
             schemes, g = 1, v = 1; minimal no-buy-back rewards with floor 0.1.\n{}",
            self.name,
            self.description,
            self.config.serialize()
        )
    }
}

fn base(r0: f64) -> ScenarioConfig {
    ScenarioConfig {
        policy: RewardPolicy::MinimalNoBuyBack { r0, floor: 0.1 },
        horizon: 500,
        ..ScenarioConfig::default()
    }
}

fn preset(name: &str, description: &str, mut config: ScenarioConfig) -> Preset {
    config.output = Some(format!("{name}.csv"));
    Preset {
        name: name.to_string(),
        description: description.to_string(),
        config,
    }
}

pub fn figures_preset(which: Figure) -> Vec<Preset> {
    match which {
        Figure::Fig2 => vec![
            preset(
                "fig2_S9",
                "service level 9 with R0 = 4.2: rewards grow without bound",
                ScenarioConfig {
                    service: ServiceSeries::Constant(9.0),
                    ..base(4.2)
                },
            ),
            preset(
                "fig2_S11",
                "service level 11 with R0 = 4.2: rewards settle at the floor",
                ScenarioConfig {
                    service: ServiceSeries::Constant(11.0),
                    ..base(4.2)
                },
            ),
        ],
        Figure::Fig3 => vec![
            preset("fig3_R5", "R0 = 5 above the threshold 4.5: rewards explode", base(5.0)),
            preset("fig3_R4", "R0 = 4 below the threshold 4.5: rewards settle at the floor", base(4.0)),
        ],
        Figure::Fig4 => {
            let mut low = base(4.2);
            low.params.delta = 0.8;
            vec![
                preset("fig4_d09", "delta = 0.9, R0 = 4.2: rewards settle at the floor", base(4.2)),
                preset("fig4_d08", "delta = 0.8, R0 = 4.2: rewards explode", low),
            ]
        }
        Figure::Fig5 => {
            let moving = |conv| {
                let mut c = base(4.2);
                c.params.delta = 0.8;
                c.gamma = 0.9;
                c.price_convention = conv;
                c
            };
            vec![
                preset(
                    "fig5_proof",
                    "delta = 0.8, price factor 0.9, price_t = price0 / 0.9^t",
                    moving(PriceConvention::Proof),
                ),
                preset(
                    "fig5_figure",
                    "delta = 0.8, price factor 0.9, price_t = price0 * 0.9^t",
                    moving(PriceConvention::Figure),
                ),
            ]
        }
    }
}
