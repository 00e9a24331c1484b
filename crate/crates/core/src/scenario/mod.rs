//! Scenario configuration, CSV traces, parameter sweeps and figure presets.

pub mod config;
pub mod csv;
pub mod presets;
pub mod sweep;

pub use config::{
    parse_scenario, ConfigError, ConfigIssue, Mode, ScenarioConfig, ServiceSeries,
};
pub use csv::{format_number, trace_to_csv, write_trace_csv};
pub use presets::{figures_preset, Figure, Preset};
pub use sweep::{sweep, SweepError, BISECTION_TOLERANCE, SweepResult, SweepSpec, SweepVar};
