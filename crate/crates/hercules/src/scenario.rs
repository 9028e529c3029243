//! Declarative scenario files: a strictly-validated TOML schema that
//! lowers into a runnable [`sim::SimSetup`].
//!
//! Physical quantities carry explicit units ("95 Mbps", "20 ms",
//! "1 bdp") and must be spelled out; only dimensionless tunables have
//! defaults. Unknown keys are rejected. `emit` re-serializes a config
//! canonically such that `parse(emit(c)) == c`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::AimdConfig;
use crate::core::{CoefficientSet, Requirement};
use crate::ratecontrol::ControllerConfig;
use crate::sim::{CapacitySegment, ConnectionSpec, LinkModel, Protocol, SimSetup};
use crate::units::{Bandwidth, BufferSpec, TimeSpan};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// Syntax or schema error, with the location reported by the
    /// deserializer.
    #[error("parse error: {0}")]
    Parse(String),

    /// Every violated invariant, one message per violation.
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
}

/// A declarative experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: TimeSpan,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    pub link: LinkSection,
    #[serde(default)]
    pub coefficients: CoefficientsSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub aimd: AimdSection,
    #[serde(default)]
    pub sim: SimSection,
    pub connections: Vec<ConnectionSection>,
}

fn default_trials() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    /// Fixed capacity; exactly one of `capacity` and
    /// `capacity_schedule` must be present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Bandwidth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity_schedule: Option<Vec<CapacityStep>>,
    pub base_rtt: TimeSpan,
    pub buffer: BufferSpec,
    #[serde(default)]
    pub random_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityStep {
    pub at: TimeSpan,
    pub rate: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    pub t: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub d_scale: f64,
}

impl Default for CoefficientsSection {
    fn default() -> Self {
        let c = CoefficientSet::default();
        CoefficientsSection {
            t: c.t,
            beta: c.beta,
            gamma: c.gamma,
            phi: c.phi,
            d_scale: c.d_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub initial_rate_cap: Bandwidth,
    pub delta: f64,
    pub step_fraction: f64,
    pub rate_floor: Bandwidth,
    pub min_interval: TimeSpan,
    pub smoothing: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        ControllerSection {
            initial_rate_cap: Bandwidth(c.initial_rate_cap),
            delta: c.delta,
            step_fraction: c.step_fraction,
            rate_floor: Bandwidth(c.rate_floor),
            min_interval: TimeSpan(c.min_interval),
            smoothing: c.smoothing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimdSection {
    pub additive_increase: Bandwidth,
    pub multiplicative_decrease: f64,
    pub loss_threshold: f64,
}

impl Default for AimdSection {
    fn default() -> Self {
        let c = AimdConfig::default();
        AimdSection {
            additive_increase: Bandwidth(c.additive_increase),
            multiplicative_decrease: c.multiplicative_decrease,
            loss_threshold: c.loss_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub tick: TimeSpan,
    pub record_stride: u32,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            tick: TimeSpan(0.001),
            record_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSection {
    pub id: String,
    pub protocol: Protocol,
    pub min_rate: Bandwidth,
    pub max_rate: Bandwidth,
    #[serde(default)]
    pub bounded: bool,
    #[serde(default = "default_start")]
    pub start: TimeSpan,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<TimeSpan>,
}

fn default_start() -> TimeSpan {
    TimeSpan(0.0)
}

/// Parses and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Parses and validates a scenario from its textual form.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Canonical serialization; `parse(emit(c)) == c` for every valid c.
pub fn emit(config: &ScenarioConfig) -> String {
    toml::to_string_pretty(config).expect("scenario configs serialize")
}

impl ScenarioConfig {
    /// Checks every invariant, collecting all violations.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut faults = Vec::new();

        if self.name.is_empty() {
            faults.push("name must not be empty".into());
        }
        if !(self.duration.secs() > 0.0) {
            faults.push(format!("duration must be > 0, got {}", self.duration));
        }
        if self.trials < 1 {
            faults.push("trials must be >= 1".into());
        }

        match (&self.link.capacity, &self.link.capacity_schedule) {
            (Some(_), Some(_)) => {
                faults.push("link: give either capacity or capacity_schedule, not both".into())
            }
            (None, None) => {
                faults.push("link: one of capacity or capacity_schedule is required".into())
            }
            (Some(c), None) => {
                if !(c.bps() > 0.0) {
                    faults.push(format!("link: capacity must be > 0, got {c}"));
                }
            }
            (None, Some(steps)) => {
                if steps.is_empty() {
                    faults.push("link: capacity_schedule must not be empty".into());
                } else {
                    if steps[0].at.secs() != 0.0 {
                        faults.push("link: capacity_schedule must start at 0 s".into());
                    }
                    for pair in steps.windows(2) {
                        if pair[1].at.secs() <= pair[0].at.secs() {
                            faults.push(
                                "link: capacity_schedule times must be strictly increasing".into(),
                            );
                            break;
                        }
                    }
                    if steps.iter().any(|s| !(s.rate.bps() > 0.0)) {
                        faults.push("link: scheduled capacities must be > 0".into());
                    }
                }
            }
        }
        if !(self.link.base_rtt.secs() > 0.0) {
            faults.push(format!(
                "link: base_rtt must be > 0, got {}",
                self.link.base_rtt
            ));
        }
        if !(self.link.buffer.raw_value() >= 0.0) {
            faults.push("link: buffer must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.link.random_loss) {
            faults.push(format!(
                "link: random_loss must be in [0, 1], got {}",
                self.link.random_loss
            ));
        }

        if let Err(e) = self.coefficient_set().validate() {
            faults.push(e.to_string());
        }
        if let Err(e) = self.controller_config().validate() {
            faults.push(format!("controller: {e}"));
        }
        if let Err(e) = self.aimd_config().validate() {
            faults.push(format!("aimd: {e}"));
        }

        if !(self.sim.tick.secs() > 0.0) {
            faults.push(format!("sim: tick must be > 0, got {}", self.sim.tick));
        } else if self.sim.tick.secs() > self.link.base_rtt.secs() / 4.0 {
            faults.push(format!(
                "sim: tick {} exceeds base_rtt / 4 = {} s",
                self.sim.tick,
                self.link.base_rtt.secs() / 4.0
            ));
        }
        if self.sim.record_stride == 0 {
            faults.push("sim: record_stride must be >= 1".into());
        }

        if self.connections.is_empty() {
            faults.push("connections must not be empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for conn in &self.connections {
            if conn.id.is_empty() {
                faults.push("connection ids must not be empty".into());
            }
            if !seen.insert(conn.id.clone()) {
                faults.push(format!("duplicate connection id {:?}", conn.id));
            }
            let req = Requirement {
                min_rate: conn.min_rate.bps(),
                max_rate: conn.max_rate.bps(),
                bounded: conn.bounded,
            };
            if let Err(e) = req.validate() {
                faults.push(format!("connection {:?}: {e}", conn.id));
            }
            if let Some(stop) = conn.stop {
                if stop.secs() <= conn.start.secs() {
                    faults.push(format!(
                        "connection {:?}: stop must exceed start",
                        conn.id
                    ));
                }
            }
        }

        if faults.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(faults))
        }
    }

    pub fn coefficient_set(&self) -> CoefficientSet {
        CoefficientSet {
            t: self.coefficients.t,
            beta: self.coefficients.beta,
            gamma: self.coefficients.gamma,
            phi: self.coefficients.phi,
            d_scale: self.coefficients.d_scale,
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            initial_rate_cap: self.controller.initial_rate_cap.bps(),
            delta: self.controller.delta,
            step_fraction: self.controller.step_fraction,
            rate_floor: self.controller.rate_floor.bps(),
            min_interval: self.controller.min_interval.secs(),
            smoothing: self.controller.smoothing,
        }
    }

    pub fn aimd_config(&self) -> AimdConfig {
        AimdConfig {
            additive_increase: self.aimd.additive_increase.bps(),
            multiplicative_decrease: self.aimd.multiplicative_decrease,
            loss_threshold: self.aimd.loss_threshold,
        }
    }

    /// The link model with the buffer resolved against the first
    /// capacity segment and the base RTT.
    pub fn link_model(&self) -> LinkModel {
        let capacity_schedule = match (&self.link.capacity, &self.link.capacity_schedule) {
            (Some(c), None) => vec![CapacitySegment {
                start: 0.0,
                capacity: c.bps(),
            }],
            (None, Some(steps)) => steps
                .iter()
                .map(|s| CapacitySegment {
                    start: s.at.secs(),
                    capacity: s.rate.bps(),
                })
                .collect(),
            // validate() rejects the other combinations.
            _ => Vec::new(),
        };
        let first_capacity = capacity_schedule.first().map_or(0.0, |s| s.capacity);
        LinkModel {
            buffer_bits: self
                .link
                .buffer
                .resolve(first_capacity, self.link.base_rtt.secs()),
            base_rtt: self.link.base_rtt.secs(),
            random_loss: self.link.random_loss,
            capacity_schedule,
        }
    }

    pub fn connection_specs(&self) -> Vec<ConnectionSpec> {
        self.connections
            .iter()
            .map(|c| ConnectionSpec {
                id: c.id.clone(),
                requirement: Requirement {
                    min_rate: c.min_rate.bps(),
                    max_rate: c.max_rate.bps(),
                    bounded: c.bounded,
                },
                protocol: c.protocol,
                start_time: c.start.secs(),
                stop_time: c.stop.map(|s| s.secs()),
            })
            .collect()
    }

    /// Lowers into a runnable setup for one trial.
    pub fn to_setup(&self, trial_seed: u64) -> SimSetup {
        SimSetup {
            link: self.link_model(),
            connections: self.connection_specs(),
            coefficients: self.coefficient_set(),
            controller: self.controller_config(),
            aimd: self.aimd_config(),
            duration: self.duration.secs(),
            tick: self.sim.tick.secs(),
            record_stride: self.sim.record_stride,
            seed: trial_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
duration = "1 s"
seed = 7

[link]
capacity = "10 Mbps"
base_rtt = "20 ms"
buffer = "1 bdp"

[[connections]]
id = "a"
protocol = "hercules"
min_rate = "1 Mbps"
max_rate = "2 Mbps"
"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let cfg = parse_scenario_str(MINIMAL).unwrap();
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.coefficients.d_scale, 2.0);
        assert_eq!(cfg.controller.initial_rate_cap.bps(), 5e3);
        assert_eq!(cfg.sim.tick.secs(), 0.001);
        let setup = cfg.to_setup(cfg.seed);
        assert_eq!(setup.link.buffer_bits, 10e6 * 0.020);
        setup.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nturbo = true");
        let err = parse_scenario_str(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{err}");
        assert!(err.to_string().contains("turbo"));
    }

    #[test]
    fn degenerate_requirement_names_the_connection() {
        let text = MINIMAL.replace("max_rate = \"2 Mbps\"", "max_rate = \"1 Mbps\"");
        let err = parse_scenario_str(&text).unwrap_err();
        match err {
            ScenarioError::Validation(faults) => {
                assert!(faults.iter().any(|f| f.contains("\"a\"")), "{faults:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn empty_connection_list_is_rejected() {
        let text: String = MINIMAL
            .lines()
            .take_while(|l| !l.starts_with("[[connections]]"))
            .collect::<Vec<_>>()
            .join("\n")
            .replace("seed = 7", "seed = 7\nconnections = []");
        let err = parse_scenario_str(&text).unwrap_err();
        match err {
            ScenarioError::Validation(faults) => {
                assert!(faults.iter().any(|f| f.contains("connections")), "{faults:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn capacity_and_schedule_are_mutually_exclusive() {
        let extra = "capacity_schedule = [{ at = \"0 s\", rate = \"5 Mbps\" }]";
        let text = MINIMAL.replace(
            "capacity = \"10 Mbps\"",
            &format!("capacity = \"10 Mbps\"\n{extra}"),
        );
        assert!(parse_scenario_str(&text).is_err());

        let text = MINIMAL.replace("capacity = \"10 Mbps\"", extra);
        let cfg = parse_scenario_str(&text).unwrap();
        assert_eq!(cfg.link_model().capacity_at(0.0), 5e6);
    }

    #[test]
    fn parse_error_reports_location() {
        let err = parse_scenario_str("name = [broken").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "no location in {msg}");
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let cfg = parse_scenario_str(MINIMAL).unwrap();
        let text = emit(&cfg);
        let again = parse_scenario_str(&text).unwrap();
        assert_eq!(cfg, again);

        // A fuller config exercising the optional fields.
        let full = r#"
name = "full"
duration = "240 s"
seed = 99
trials = 3

[link]
capacity_schedule = [
  { at = "0 s", rate = "45 Mbps" },
  { at = "60 s", rate = "95 Mbps" },
]
base_rtt = "20 ms"
buffer = "150 KB"
random_loss = 0.01

[coefficients]
t = 0.9
beta = 11.35
gamma = 25.0
phi = 750.0
d_scale = 5.0

[controller]
initial_rate_cap = "5 Kbps"
delta = 0.05
step_fraction = 0.04
rate_floor = "1 Kbps"
min_interval = "10 ms"
smoothing = 0.3

[aimd]
additive_increase = "1 Mbps"
multiplicative_decrease = 0.5
loss_threshold = 0.01

[sim]
tick = "1 ms"
record_stride = 10

[[connections]]
id = "big"
protocol = "hercules"
min_rate = "50 Mbps"
max_rate = "75 Mbps"

[[connections]]
id = "late"
protocol = "vivace_like"
min_rate = "10 Mbps"
max_rate = "15 Mbps"
bounded = true
start = "10 s"
stop = "200 s"
"#;
        let cfg = parse_scenario_str(full).unwrap();
        let again = parse_scenario_str(&emit(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn all_faults_are_collected_at_once() {
        let text = r#"
name = ""
duration = "0 s"
seed = 1

[link]
capacity = "10 Mbps"
base_rtt = "20 ms"
buffer = "1 bdp"
random_loss = 2.0

[[connections]]
id = "a"
protocol = "hercules"
min_rate = "3 Mbps"
max_rate = "2 Mbps"
"#;
        match parse_scenario_str(text).unwrap_err() {
            ScenarioError::Validation(faults) => {
                assert!(faults.len() >= 4, "expected several faults, got {faults:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }
}
