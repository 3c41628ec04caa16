//! Experiment configuration documents.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "instance": {"generate": {"kind": "chain_lock", "horizon": 6, "num_actions": 2}, "seed": 0},
//!   "agents": [{"kind": "vac"}, {"kind": "eps_greedy", "epsilon": 0.1}],
//!   "episodes": 3000,
//!   "seeds": [0, 1, 2]
//! }
//! ```
//!
//! `instance` holds either `fixture` (a path to an instance document,
//! relative to the config file) or `generate` (an instance kind) with a
//! generator `seed`. Agent `alpha` and `b` take a number or `"theory"`
//! (the default), resolved against the run length, the instance and
//! `delta`. Optional fields: `solver` (solver settings), `delta` (0.05),
//! `output_dir`, `record_wall_clock` (false), and per agent `label`
//! (defaults to the kind), `epsilon` (0.1) and `ridge` (1.0).

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use vac_core::agents::AgentKind;
use vac_core::mdp::InstanceKind;
use vac_core::solver::SolveConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// A number or the theory-derived value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Hyper {
    #[default]
    Theory,
    Value(f64),
}

impl<'de> Deserialize<'de> for Hyper {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(Hyper::Value(x)),
            Raw::Text(s) if s == "theory" => Ok(Hyper::Theory),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"theory\", got {s:?}"))),
        }
    }
}

impl Serialize for Hyper {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Hyper::Theory => s.serialize_str("theory"),
            Hyper::Value(x) => s.serialize_f64(*x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<InstanceKind>,
    #[serde(default)]
    pub seed: u64,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_ridge() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub alpha: Hyper,
    #[serde(default)]
    pub b: Hyper,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

impl AgentSpec {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub instance: InstanceSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub solver: SolveConfig,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub record_wall_clock: bool,
}

/// A schema violation and where it is.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn at(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            at(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(at("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        match (&self.instance.fixture, &self.instance.generate) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(at("instance", "exactly one of `fixture` and `generate` is required")),
        }
        if self.agents.is_empty() {
            return Err(at("agents", "at least one agent is required"));
        }
        let mut labels = BTreeSet::new();
        for (i, agent) in self.agents.iter().enumerate() {
            let label = agent.label();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(at(format!("agents[{i}].label"), format!("labels are [A-Za-z0-9_-]+, got {label:?}")));
            }
            if !labels.insert(label) {
                return Err(at(format!("agents[{i}].label"), format!("duplicate label {label:?}")));
            }
            if !(0.0..=1.0).contains(&agent.epsilon) {
                return Err(at(format!("agents[{i}].epsilon"), "must lie in [0, 1]"));
            }
            if !(agent.ridge > 0.0 && agent.ridge.is_finite()) {
                return Err(at(format!("agents[{i}].ridge"), "must be finite and > 0"));
            }
            if let Hyper::Value(a) = agent.alpha {
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(at(format!("agents[{i}].alpha"), "must be finite and >= 0"));
                }
            }
            if let Hyper::Value(b) = agent.b {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(at(format!("agents[{i}].b"), "must be finite and > 0"));
                }
            }
        }
        if self.episodes == 0 {
            return Err(at("episodes", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(at("seeds", "at least one seed is required"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(at("delta", "must lie in (0, 1)"));
        }
        self.solver.validate().map_err(|e| at("solver", e.to_string()))?;
        Ok(())
    }
}

/// Parses a seed list override: comma-separated `u64`s.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let seeds: Result<Vec<u64>, _> = text.split(',').map(|s| s.trim().parse::<u64>()).collect();
    match seeds {
        Ok(s) if !s.is_empty() => Ok(s),
        _ => Err(format!("expected comma-separated unsigned integers, got {text:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "instance": {"fixture": "x.json"},
        "agents": [{"kind": "vac"}], "episodes": 5, "seeds": [0]}"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.agents[0].alpha, Hyper::Theory);
        assert_eq!(cfg.agents[0].epsilon, 0.1);
        assert_eq!(cfg.delta, 0.05);
        assert_eq!(cfg.solver, SolveConfig::default());
    }

    #[test]
    fn errors_carry_the_offending_path() {
        let bad = MINIMAL.replace(r#"{"kind": "vac"}"#, r#"{"kind": "vac", "alpha": "lots"}"#);
        assert_eq!(ExperimentConfig::parse(&bad).unwrap_err().path, "agents[0].alpha");
        let bad = MINIMAL.replace(r#""episodes": 5"#, r#""episodes": 5, "colour": 1"#);
        assert!(ExperimentConfig::parse(&bad).unwrap_err().message.contains("colour"));
        let bad = MINIMAL.replace("[0]", "[]");
        assert_eq!(ExperimentConfig::parse(&bad).unwrap_err().path, "seeds");
        let bad = MINIMAL.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
        assert_eq!(ExperimentConfig::parse(&bad).unwrap_err().path, "schema_version");
    }

    #[test]
    fn seed_lists_parse() {
        assert_eq!(parse_seed_list("3"), Ok(vec![3]));
        assert_eq!(parse_seed_list("1, 2,3"), Ok(vec![1, 2, 3]));
        assert!(parse_seed_list("x").is_err());
        assert!(parse_seed_list("").is_err());
    }
}
