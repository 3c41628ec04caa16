//! JSON instance documents.
//!
//! ```json
//! {"mode": "episodic", "H": 2, "num_states": 2, "num_actions": 2,
//!  "reward": [[[0.1, 0.0], [1.0, 0.5]], ...],
//!  "transition": [[[[1.0, 0.0], [0.0, 1.0]], ...], ...],
//!  "rho": [0.5, 0.5]}
//! ```
//!
//! Episodic documents carry `H` and per-step arrays (`reward[h][s][a]`,
//! `transition[h][s][a][s']`); discounted documents carry `gamma` and drop
//! the step level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Mode, TabularCore};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    mode: String,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    num_states: usize,
    num_actions: usize,
    reward: Value,
    transition: Value,
    rho: Vec<f64>,
}

fn nest(flat: &[f64], shape: &[usize]) -> Value {
    if shape.len() == 1 {
        return Value::from(flat.to_vec());
    }
    let chunk: usize = shape[1..].iter().product();
    Value::Array(flat.chunks(chunk).map(|c| nest(c, &shape[1..])).collect())
}

fn flatten(value: &Value, shape: &[usize], field: &str, out: &mut Vec<f64>) -> Result<()> {
    let items = value
        .as_array()
        .filter(|a| a.len() == shape[0])
        .ok_or_else(|| Error::InvalidInstance(format!("{field}: expected an array of length {}", shape[0])))?;
    for item in items {
        if shape.len() == 1 {
            out.push(item.as_f64().ok_or_else(|| Error::InvalidInstance(format!("{field}: non-numeric entry")))?);
        } else {
            flatten(item, &shape[1..], field, out)?;
        }
    }
    Ok(())
}

impl TabularCore {
    pub fn to_json_value(&self) -> Value {
        let (ns, na) = (self.num_states, self.num_actions);
        let (horizon, gamma, reward_shape, transition_shape) = match self.mode {
            Mode::Episodic { horizon } => (Some(horizon), None, vec![horizon, ns, na], vec![horizon, ns, na, ns]),
            Mode::Discounted { gamma } => (None, Some(gamma), vec![ns, na], vec![ns, na, ns]),
        };
        let doc = InstanceDoc {
            mode: if horizon.is_some() { "episodic" } else { "discounted" }.into(),
            horizon,
            gamma,
            num_states: ns,
            num_actions: na,
            reward: nest(&self.reward, &reward_shape),
            transition: nest(&self.transition, &transition_shape),
            rho: self.rho.clone(),
        };
        serde_json::to_value(doc).expect("instance document serialises")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("instance document serialises")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        let (ns, na) = (doc.num_states, doc.num_actions);
        let (mode, reward_shape, transition_shape) = match (doc.mode.as_str(), doc.horizon, doc.gamma) {
            ("episodic", Some(h), None) => (Mode::Episodic { horizon: h }, vec![h, ns, na], vec![h, ns, na, ns]),
            ("discounted", None, Some(g)) => (Mode::Discounted { gamma: g }, vec![ns, na], vec![ns, na, ns]),
            (m, ..) => {
                return Err(Error::InvalidInstance(format!(
                    "mode {m:?} needs exactly one of H (episodic) or gamma (discounted)"
                )))
            }
        };
        if reward_shape.contains(&0) {
            return Err(Error::InvalidInstance("sizes must be positive".into()));
        }
        let mut reward = Vec::new();
        flatten(&doc.reward, &reward_shape, "reward", &mut reward)?;
        let mut transition = Vec::new();
        flatten(&doc.transition, &transition_shape, "transition", &mut transition)?;
        Self::new(ns, na, mode, reward, transition, doc.rho)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}
