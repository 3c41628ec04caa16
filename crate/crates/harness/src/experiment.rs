//! Resolving a config into runnable cells and running them.

use std::path::Path;

use vac_core::agents::{
    hyperparams_discounted, hyperparams_from_theory, run_agent, AgentKind, AgentParams, RegretLog, RunError,
    RunOptions,
};
use vac_core::mdp::{make_instance, LinearMdp, TabularCore};
use vac_core::Exec;

use crate::config::{ConfigError, ExperimentConfig, Hyper};

/// Loads or generates the instance; fixture paths are relative to
/// `base_dir`.
pub fn load_instance(cfg: &ExperimentConfig, base_dir: &Path) -> Result<TabularCore, ConfigError> {
    let err = |path: &str, e: vac_core::Error| ConfigError { path: path.into(), message: e.to_string() };
    match (&cfg.instance.fixture, &cfg.instance.generate) {
        (Some(path), _) => TabularCore::load(base_dir.join(path)).map_err(|e| err("instance.fixture", e)),
        (None, Some(kind)) => make_instance(kind, cfg.instance.seed).map_err(|e| err("instance.generate", e)),
        (None, None) => Err(ConfigError { path: "instance".into(), message: "no instance given".into() }),
    }
}

/// One agent with its parameters resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAgent {
    pub label: String,
    pub params: AgentParams,
}

/// Resolves `"theory"` entries against the run length, the instance and
/// `delta`. Agents that never read a parameter get a placeholder for it.
pub fn resolve_agents(cfg: &ExperimentConfig, lin: &LinearMdp) -> Result<Vec<ResolvedAgent>, ConfigError> {
    let core = lin.core();
    let theory = || match core.gamma() {
        Some(g) => hyperparams_discounted(cfg.episodes, g, core.num_actions(), lin.dim(), cfg.delta),
        None => hyperparams_from_theory(cfg.episodes, core.num_steps(), core.num_actions(), lin.dim(), cfg.delta),
    };
    cfg.agents
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let uses_alpha = matches!(spec.kind, AgentKind::Vac | AgentKind::Mex);
            let uses_b = spec.kind != AgentKind::EpsGreedy;
            let pick = |h: Hyper, used: bool, field: &str, of: fn(&vac_core::agents::Hyperparams) -> f64| match h {
                Hyper::Value(x) => Ok(x),
                Hyper::Theory if !used => Ok(if field == "b" { 1.0 } else { 0.0 }),
                Hyper::Theory => theory()
                    .map(|hp| of(&hp))
                    .map_err(|e| ConfigError { path: format!("agents[{i}].{field}"), message: e.to_string() }),
            };
            let alpha = pick(spec.alpha, uses_alpha, "alpha", |hp| hp.alpha)?;
            let b = pick(spec.b, uses_b, "b", |hp| hp.b)?;
            Ok(ResolvedAgent {
                label: spec.label().to_string(),
                params: AgentParams { kind: spec.kind, alpha, b, epsilon: spec.epsilon, ridge: spec.ridge },
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct CellResult {
    pub label: String,
    pub seed: u64,
    pub outcome: Result<RegretLog, RunError>,
}

impl CellResult {
    /// The full log, or the partial one of a failed run.
    pub fn log(&self) -> &RegretLog {
        match &self.outcome {
            Ok(log) => log,
            Err(e) => &e.partial,
        }
    }
}

/// Runs every (agent, seed) cell; results come back in agent-major,
/// seed-minor order whatever the execution order was.
pub fn run_cells(
    lin: &LinearMdp,
    agents: &[ResolvedAgent],
    cfg: &ExperimentConfig,
    exec: Exec,
    on_done: &(dyn Fn(&CellResult) + Sync),
) -> Vec<CellResult> {
    let cells: Vec<(ResolvedAgent, u64)> =
        agents.iter().flat_map(|a| cfg.seeds.iter().map(move |&s| (a.clone(), s))).collect();
    let opts = RunOptions { record_wall_clock: cfg.record_wall_clock };
    exec.map(cells, |(agent, seed)| {
        let outcome = run_agent(lin, cfg.episodes, agent.params, &cfg.solver, seed, opts);
        let result = CellResult { label: agent.label, seed, outcome };
        on_done(&result);
        result
    })
}
