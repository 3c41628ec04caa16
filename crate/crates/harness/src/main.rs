use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};

use vac_core::approx::{Bounds, LogLinearPolicy, QFunction};
use vac_core::mdp::{rollout, LinearMdp, TabularCore, TabularPolicy};
use vac_core::objective::{Problem, TransitionDataset};
use vac_core::rng::{stream, Purpose};
use vac_core::solver::{solve_round, SolveConfig, Target};
use vac_core::verify::{report_json, run_all, Orientation, VerifyOptions};
use vac_core::Exec;
use vacbench::config::{parse_seed_list, ExperimentConfig};
use vacbench::experiment::{load_instance, resolve_agents, run_cells};
use vacbench::output::write_outputs;
use vacbench::{with_workers, EXIT_CONFIG, EXIT_RUNTIME};

/// Regret benchmarks and verification checks for value-incentivized
/// actor-critic on linear MDPs.
#[derive(Parser)]
#[command(name = "vacbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (agent, seed) cell of an experiment config.
    ///
    /// Writes runs/<label>_seed<seed>.csv per cell, summary.csv (mean and
    /// std of cumulative regret at 1-2-5 checkpoints) and regret.svg.
    /// Exit 2 on config errors, 3 if a run failed (partial CSVs are kept).
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for the cell pool [default: available parallelism].
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory [default: the config's output_dir, else ./vacbench-out].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds replacing the config's seed list.
        #[arg(long, env = "VACBENCH_SEED", hide_env_values = true)]
        seeds: Option<String>,
    },
    /// Run the five verification checks; exit 0 iff all pass.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write verify.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Swap the reparameterisation sides (mutation test).
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// One offline solve on data from a uniform-policy rollout.
    ///
    /// Writes trace.csv (round,phase,iteration,objective,loss), q.json and
    /// policy.json.
    Solve {
        /// Instance document (JSON).
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        /// Episodes (discounted: sampler draws) of uniform-policy data.
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solver settings (JSON); defaults otherwise.
        #[arg(long)]
        solver: Option<PathBuf>,
        #[arg(long, default_value = "vacbench-solve")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    ReparamSign,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, workers, out, seeds } => cmd_run(&config, workers, out, seeds),
        Command::Verify { seed, out, inject_fault } => cmd_verify(seed, out, inject_fault),
        Command::Solve { instance, alpha, b, episodes, seed, solver, out } => {
            cmd_solve(&instance, alpha, b, episodes, seed, solver, &out)
        }
    }
}

fn config_failure(message: impl std::fmt::Display) -> ExitCode {
    error!("{message}");
    ExitCode::from(EXIT_CONFIG)
}

fn cmd_run(path: &Path, workers: Option<usize>, out: Option<PathBuf>, seeds: Option<String>) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return config_failure(format!("cannot read {}: {e}", path.display())),
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    if let Some(list) = seeds {
        match parse_seed_list(&list) {
            Ok(s) => cfg.seeds = s,
            Err(e) => return config_failure(format!("VACBENCH_SEED: {e}")),
        }
    }
    if workers == Some(0) {
        return config_failure("--workers must be >= 1");
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let core = match load_instance(&cfg, base) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    let lin = LinearMdp::one_hot(core);
    let agents = match resolve_agents(&cfg, &lin) {
        Ok(a) => a,
        Err(e) => return config_failure(e),
    };
    for a in &agents {
        info!("{}: alpha = {}, B = {}", a.label, a.params.alpha, a.params.b);
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("vacbench-out"));
    let report = |r: &vacbench::experiment::CellResult| match &r.outcome {
        Ok(log) => info!("{} seed {}: final regret {:.4}", r.label, r.seed, log.final_regret()),
        Err(e) => error!("{e}"),
    };
    let results = match with_workers(workers, || run_cells(&lin, &agents, &cfg, Exec::Parallel, &report)) {
        Ok(r) => r,
        Err(e) => return config_failure(format!("cannot start worker pool: {e}")),
    };
    let complete = results.iter().all(|r| r.outcome.is_ok());
    if let Err(e) = write_outputs(&dir, &results, cfg.episodes, complete) {
        error!("writing outputs to {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    if !complete {
        error!("some runs failed; partial logs are in {}", dir.join("runs").display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    for a in &agents {
        let finals: Vec<f64> = results.iter().filter(|r| r.label == a.label).map(|r| r.log().final_regret()).collect();
        println!("{:<12} mean final regret {:.4} over {} seeds", a.label, finals.iter().sum::<f64>() / finals.len() as f64, finals.len());
    }
    println!("outputs in {}", dir.display());
    ExitCode::SUCCESS
}

fn cmd_verify(seed: u64, out: Option<PathBuf>, fault: Option<Fault>) -> ExitCode {
    let orientation = match fault {
        Some(Fault::ReparamSign) => Orientation::Swapped,
        None => Orientation::Correct,
    };
    let reports = run_all(VerifyOptions { seed, orientation }, Exec::Parallel);
    let text = serde_json::to_string_pretty(&report_json(&reports)).expect("report serialises");
    println!("{text}");
    if let Some(dir) = out {
        if let Err(e) = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("verify.json"), format!("{text}\n"))) {
            error!("writing verify.json: {e}");
            return ExitCode::FAILURE;
        }
    }
    for r in &reports {
        info!("{:<24} {}", r.name, if r.pass { "pass" } else { "FAIL" });
    }
    if reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cmd_solve(
    instance: &Path,
    alpha: f64,
    b: f64,
    episodes: usize,
    seed: u64,
    solver: Option<PathBuf>,
    out: &Path,
) -> ExitCode {
    let core = match TabularCore::load(instance) {
        Ok(c) => c,
        Err(e) => return config_failure(format!("{}: {e}", instance.display())),
    };
    let cfg: SolveConfig = match solver.map(|p| fs::read_to_string(&p).map_err(|e| e.to_string())) {
        None => SolveConfig::default(),
        Some(Err(e)) => return config_failure(e),
        Some(Ok(text)) => {
            let de = &mut serde_json::Deserializer::from_str(&text);
            match serde_path_to_error::deserialize(de) {
                Ok(c) => c,
                Err(e) => return config_failure(format!("solver config at `{}`: {}", e.path(), e.inner())),
            }
        }
    };
    if let Err(e) = cfg.validate() {
        return config_failure(e);
    }
    if !(alpha >= 0.0 && alpha.is_finite() && b > 0.0 && b.is_finite()) {
        return config_failure("--alpha must be >= 0 and --b > 0");
    }
    let lin = LinearMdp::one_hot(core);
    let core = lin.core();
    let uniform = TabularPolicy::uniform(core);
    let mut data = TransitionDataset::new(core.num_steps());
    for t in 0..episodes {
        let mut rng = stream(seed, Purpose::Episode, t as u64);
        let pushed = if core.is_discounted() {
            vac_core::mdp::sample_discounted(core, &uniform, &mut rng).and_then(|x| data.push_sample(&x, t))
        } else {
            rollout(core, &uniform, &mut rng).and_then(|tr| data.push_trajectory(&tr, t))
        };
        if let Err(e) = pushed {
            error!("collecting data: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let problem = match Problem::with_ridge(&lin, &data, alpha, cfg.ridge) {
        Ok(p) => p,
        Err(e) => return config_failure(e),
    };
    let bounds = Bounds::for_instance(&lin, b);
    let start = (QFunction::zeros(&lin), LogLinearPolicy::zeros(&lin));
    let outcome = match solve_round(&problem, &bounds, (&start.0, &start.1), &cfg, Target::Vac) {
        Ok(o) => o,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let written = (|| -> Result<(), Box<dyn std::error::Error>> {
        fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("trace.csv"))?;
        w.write_record(["round", "phase", "iteration", "objective", "loss"])?;
        for row in &outcome.trace {
            w.write_record([
                row.round.to_string(),
                row.phase.as_str().to_string(),
                row.iteration.to_string(),
                row.objective.to_string(),
                row.loss.to_string(),
            ])?;
        }
        w.flush()?;
        fs::write(out.join("q.json"), outcome.q.to_checkpoint())?;
        fs::write(out.join("policy.json"), outcome.policy.to_checkpoint())?;
        Ok(())
    })();
    if let Err(e) = written {
        error!("writing to {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    println!(
        "objective {:.6}  loss {:.6}  value {:.6}  evaluations {}",
        outcome.objective, outcome.loss, outcome.value_term, outcome.evaluations
    );
    println!("outputs in {}", out.display());
    ExitCode::SUCCESS
}
