//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary so each criterion reports its own measured value
//! and elapsed time. Exits non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::Rng;

use vac_core::agents::{
    hyperparams_discounted, hyperparams_from_theory, run_agent, AgentKind, AgentParams, RegretLog, RunOptions,
};
use vac_core::approx::{project_policy, project_q, Bounds, LogLinearPolicy, QFunction, StepWeights};
use vac_core::estimate::{sampler_stats, total_variation};
use vac_core::mdp::{
    make_instance, rollout, sample_discounted, visitation, InstanceKind, LinearMdp, Mode, TabularCore, TabularPolicy,
};
use vac_core::objective::{grad_objective, vac_objective, TransitionDataset};
use vac_core::rng::{stream, Purpose};
use vac_core::solver::SolveConfig;
use vac_core::verify::{
    check_bellman_completeness, check_lagrangian_equivalence, check_model_error_bound, check_reparam_identity,
    CheckReport, Orientation,
};
use vac_core::Exec;

const DELTA: f64 = 0.05;
const SEEDS: std::ops::Range<u64> = 0..10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn from_report(report: Result<CheckReport, vac_core::Error>, tol: f64) -> Outcome {
    match report {
        Ok(r) => outcome(r.pass && r.max_error <= tol, format!("max error {:.3e} (tol {tol:e})", r.max_error)),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn fixture(name: &str) -> TabularCore {
    TabularCore::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)).unwrap()
}

fn reparam() -> Outcome {
    from_report(Ok(check_reparam_identity(10_000, 1, Orientation::Correct)), 1e-9)
}

fn completeness() -> Outcome {
    from_report(check_bellman_completeness(50, 2), 1e-8)
}

fn model_error() -> Outcome {
    match check_model_error_bound(10, &[1.0, 10.0, 100.0], 3) {
        Ok(r) => outcome(r.pass, format!("worst lower-side slack {:.3e}", r.max_error)),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn lagrangian() -> Outcome {
    from_report(check_lagrangian_equivalence(100, &[0.5, 1.0, 2.0], 4), 1e-9)
}

fn sampler() -> Outcome {
    let core =
        make_instance(&InstanceKind::Random { num_states: 4, num_actions: 3, mode: Mode::Discounted { gamma: 0.9 } }, 5)
            .unwrap();
    let mut r = stream(5, Purpose::Verify, 0);
    let pi = TabularPolicy::from_fn(&core, |_, _| {
        let raw: Vec<f64> = (0..core.num_actions()).map(|_| r.random::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    })
    .unwrap();
    let stats = sampler_stats(&core, &pi, 200_000, 5, Exec::Parallel).unwrap();
    let exact = visitation(&core, &pi).unwrap();
    let tv = total_variation(&stats.pair_freq, exact.step(0));
    let rel = (stats.mean_draws * (1.0 - 0.9) - 1.0).abs();
    outcome(tv <= 0.02 && rel <= 0.02, format!("tv {tv:.4}, mean loop length {:.4} (rel err {rel:.4})", stats.mean_draws))
}

fn random_weights(lin: &LinearMdp, scale: f64, r: &mut impl Rng) -> StepWeights {
    StepWeights::from_steps(
        (0..lin.num_steps()).map(|_| (0..lin.dim()).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect()).collect(),
    )
}

fn uniform_data(lin: &LinearMdp, episodes: usize, seed: u64) -> TransitionDataset {
    let core = lin.core();
    let pi = TabularPolicy::uniform(core);
    let mut data = TransitionDataset::new(core.num_steps());
    for t in 0..episodes {
        let mut r = stream(seed, Purpose::Episode, t as u64);
        if core.is_discounted() {
            data.push_sample(&sample_discounted(core, &pi, &mut r).unwrap(), t).unwrap();
        } else {
            data.push_trajectory(&rollout(core, &pi, &mut r).unwrap(), t).unwrap();
        }
    }
    data
}

fn gradient() -> Outcome {
    let step = 1e-5;
    let mut worst = 0.0f64;
    for config in 0..20u64 {
        let mode = if config % 2 == 0 { Mode::Episodic { horizon: 3 } } else { Mode::Discounted { gamma: 0.8 } };
        let core = make_instance(&InstanceKind::Random { num_states: 3, num_actions: 2, mode }, 300 + config).unwrap();
        let lin = LinearMdp::one_hot(core);
        let bounds = Bounds::for_instance(&lin, 1.0);
        let mut r = stream(config, Purpose::Verify, 1);
        let mut theta = random_weights(&lin, 1.0, &mut r);
        for h in 0..lin.num_steps() {
            let s = 0.5 * bounds.q_sup[h];
            theta.step_mut(h).iter_mut().for_each(|x| *x *= s);
        }
        let f = project_q(&QFunction { theta }, &lin, &bounds);
        let pi = project_policy(&LogLinearPolicy { omega: random_weights(&lin, 1.0, &mut r) }, &bounds);
        let data = uniform_data(&lin, 15, config);
        let alpha = r.random_range(0.05..2.0);
        let value = |theta: &StepWeights, omega: &StepWeights| {
            let f = QFunction { theta: theta.clone() };
            let pi = LogLinearPolicy { omega: omega.clone() };
            vac_objective(&f, &pi, &data, &lin, alpha).unwrap().value
        };
        let (gt, go) = grad_objective(&f, &pi, &data, &lin, alpha).unwrap();
        for h in 0..lin.num_steps() {
            for k in 0..lin.dim() {
                let (mut plus, mut minus) = (f.theta.clone(), f.theta.clone());
                plus.step_mut(h)[k] += step;
                minus.step_mut(h)[k] -= step;
                let fd = (value(&plus, &pi.omega) - value(&minus, &pi.omega)) / (2.0 * step);
                worst = worst.max((gt.step(h)[k] - fd).abs() / fd.abs().max(1.0));

                let (mut plus, mut minus) = (pi.omega.clone(), pi.omega.clone());
                plus.step_mut(h)[k] += step;
                minus.step_mut(h)[k] -= step;
                let fd = (value(&f.theta, &plus) - value(&f.theta, &minus)) / (2.0 * step);
                worst = worst.max((go.step(h)[k] - fd).abs() / fd.abs().max(1.0));
            }
        }
    }
    outcome(worst <= 1e-5, format!("worst relative error {worst:.3e} (tol 1e-5)"))
}

fn runs(lin: &LinearMdp, t: usize, params: AgentParams) -> Vec<RegretLog> {
    let cfg = SolveConfig::default();
    Exec::Parallel
        .map(SEEDS.collect(), |seed| run_agent(lin, t, params, &cfg, seed, RunOptions::default()))
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn regret_scaling() -> Outcome {
    let lin = LinearMdp::one_hot(fixture("random_5x3_h4_seed7.json"));
    let core = lin.core();
    let t = 2000;
    let hp = hyperparams_from_theory(t, core.num_steps(), core.num_actions(), lin.dim(), DELTA).unwrap();
    let logs = runs(&lin, t, AgentParams { kind: AgentKind::Vac, alpha: hp.alpha, b: hp.b, epsilon: 0.0, ridge: 1.0 });
    let r500 = mean(logs.iter().map(|l| l.regret_at(500).unwrap()));
    let r2000 = mean(logs.iter().map(|l| l.regret_at(2000).unwrap()));
    let i200 = mean(logs.iter().map(|l| l.rows[199].regret_inst));
    let i2000 = mean(logs.iter().map(|l| l.rows[1999].regret_inst));
    let (ratio, decay) = (r2000 / r500, i2000 / i200);
    outcome(
        ratio <= 2.6 && decay <= 0.5,
        format!("R(2000)/R(500) = {r2000:.1}/{r500:.1} = {ratio:.3} (<= 2.6); inst(2000)/inst(200) = {decay:.3} (<= 0.5)"),
    )
}

fn exploration() -> Outcome {
    let lin = LinearMdp::one_hot(fixture("chain_lock_h6.json"));
    let core = lin.core();
    let t = 3000;
    let hp = hyperparams_from_theory(t, core.num_steps(), core.num_actions(), lin.dim(), DELTA).unwrap();
    let base = AgentParams { kind: AgentKind::Vac, alpha: hp.alpha, b: hp.b, epsilon: 0.1, ridge: 1.0 };
    let final_mean = |p: AgentParams| mean(runs(&lin, t, p).iter().map(|l| l.final_regret()));
    let vac = final_mean(base);
    let vanilla = final_mean(AgentParams { kind: AgentKind::VanillaAc, alpha: 0.0, ..base });
    let eps = final_mean(AgentParams { kind: AgentKind::EpsGreedy, ..base });
    let (a, b) = (vac / vanilla, vac / eps);
    outcome(
        a <= 0.7 && b <= 0.8,
        format!("vac {vac:.1}, vanilla {vanilla:.1}, eps {eps:.1}; vac/vanilla {a:.3} (<= 0.7), vac/eps {b:.3} (<= 0.8)"),
    )
}

fn discounted() -> Outcome {
    let lin = LinearMdp::one_hot(fixture("two_state_discounted.json"));
    let core = lin.core();
    let gamma = core.gamma().unwrap();
    let t = 2000;
    let hp = hyperparams_discounted(t, gamma, core.num_actions(), lin.dim(), DELTA).unwrap();
    let params = AgentParams { kind: AgentKind::Vac, alpha: hp.alpha, b: hp.b, epsilon: 0.0, ridge: 1.0 };
    let log = run_agent(&lin, t, params, &SolveConfig::default(), 0, RunOptions::default()).unwrap();
    let best = log.rows.iter().map(|r| r.regret_inst).fold(f64::INFINITY, f64::min);
    let samples = log.mean_samples().unwrap();
    let target = 1.0 / (1.0 - gamma);
    let rel = (samples / target - 1.0).abs();
    outcome(
        best <= 0.1 * target && rel <= 0.02,
        format!("min suboptimality {best:.4} (<= {:.1}); mean samples {samples:.3} (rel err {rel:.4})", 0.1 * target),
    )
}

fn collect_csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let bytes = fs::read(&path).unwrap();
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/chain_lock_h6.json");
    let config = tmp.path().join("config.json");
    let body = format!(
        r#"{{"schema_version": 1, "instance": {{"fixture": {fixture:?}}}, "agents": [{{"kind": "vac"}}, {{"kind": "vanilla_ac"}}, {{"kind": "eps_greedy"}}, {{"kind": "mex", "alpha": 0.05}}], "episodes": 40, "seeds": [0, 1, 2]}}"#
    );
    fs::write(&config, body).unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_vacbench"))
            .args(["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .unwrap();
        if !status.success() {
            return outcome(false, format!("run {name} exited with {status}"));
        }
        outputs.push(collect_csvs(&out));
    }
    let same = outputs[0] == outputs[1];
    outcome(same && outputs[0].len() == 13, format!("{} csv files, identical: {same}", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("1 reparameterisation identity", reparam, Duration::from_secs(1)),
        ("2 bellman completeness and realizability", completeness, Duration::from_secs(10)),
        ("3 model error bound", model_error, Duration::from_secs(5)),
        ("4 lagrangian equivalence", lagrangian, Duration::from_secs(5)),
        ("5 discounted sampler", sampler, Duration::from_secs(30)),
        ("6 gradient vs central differences", gradient, Duration::from_secs(30)),
        ("7 regret scaling", regret_scaling, Duration::from_secs(20 * 60)),
        ("8 exploration benefit on chain_lock", exploration, Duration::from_secs(30 * 60)),
        ("9 discounted loop", discounted, Duration::from_secs(10 * 60)),
        ("10 byte-identical reruns", reproducibility, Duration::from_secs(10 * 60)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let Outcome { pass, detail } = check();
        let elapsed = start.elapsed();
        let pass = pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "[{}] {name}: {detail} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
