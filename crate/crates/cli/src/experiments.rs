//! Experiment drivers. Each returns the full set of output files; seeds and
//! grid points run on the rayon pool and are collected in input order.

use kernel_npg::analysis::{halton, log_log_fit, mean, median, moving_average, schedule_verdict, RateFit, ScheduleRuns};
use kernel_npg::env::TabularMdp;
use kernel_npg::evaluation::{
    error_decomposition_residual, QEstimate, QFunction, SolverMode, TdError, TdSolverConfig, TdSystem,
};
use kernel_npg::kernels::StateAction;
use kernel_npg::mdp::{sample_batch, stream_rng, MdpModel, Policy, SampleBatch, SampleError};
use kernel_npg::npg::{derive_seed, run_npg, Monitor, NpgConfig, NpgFailure, NpgRun, TrainingLog};
use kernel_npg::oracle::{exact_q, optimal_policy, uniform_table, OptimalSolution};
use kernel_npg::policy::SoftmaxPolicy;
use kernel_npg::schedule::{evaluation_lambda, ScheduleConfig};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Environment, LambdaRule, Resolved};
use crate::output::{num, opt, Artifacts, Table};

#[derive(Debug, Error)]
pub enum NumericalError {
    #[error("kernel TD failed: {0}")]
    Td(#[from] TdError),
    #[error("sampling failed: {0}")]
    Sample(#[from] SampleError),
    #[error("{0}")]
    Schedule(String),
}

/// Files plus whether any run hit a numerical failure.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub failures: Vec<String>,
    /// Wall-clock seconds, kept out of the deterministic files.
    pub wall_time: f64,
}

pub fn clock() -> f64 {
    use std::sync::OnceLock;
    use std::time::Instant;
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64()
}

fn fit_json(f: &Option<RateFit>) -> Value {
    match f {
        Some(f) => json!({"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared, "points": f.points}),
        None => Value::Null,
    }
}

fn solve(sys: &TdSystem, td: &TdSolverConfig, lambda: f64) -> Result<(QEstimate, usize), TdError> {
    match td.mode {
        SolverMode::ClosedForm => sys.closed_form(lambda).map(|(q, _)| (q, 0)),
        SolverMode::Iterative => {
            let cfg = TdSolverConfig { lambda, ..*td };
            sys.iterate(&cfg, None, None).map(|(q, t)| (q, t.iterations()))
        }
    }
}

// ---------------------------------------------------------------- eval-rate

#[derive(Debug, Clone)]
pub struct RatePoint {
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub err_n: f64,
    pub err_l2: f64,
    pub td_iterations: usize,
}

const TAG_RATE: u64 = 0xE7A1;

fn eval_lambda(r: &Resolved, n: usize) -> f64 {
    match r.lambda_rule {
        LambdaRule::Fixed => r.td.lambda,
        LambdaRule::Theory => {
            let cfg = ScheduleConfig {
                lambda_base: r.eval_lambda_base,
                ..r.schedule
            };
            evaluation_lambda(&cfg, n).expect("schedule validated")
        }
    }
}

fn rate_point<M: MdpModel, Q: QFunction>(
    r: &Resolved,
    mdp: &M,
    q: &Q,
    l2: impl Fn(&QEstimate) -> f64,
    n: usize,
    seed: u64,
) -> Result<RatePoint, NumericalError> {
    let a = mdp.action_space().discrete_count().expect("discrete actions");
    let policy = SoftmaxPolicy::uniform(a, r.kernel);
    let batch = sample_batch(mdp, &policy, n, derive_seed(seed, TAG_RATE, n as u64))?;
    let sys = TdSystem::new(&batch, &r.kernel, mdp.discount())?;
    let lambda = eval_lambda(r, n);
    let (f, td_iterations) = solve(&sys, &r.td, lambda)?;
    let f = f.compact();
    Ok(RatePoint {
        n,
        seed,
        lambda,
        err_n: sys.distance(&f, q),
        err_l2: l2(&f),
        td_iterations,
    })
}

/// `sqrt(Σ_s μ₀(s) Σ_a π(a|s) (f − Q)²)` for the uniform policy.
fn tabular_l2(mdp: &TabularMdp, q: &kernel_npg::oracle::ExactQ, f: &QEstimate) -> f64 {
    let a = mdp.n_actions();
    let mut acc = 0.0;
    for (s, mu) in mdp.initial().iter().enumerate() {
        for act in 0..a {
            let d = f.eval(&StateAction::new(TabularMdp::observation(s), act)) - q.get(s, act);
            acc += mu * d * d / a as f64;
        }
    }
    acc.sqrt()
}

pub fn eval_rate(r: &Resolved) -> Result<Outcome, NumericalError> {
    let jobs: Vec<(usize, u64)> = r
        .n_grid
        .iter()
        .flat_map(|&n| r.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let points: Vec<RatePoint> = match &r.env {
        Environment::Tabular(mdp) => {
            let q = exact_q(mdp, &uniform_table(mdp));
            jobs.par_iter()
                .map(|&(n, s)| rate_point(r, mdp, &q, |f| tabular_l2(mdp, &q, f), n, s))
                .collect::<Result<_, _>>()?
        }
        Environment::Smooth(mdp) => {
            let policy = SoftmaxPolicy::uniform(2, r.kernel);
            let sq = mdp.exact_q(&policy, 4000);
            let q = move |w: &StateAction| sq.eval(w.state[0], w.action.index().unwrap_or(0));
            let probes = halton(1, r.probe_points.max(1), 0);
            let l2 = |f: &QEstimate| {
                let mut acc = 0.0;
                for p in &probes {
                    for a in 0..2 {
                        let w = StateAction::new(p.clone(), a);
                        let d = f.eval(&w) - q(&w);
                        acc += 0.5 * d * d;
                    }
                }
                (acc / probes.len() as f64).sqrt()
            };
            jobs.par_iter()
                .map(|&(n, s)| rate_point(r, mdp, &q, l2, n, s))
                .collect::<Result<_, _>>()?
        }
        Environment::Physics(_) => unreachable!("rejected during validation"),
    };

    let mut raw = Table::new(&["n", "seed", "lambda", "err_n", "err_l2", "td_iterations"]);
    for p in &points {
        raw.push(vec![
            p.n.to_string(),
            p.seed.to_string(),
            num(p.lambda),
            num(p.err_n),
            num(p.err_l2),
            p.td_iterations.to_string(),
        ]);
    }
    let mut summary = Table::new(&["n", "lambda", "median_err_n", "median_err_l2"]);
    let (mut xs, mut yn, mut yl) = (Vec::new(), Vec::new(), Vec::new());
    for &n in &r.n_grid {
        let at: Vec<&RatePoint> = points.iter().filter(|p| p.n == n).collect();
        let en = median(&at.iter().map(|p| p.err_n).collect::<Vec<_>>()).unwrap_or(f64::NAN);
        let el = median(&at.iter().map(|p| p.err_l2).collect::<Vec<_>>()).unwrap_or(f64::NAN);
        summary.push(vec![n.to_string(), num(eval_lambda(r, n)), num(en), num(el)]);
        xs.push(n as f64);
        yn.push(en);
        yl.push(el);
    }
    let fit_n = log_log_fit(&xs, &yn);
    let fit_l2 = log_log_fit(&xs, &yl);

    let mut out = Outcome::default();
    out.artifacts.table("rate_points.csv", &raw);
    out.artifacts.table("rate_summary.csv", &summary);
    out.artifacts.json(
        "summary.json",
        &json!({
            "kind": "eval-rate",
            "environment": r.env.name(),
            "seeds": r.seeds,
            "n_grid": r.n_grid,
            "fit_err_n": fit_json(&fit_n),
            "fit_err_l2": fit_json(&fit_l2),
        }),
    );
    Ok(out)
}

// -------------------------------------------------------------------- train

pub const TRAINING_HEADER: [&str; 17] = [
    "k",
    "seed",
    "n",
    "lambda",
    "delta",
    "norm_proxy",
    "td_iterations",
    "td_residual_rms",
    "td_error_sup",
    "td_error_n",
    "f_norm",
    "gap",
    "min_gap",
    "bound",
    "reward_mean",
    "reward_std",
    "min_action_prob",
];

pub fn training_table(log: &TrainingLog) -> Table {
    let mut t = Table::new(&TRAINING_HEADER);
    for r in &log.records {
        t.push(vec![
            r.k.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            num(r.lambda),
            num(r.delta),
            num(r.norm_proxy),
            r.td_iterations.to_string(),
            num(r.td_residual_rms),
            opt(r.td_error_sup),
            opt(r.td_error_n),
            num(r.f_norm),
            opt(r.gap),
            opt(r.min_gap),
            opt(r.bound),
            opt(r.reward_mean),
            opt(r.reward_std),
            num(r.min_action_prob),
        ]);
    }
    t
}

fn run_one(r: &Resolved, cfg: &NpgConfig, opt: Option<&OptimalSolution>, seed: u64) -> Result<NpgRun, NpgFailure> {
    match (&r.env, opt) {
        (Environment::Tabular(mdp), Some(o)) => run_npg(mdp, Monitor::Tabular { mdp, optimal: o }, cfg, seed),
        (Environment::Tabular(mdp), None) => run_npg(mdp, Monitor::Episodes, cfg, seed),
        (Environment::Physics(env), _) => run_npg(env, Monitor::Episodes, cfg, seed),
        (Environment::Smooth(mdp), _) => run_npg(mdp, Monitor::Episodes, cfg, seed),
    }
}

fn first_last_means(log: &TrainingLog, w: usize) -> (Option<f64>, Option<f64>) {
    let r: Vec<f64> = log.records.iter().filter_map(|r| r.reward_mean).collect();
    if r.is_empty() {
        return (None, None);
    }
    let w = w.min(r.len());
    (mean(&r[..w]), mean(&r[r.len() - w..]))
}

fn seed_summary(log: &TrainingLog, error: Option<&NpgFailure>) -> Value {
    let (first, last) = first_last_means(log, 10);
    json!({
        "seed": log.seed,
        "iterations": log.records.len(),
        "initial_gap": log.initial_gap,
        "final_gap": log.final_gap(),
        "min_gap": log.min_gap(),
        "initial_kl": log.initial_kl,
        "bound_holds": log.bound_holds(1e-9),
        "final_bound": log.records.last().and_then(|r| r.bound),
        "initial_reward": log.initial_reward,
        "final_reward": log.records.last().and_then(|r| r.reward_mean),
        "first10_reward": first,
        "last10_reward": last,
        "notes": log.notes,
        "error": error.map(|e| e.to_string()),
    })
}

fn optimal_for(r: &Resolved) -> Option<OptimalSolution> {
    match &r.env {
        Environment::Tabular(mdp) => Some(optimal_policy(mdp)),
        _ => None,
    }
}

/// Runs every seed; failed seeds keep their partial logs.
fn run_seeds(r: &Resolved, cfg: &NpgConfig, opt: Option<&OptimalSolution>) -> Vec<(TrainingLog, Option<NpgFailure>)> {
    r.seeds
        .par_iter()
        .map(|&seed| match run_one(r, cfg, opt, seed) {
            Ok(run) => (run.log, None),
            Err(e) => (e.partial.clone(), Some(e)),
        })
        .collect()
}

pub fn train(r: &Resolved) -> Outcome {
    let optimal = optimal_for(r);
    let mut cfg = r.npg.clone();
    cfg.clock = Some(clock);
    let t0 = clock();
    let runs = run_seeds(r, &cfg, optimal.as_ref());
    let mut out = Outcome::default();
    let mut seeds = Vec::new();
    for (log, err) in &runs {
        out.artifacts.table(format!("training_seed{}.csv", log.seed), &training_table(log));
        seeds.push(seed_summary(log, err.as_ref()));
        if let Some(e) = err {
            out.failures.push(format!("seed {}: {e}", log.seed));
        }
    }
    out.artifacts.json(
        "summary.json",
        &json!({
            "kind": "npg-train",
            "environment": r.env.name(),
            "outer_iters": r.npg.outer_iters,
            "seeds": seeds,
        }),
    );
    out.wall_time = clock() - t0;
    out
}

// ------------------------------------------------------------ schedule-sweep

pub fn schedule_sweep(r: &Resolved) -> Outcome {
    let optimal = optimal_for(r);
    let t0 = clock();
    let mut out = Outcome::default();
    let mut raw = Table::new(&["exponent", "seed", "k", "delta", "n", "lambda", "gap", "min_gap", "reward_mean"]);
    let mut smooth = Table::new(&["exponent", "k", "mean_gap", "smoothed_gap", "mean_reward", "smoothed_reward"]);
    let mut rows = Vec::new();
    let mut by_exponent = Vec::new();
    for &a in &r.exponents {
        let mut cfg = r.npg.clone();
        cfg.schedule.step_exponent = a;
        let runs = run_seeds(r, &cfg, optimal.as_ref());
        for (log, err) in &runs {
            for rec in &log.records {
                raw.push(vec![
                    num(a),
                    log.seed.to_string(),
                    rec.k.to_string(),
                    num(rec.delta),
                    rec.n.to_string(),
                    num(rec.lambda),
                    opt(rec.gap),
                    opt(rec.min_gap),
                    opt(rec.reward_mean),
                ]);
            }
            if let Some(e) = err {
                out.failures.push(format!("exponent {a}, seed {}: {e}", log.seed));
            }
        }
        let len = runs.iter().map(|(l, _)| l.records.len()).min().unwrap_or(0);
        let avg = |f: &dyn Fn(&kernel_npg::npg::TrainingRecord) -> Option<f64>| -> Vec<Option<f64>> {
            (0..len)
                .map(|k| {
                    let v: Option<Vec<f64>> = runs.iter().map(|(l, _)| f(&l.records[k])).collect();
                    v.and_then(|v| mean(&v))
                })
                .collect()
        };
        let gaps = avg(&|x| x.gap);
        let rewards = avg(&|x| x.reward_mean);
        let smoothed = |v: &[Option<f64>]| -> Vec<Option<f64>> {
            if v.iter().all(Option::is_some) {
                let xs: Vec<f64> = v.iter().map(|x| x.unwrap()).collect();
                moving_average(&xs, r.smoothing_window).into_iter().map(Some).collect()
            } else {
                vec![None; v.len()]
            }
        };
        let (sg, sr) = (smoothed(&gaps), smoothed(&rewards));
        for k in 0..len {
            smooth.push(vec![num(a), (k + 1).to_string(), opt(gaps[k]), opt(sg[k]), opt(rewards[k]), opt(sr[k])]);
        }
        let finals: Vec<f64> = runs.iter().filter_map(|(l, _)| l.final_gap()).collect();
        let rewards_last: Vec<f64> = runs
            .iter()
            .filter_map(|(l, _)| l.records.last().and_then(|x| x.reward_mean))
            .collect();
        rows.push(json!({
            "exponent": a,
            "final_gaps": finals,
            "mean_final_gap": mean(&finals),
            "final_rewards": rewards_last,
            "mean_final_reward": mean(&rewards_last),
        }));
        if optimal.is_some() {
            let curves: Vec<Vec<f64>> = runs
                .iter()
                .map(|(l, _)| l.records.iter().filter_map(|x| x.gap).collect())
                .collect();
            by_exponent.push(ScheduleRuns { exponent: a, curves });
        }
    }

    let verdict = ordering_verdict(&by_exponent);
    out.artifacts.table("sweep.csv", &raw);
    out.artifacts.table("sweep_smoothed.csv", &smooth);
    out.artifacts.json(
        "summary.json",
        &json!({
            "kind": "schedule-sweep",
            "environment": r.env.name(),
            "outer_iters": r.npg.outer_iters,
            "smoothing_window": r.smoothing_window,
            "exponents": rows,
            "verdict": verdict,
        }),
    );
    out.wall_time = clock() - t0;
    out
}

/// Needs a slow (`a < 0.5`), the recommended (`a = 0.5`), and a fast
/// (`a > 1`) exponent with gap curves; otherwise no verdict.
fn ordering_verdict(runs: &[ScheduleRuns]) -> Value {
    let slow = runs.iter().filter(|r| r.exponent < 0.5).min_by(|a, b| a.exponent.total_cmp(&b.exponent));
    let mid = runs.iter().find(|r| r.exponent == 0.5);
    let fast = runs.iter().filter(|r| r.exponent > 1.0).max_by(|a, b| a.exponent.total_cmp(&b.exponent));
    let (Some(slow), Some(mid), Some(fast)) = (slow, mid, fast) else {
        return Value::Null;
    };
    let v = schedule_verdict(slow, mid, fast, 1e-12);
    json!({
        "slow_exponent": slow.exponent,
        "fast_exponent": fast.exponent,
        "recommended_beats_fast": v.recommended_beats_fast,
        "slow_unstable": v.slow_unstable,
        "slow_non_monotone": v.slow_non_monotone,
        "variance_ratio": v.variance_ratio,
        "mean_final_gap_slow": v.slow_final,
        "mean_final_gap_recommended": v.recommended_final,
        "mean_final_gap_fast": v.fast_final,
        "recommended_best": v.recommended_beats_fast && v.slow_unstable,
    })
}

// -------------------------------------------------------------- diagnostics

fn batch_table(batch: &SampleBatch) -> Table {
    let d = batch.samples.first().map_or(0, |s| s.omega0.state.len());
    let mut header: Vec<String> = vec!["i".into()];
    header.extend((0..d).map(|j| format!("s0_{j}")));
    header.push("a0".into());
    header.push("reward".into());
    header.extend((0..d).map(|j| format!("s1_{j}")));
    header.extend(["a1".into(), "terminal".into()]);
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&hdr);
    for (i, s) in batch.samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.omega0.state.iter().map(|x| num(*x)));
        row.push(s.omega0.action.index().map_or(String::new(), |a| a.to_string()));
        row.push(num(s.reward));
        row.extend(s.omega1.state.iter().map(|x| num(*x)));
        row.push(s.omega1.action.index().map_or(String::new(), |a| a.to_string()));
        row.push(u8::from(s.terminal).to_string());
        t.push(row);
    }
    t
}

fn td_trace<M: MdpModel>(
    r: &Resolved,
    mdp: &M,
    seed: u64,
    out: &mut Outcome,
) -> Result<(SampleBatch, TdSystem, QEstimate, Value), NumericalError> {
    let a = mdp.action_space().discrete_count().expect("discrete actions");
    let policy = SoftmaxPolicy::uniform(a, r.kernel);
    let n = r.schedule.n_min;
    let batch = sample_batch(mdp, &policy, n, seed)?;
    let sys = TdSystem::new(&batch, &r.kernel, mdp.discount())?;
    let lambda = r.td.lambda;
    let (exact, info) = sys.closed_form(lambda)?;
    let target = sys.values_at_anchors(&exact);
    let cfg = TdSolverConfig { lambda, ..r.td };
    let (_, trace) = sys.iterate(&cfg, None, Some(&target))?;
    let rho = sys.spectral_radius(trace.eta, trace.alpha);
    let mut t = Table::new(&["t", "step_norm", "coeff_norm", "error_vs_closed_form"]);
    for i in 0..trace.iterations() {
        t.push(vec![
            (i + 1).to_string(),
            num(trace.step_norms[i]),
            num(trace.coeff_norms[i]),
            num(trace.errors[i]),
        ]);
    }
    out.artifacts.table("td_trace.csv", &t);
    out.artifacts.table("batch.csv", &batch_table(&batch));
    let v = json!({
        "n": n,
        "distinct_anchors": sys.m(),
        "lambda": lambda,
        "eta": trace.eta,
        "alpha": trace.alpha,
        "spectral_radius": rho,
        "iterations": trace.iterations(),
        "converged": trace.converged,
        "iteration_cap": trace.cap,
        "final_error_vs_closed_form": trace.errors.last(),
        "closed_form_jitter": info.jitter,
        "closed_form_condition_estimate": info.condition_estimate,
        "closed_form_relative_residual": info.residual,
    });
    Ok((batch, sys, exact, v))
}

pub fn diagnostics(r: &Resolved) -> Result<Outcome, NumericalError> {
    let seed = r.seeds[0];
    let mut out = Outcome::default();
    let mut summary = json!({"kind": "diagnostics", "environment": r.env.name(), "seed": seed});
    match &r.env {
        Environment::Tabular(mdp) => {
            let (batch, _, q_hat, td) = td_trace(r, mdp, seed, &mut out)?;
            let pi = uniform_table(mdp);
            let q = exact_q(mdp, &pi);
            let optimal = optimal_policy(mdp);
            let (ns, na) = (mdp.n_states(), mdp.n_actions());
            let mut t = Table::new(&["s", "a", "reward", "q_uniform", "q_star", "pi_star", "nu_star"]);
            for s in 0..ns {
                for a in 0..na {
                    t.push(vec![
                        s.to_string(),
                        a.to_string(),
                        num(mdp.r(s, a)),
                        num(q.get(s, a)),
                        num(optimal.q.get(s, a)),
                        num(optimal.policy[s * na + a]),
                        num(optimal.nu[s]),
                    ]);
                }
            }
            out.artifacts.table("oracle.csv", &t);
            let dec = match error_decomposition_residual(&batch, &q_hat, &q, r.td.lambda, mdp.gamma()) {
                Ok(d) => json!({"lhs": d.lhs, "rhs": d.rhs, "residual": d.residual}),
                Err(e) => json!({"error": e.to_string()}),
            };
            summary["td"] = td;
            summary["decomposition"] = dec;
            summary["bellman_residual_exact_q"] = json!(q.bellman_residual(mdp, &pi));
            summary["nu_star_cesaro"] = json!(optimal.cesaro);
        }
        Environment::Smooth(mdp) => {
            let (_, _, _, td) = td_trace(r, mdp, seed, &mut out)?;
            let policy = SoftmaxPolicy::uniform(2, r.kernel);
            let sq = mdp.exact_q(&policy, 4000);
            let mut t = Table::new(&["s", "q_a0", "q_a1"]);
            for i in 0..=100 {
                let s = i as f64 / 100.0;
                t.push(vec![num(s), num(sq.eval(s, 0)), num(sq.eval(s, 1))]);
            }
            out.artifacts.table("oracle.csv", &t);
            summary["td"] = td;
            summary["c0"] = json!(sq.c0);
            summary["c1"] = json!(sq.c1);
        }
        Environment::Physics(env) => {
            let (_, _, _, td) = td_trace(r, env, seed, &mut out)?;
            let policy = SoftmaxPolicy::uniform(env.action_space().discrete_count().unwrap_or(1), r.kernel);
            let (t, ret) = episode_trace(env, &policy, seed)?;
            out.artifacts.table("episode_trace.csv", &t);
            summary["td"] = td;
            summary["uniform_episode_return"] = json!(ret);
            summary["uniform_episode_length"] = json!(t.len());
        }
    }
    out.artifacts.json("summary.json", &summary);
    Ok(out)
}

/// One episode from the reset distribution, step by step.
fn episode_trace<M: MdpModel, P: Policy>(mdp: &M, policy: &P, seed: u64) -> Result<(Table, f64), SampleError> {
    let mut rng = stream_rng(seed, 0);
    let mut s = mdp.sample_reset(&mut rng);
    let d = mdp.observation_dim();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..d).map(|j| format!("obs_{j}")));
    header.extend(["action".into(), "reward".into(), "terminal".into()]);
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&hdr);
    let cap = mdp.max_episode_steps().unwrap_or(1000);
    let mut ret = 0.0;
    for step in 0..cap {
        let obs = mdp.observe(&s);
        let a = kernel_npg::mdp::sample_categorical(&policy.action_distribution(&obs), &mut rng);
        let st = mdp.step(&s, a, &mut rng)?;
        ret += st.reward;
        let mut row = vec![step.to_string()];
        row.extend(obs.iter().map(|x| num(*x)));
        row.extend([a.to_string(), num(st.reward), u8::from(st.terminal).to_string()]);
        t.push(row);
        if st.terminal {
            break;
        }
        s = st.next;
    }
    Ok((t, ret))
}
