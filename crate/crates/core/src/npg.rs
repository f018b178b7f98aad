//! The NPG-in-RKHS outer loop: sample under `π^{k−1}`, fit `f⁽ᵏ⁾` by kernel
//! TD, set `π^k ∝ π^{k−1} exp{Δ_k f⁽ᵏ⁾}`.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::env::TabularMdp;
use crate::evaluation::{bellman_residuals, QEstimate, SolverMode, TdError, TdSolverConfig, TdSystem};
use crate::kernels::{KernelSpec, StateAction};
use crate::mdp::{collect_rollouts, run_episode, sample_batch, MdpModel, SampleBatch, SampleError};
use crate::oracle::{
    expected_kl, expected_total_reward, exact_q, policy_table, uniform_table, OptimalSolution,
};
use crate::policy::{NormProxyMode, SoftmaxPolicy};
use crate::schedule::{schedule, ScheduleConfig, ScheduleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NpgError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("sampling failed twice: {0}")]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Td(#[from] TdError),
    #[error("policy compaction failed: {0}")]
    Compaction(String),
}

/// How each outer iteration collects its batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Independent one-step draws from `μ₀`.
    Independent,
    /// Consecutive transitions of whole episodes started from `μ₀`.
    Rollouts,
}

/// Periodic refit of the policy onto a fixed dictionary of states.
#[derive(Debug, Clone, PartialEq)]
pub struct Compaction {
    pub every: usize,
    pub states: Vec<Vec<f64>>,
    pub ridge: f64,
}

#[derive(Debug, Clone)]
pub struct NpgConfig {
    pub kernel: KernelSpec,
    pub schedule: ScheduleConfig,
    pub outer_iters: usize,
    /// Solver settings; `lambda` is overwritten by the schedule.
    pub td: TdSolverConfig,
    pub sampling: SamplingMode,
    /// Start each TD solve from the previous `f⁽ᵏ⁻¹⁾`.
    pub warm_start: bool,
    /// Evaluation episodes per iteration (physics environments).
    pub eval_episodes: usize,
    pub compaction: Option<Compaction>,
    /// Wall-clock source in seconds, supplied by hosts that have one.
    pub clock: Option<fn() -> f64>,
}

impl NpgConfig {
    pub fn new(kernel: KernelSpec, schedule: ScheduleConfig, outer_iters: usize) -> Self {
        Self {
            kernel,
            schedule,
            outer_iters,
            td: TdSolverConfig::default(),
            sampling: SamplingMode::Independent,
            warm_start: false,
            eval_episodes: 0,
            compaction: None,
            clock: None,
        }
    }
}

/// What to measure after each update.
#[derive(Debug, Clone, Copy)]
pub enum Monitor<'a> {
    /// Exact gap, TD sup-norm error, and the bound expression.
    Tabular { mdp: &'a TabularMdp, optimal: &'a OptimalSolution },
    /// Episode returns only.
    Episodes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub k: usize,
    pub seed: u64,
    pub n: usize,
    pub lambda: f64,
    pub delta: f64,
    pub norm_proxy: f64,
    pub td_iterations: usize,
    /// RMS Bellman residual of `f⁽ᵏ⁾` on its own batch.
    pub td_residual_rms: f64,
    /// `max_{s,a} |f⁽ᵏ⁾ − Q^{π^{k−1}}|` (tabular only).
    pub td_error_sup: Option<f64>,
    /// `‖f⁽ᵏ⁾ − Q^{π^{k−1}}‖_n` (tabular only).
    pub td_error_n: Option<f64>,
    /// `‖f⁽ᵏ⁾‖_H`.
    pub f_norm: f64,
    /// `ℛ[π*] − ℛ[π^k]`.
    pub gap: Option<f64>,
    /// Smallest gap over `π⁰ … π^k`.
    pub min_gap: Option<f64>,
    /// Bound expression over iterations `1 … k`.
    pub bound: Option<f64>,
    pub reward_mean: Option<f64>,
    pub reward_std: Option<f64>,
    pub min_action_prob: f64,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub seed: u64,
    pub records: Vec<TrainingRecord>,
    pub initial_gap: Option<f64>,
    /// `E_{ν*} KL(π* ‖ π⁰)`.
    pub initial_kl: Option<f64>,
    /// Initial-policy episode returns (physics).
    pub initial_reward: Option<f64>,
    pub notes: Vec<String>,
}

impl TrainingLog {
    /// Whether the logged bound dominates the running min-gap at every
    /// iteration, within `slack`.
    pub fn bound_holds(&self, slack: f64) -> Option<bool> {
        let mut all = true;
        for r in &self.records {
            match (r.min_gap, r.bound) {
                (Some(g), Some(b)) => all &= g <= b + slack,
                _ => return None,
            }
        }
        Some(all)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.gap).or(self.initial_gap)
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.min_gap).or(self.initial_gap)
    }
}

#[derive(Debug, Clone)]
pub struct NpgRun {
    pub log: TrainingLog,
    pub policy: SoftmaxPolicy,
}

/// Error plus the records written before it.
#[derive(Debug, Clone, Error)]
#[error("{error} (after {} completed iterations)", partial.records.len())]
pub struct NpgFailure {
    pub error: NpgError,
    pub partial: TrainingLog,
}

/// Seed for stream `tag` of outer iteration `k` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64, k: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_BATCH: u64 = 1;
const TAG_RETRY: u64 = 2;
const TAG_EVAL: u64 = 3;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn min_prob_tabular(mdp: &TabularMdp, pi: &SoftmaxPolicy) -> f64 {
    policy_table(mdp, pi).into_iter().fold(1.0, f64::min)
}

fn collect<M: MdpModel>(
    mdp: &M,
    policy: &SoftmaxPolicy,
    n: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<(SampleBatch, Vec<f64>), SampleError> {
    match mode {
        SamplingMode::Independent => sample_batch(mdp, policy, n, seed).map(|b| (b, Vec::new())),
        SamplingMode::Rollouts => collect_rollouts(mdp, policy, n, seed).map(|r| (r.batch, r.episode_returns)),
    }
}

fn episode_returns<M: MdpModel>(
    mdp: &M,
    policy: &SoftmaxPolicy,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, SampleError> {
    (0..episodes as u64)
        .map(|e| run_episode(mdp, policy, seed, e, 1000).map(|(r, _)| r))
        .collect()
}

/// Runs `cfg.outer_iters` NPG iterations from the uniform policy.
pub fn run_npg<M: MdpModel>(
    mdp: &M,
    monitor: Monitor<'_>,
    cfg: &NpgConfig,
    seed: u64,
) -> Result<NpgRun, NpgFailure> {
    let n_actions = match mdp.action_space().discrete_count() {
        Some(a) => a,
        None => {
            return Err(NpgFailure {
                error: NpgError::Sample(SampleError::ContinuousActions),
                partial: TrainingLog::default(),
            })
        }
    };
    let gamma = mdp.discount();
    let mut policy = SoftmaxPolicy::uniform(n_actions, cfg.kernel);
    let mut log = TrainingLog {
        seed,
        ..Default::default()
    };
    let now = || cfg.clock.map(|c| c());
    let start = now();

    let fail = |error: NpgError, log: &TrainingLog| NpgFailure {
        error,
        partial: log.clone(),
    };

    match monitor {
        Monitor::Tabular { mdp: tab, optimal } => {
            let uniform = uniform_table(tab);
            let g0 = expected_total_reward(tab, &optimal.policy, &optimal.nu)
                - expected_total_reward(tab, &uniform, &optimal.nu);
            log.initial_gap = Some(g0);
            log.initial_kl = Some(expected_kl(&optimal.policy, &uniform, &optimal.nu, n_actions));
        }
        Monitor::Episodes => {
            log.notes.push(String::from(
                "no exact oracle: gap, TD sup-norm error, and the initial-KL bound term are not computed",
            ));
            if cfg.eval_episodes > 0 {
                let r = episode_returns(mdp, &policy, cfg.eval_episodes, derive_seed(seed, TAG_EVAL, 0))
                    .map_err(|e| fail(e.into(), &log))?;
                log.initial_reward = Some(mean_std(&r).0);
            }
        }
    }

    let r_max = mdp.reward_bound();
    let (mut sum_delta, mut sum_err, mut sum_sq) = (0.0, 0.0, 0.0);
    let mut min_gap = log.initial_gap;
    let mut previous_f: Option<QEstimate> = None;

    for k in 1..=cfg.outer_iters {
        let proxy = match cfg.schedule.norm_proxy_mode {
            NormProxyMode::Constant => 1.0,
            mode => policy.norm_proxy(mode).max(1.0),
        };
        let step = schedule(&cfg.schedule, k, proxy).map_err(|e| fail(e.into(), &log))?;

        let batch_seed = derive_seed(seed, TAG_BATCH, k as u64);
        let (batch, rollout_returns) = match collect(mdp, &policy, step.n, batch_seed, cfg.sampling) {
            Ok(v) => v,
            Err(first) => {
                log::warn!("sampling failed at k={k} ({first}); retrying with a fresh seed");
                collect(mdp, &policy, step.n, derive_seed(seed, TAG_RETRY, k as u64), cfg.sampling)
                    .map_err(|e| fail(e.into(), &log))?
            }
        };

        let system = TdSystem::new(&batch, &cfg.kernel, gamma).map_err(|e| fail(e.into(), &log))?;
        let (f, td_iterations) = match cfg.td.mode {
            SolverMode::ClosedForm => {
                let (q, _) = system.closed_form(step.lambda).map_err(|e| fail(e.into(), &log))?;
                (q, 0)
            }
            SolverMode::Iterative => {
                let td = TdSolverConfig {
                    lambda: step.lambda,
                    ..cfg.td
                };
                let init = if cfg.warm_start { previous_f.as_ref() } else { None };
                let (q, trace) = system.iterate(&td, init, None).map_err(|e| fail(e.into(), &log))?;
                (q, trace.iterations())
            }
        };
        // Same function with repeated anchors merged; much cheaper to evaluate.
        let f = f.compact();
        let residuals = bellman_residuals(&batch, &f, gamma);
        let td_residual_rms = (residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64).sqrt();

        let mut rec = TrainingRecord {
            k,
            seed,
            n: step.n,
            lambda: step.lambda,
            delta: step.delta,
            norm_proxy: proxy,
            td_iterations,
            td_residual_rms,
            td_error_sup: None,
            td_error_n: None,
            f_norm: f.rkhs_norm_sq().sqrt(),
            gap: None,
            min_gap: None,
            bound: None,
            reward_mean: None,
            reward_std: None,
            min_action_prob: f64::NAN,
            wall_time: None,
        };

        if let Monitor::Tabular { mdp: tab, .. } = monitor {
            let q = exact_q(tab, &policy_table(tab, &policy));
            let mut sup: f64 = 0.0;
            for s in 0..tab.n_states() {
                for a in 0..n_actions {
                    let w = StateAction::new(TabularMdp::observation(s), a);
                    sup = sup.max((f.eval(&w) - q.get(s, a)).abs());
                }
            }
            rec.td_error_sup = Some(sup);
            rec.td_error_n = Some(system.distance(&f, &q));
        }

        previous_f = Some(f.clone());
        policy = policy.npg_step(f, step.delta);
        if let Some(c) = &cfg.compaction {
            if c.every > 0 && k % c.every == 0 {
                policy = policy
                    .compact_onto(&c.states, c.ridge)
                    .map_err(|e| fail(NpgError::Compaction(alloc::format!("{e}")), &log))?;
            }
        }

        match monitor {
            Monitor::Tabular { mdp: tab, optimal } => {
                let table = policy_table(tab, &policy);
                let gap = expected_total_reward(tab, &optimal.policy, &optimal.nu)
                    - expected_total_reward(tab, &table, &optimal.nu);
                min_gap = Some(min_gap.map_or(gap, |m| m.min(gap)));
                sum_delta += step.delta;
                sum_err += 2.0 * step.delta * rec.td_error_sup.unwrap_or(0.0);
                sum_sq += step.delta * step.delta * r_max / (1.0 - gamma);
                rec.gap = Some(gap);
                rec.min_gap = min_gap;
                rec.bound = Some((sum_err + sum_sq + log.initial_kl.unwrap_or(0.0)) / sum_delta);
                rec.min_action_prob = min_prob_tabular(tab, &policy);
            }
            Monitor::Episodes => {
                let returns = if cfg.eval_episodes > 0 {
                    episode_returns(mdp, &policy, cfg.eval_episodes, derive_seed(seed, TAG_EVAL, k as u64))
                        .map_err(|e| fail(e.into(), &log))?
                } else {
                    rollout_returns
                };
                if !returns.is_empty() {
                    let (m, s) = mean_std(&returns);
                    rec.reward_mean = Some(m);
                    rec.reward_std = Some(s);
                }
                rec.min_action_prob = batch
                    .samples
                    .iter()
                    .take(64)
                    .flat_map(|s| crate::mdp::Policy::action_distribution(&policy, &s.omega0.state))
                    .fold(1.0, f64::min);
            }
        }
        rec.wall_time = now().zip(start).map(|(t, s)| t - s);
        log.records.push(rec);
    }
    Ok(NpgRun { log, policy })
}
