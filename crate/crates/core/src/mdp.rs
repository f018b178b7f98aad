//! MDP abstraction, policies, and the one-step quadruplet sampler.
//!
//! A batch is `n` independent draws of
//! `s₀ ~ μ₀, a₀ ~ π(·|s₀), s₁ ~ P(·|s₀,a₀), a₁ ~ π(·|s₁)` with the reward
//! recorded at `(s₀, a₀)`. Draw `i` uses ChaCha stream `i` of the batch seed,
//! so a batch is identical however the draws are scheduled.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernels::StateAction;

/// Random source handed to environments.
pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    pub fn discrete_count(&self) -> Option<usize> {
        match self {
            ActionSpace::Discrete(a) => Some(*a),
            ActionSpace::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("policy has {policy} actions but the MDP has {mdp}")]
    ActionSpaceMismatch { policy: usize, mdp: usize },
    #[error("policy sampling is only implemented for discrete action sets")]
    ContinuousActions,
    #[error("reward {reward} exceeds the declared bound {bound}")]
    RewardBound { reward: f64, bound: f64 },
    #[error("environment produced a non-finite state {state:?}")]
    Physics { state: Vec<f64> },
    #[error("policy produced an invalid distribution at state {state:?}")]
    InvalidDistribution { state: Vec<f64> },
}

/// Outcome of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub next: S,
    pub reward: f64,
    /// The next state is absorbing with zero value (no bootstrap through it).
    pub terminal: bool,
}

/// `(S, A, P, r, γ, μ₀)` with a sampling interface.
///
/// `State` is the environment's internal representation; [`observe`]
/// maps it to the feature vector that kernels and policies see.
///
/// [`observe`]: MdpModel::observe
pub trait MdpModel {
    type State: Clone;

    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn discount(&self) -> f64;
    /// Bound on `|r(s, a)|`.
    fn reward_bound(&self) -> f64;
    /// Draw from the sampling distribution `μ₀` used to build batches.
    fn sample_initial(&self, rng: &mut SimRng) -> Self::State;
    /// Draw from the environment's own reset distribution, used for
    /// evaluation episodes. Defaults to `μ₀`.
    fn sample_reset(&self, rng: &mut SimRng) -> Self::State {
        self.sample_initial(rng)
    }
    fn step(&self, state: &Self::State, action: usize, rng: &mut SimRng)
        -> Result<Step<Self::State>, SampleError>;
    fn observe(&self, state: &Self::State) -> Vec<f64>;
    /// Step cap for episodic rollouts.
    fn max_episode_steps(&self) -> Option<usize> {
        None
    }
}

/// Action distributions over a finite action set.
pub trait Policy {
    fn num_actions(&self) -> usize;
    fn action_distribution(&self, state: &[f64]) -> Vec<f64>;
    fn policy_id(&self) -> String;
}

/// One quadruplet `(ω₀, r(ω₀), ω₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub omega0: StateAction,
    pub reward: f64,
    pub omega1: StateAction,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<TransitionSample>,
    pub seed: u64,
    pub policy_id: String,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn anchors(&self) -> Vec<StateAction> {
        self.samples.iter().map(|s| s.omega0.clone()).collect()
    }

    pub fn next_points(&self) -> Vec<StateAction> {
        self.samples.iter().map(|s| s.omega1.clone()).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.reward).collect()
    }
}

/// Draws an index from `probs` with one uniform variate.
pub fn sample_categorical(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just below 1; take the last action with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn checked_action<P: Policy + ?Sized>(
    policy: &P,
    obs: &[f64],
    rng: &mut SimRng,
) -> Result<usize, SampleError> {
    let probs = policy.action_distribution(obs);
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(SampleError::InvalidDistribution { state: obs.into() });
    }
    Ok(sample_categorical(&probs, rng))
}

fn check_spaces<M: MdpModel, P: Policy + ?Sized>(mdp: &M, policy: &P) -> Result<(), SampleError> {
    match mdp.action_space() {
        ActionSpace::Continuous(_) => Err(SampleError::ContinuousActions),
        ActionSpace::Discrete(a) if a != policy.num_actions() => {
            Err(SampleError::ActionSpaceMismatch {
                policy: policy.num_actions(),
                mdp: a,
            })
        }
        ActionSpace::Discrete(_) => Ok(()),
    }
}

fn checked_observation<M: MdpModel>(mdp: &M, s: &M::State) -> Result<Vec<f64>, SampleError> {
    let obs = mdp.observe(s);
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(SampleError::Physics { state: obs });
    }
    Ok(obs)
}

fn check_reward<M: MdpModel>(mdp: &M, reward: f64) -> Result<(), SampleError> {
    if !(reward.abs() <= mdp.reward_bound()) {
        return Err(SampleError::RewardBound {
            reward,
            bound: mdp.reward_bound(),
        });
    }
    Ok(())
}

/// Draws one quadruplet from stream `index` of `seed`.
pub fn sample_transition<M: MdpModel, P: Policy + ?Sized>(
    mdp: &M,
    policy: &P,
    seed: u64,
    index: u64,
) -> Result<TransitionSample, SampleError> {
    let mut rng = stream_rng(seed, index);
    let s0 = mdp.sample_initial(&mut rng);
    let obs0 = checked_observation(mdp, &s0)?;
    let a0 = checked_action(policy, &obs0, &mut rng)?;
    let step = mdp.step(&s0, a0, &mut rng)?;
    check_reward(mdp, step.reward)?;
    let obs1 = checked_observation(mdp, &step.next)?;
    let a1 = checked_action(policy, &obs1, &mut rng)?;
    Ok(TransitionSample {
        omega0: StateAction::new(obs0, a0),
        reward: step.reward,
        omega1: StateAction::new(obs1, a1),
        terminal: step.terminal,
    })
}

/// `n` i.i.d. quadruplets under `policy`; deterministic in `seed`.
pub fn sample_batch<M: MdpModel, P: Policy + ?Sized>(
    mdp: &M,
    policy: &P,
    n: usize,
    seed: u64,
) -> Result<SampleBatch, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptyBatch);
    }
    check_spaces(mdp, policy)?;
    let samples = (0..n as u64)
        .map(|i| sample_transition(mdp, policy, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SampleBatch {
        samples,
        seed,
        policy_id: policy.policy_id(),
    })
}

/// Batch built from whole episodes plus the undiscounted episode returns.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub batch: SampleBatch,
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
}

/// Runs episodes from `μ₀` under `policy` until `n` quadruplets are collected.
///
/// Consecutive steps `(sₜ, aₜ, rₜ, sₜ₊₁, aₜ₊₁)` become samples; no sample
/// spans two episodes. Episode `e` uses stream `e` of `seed`. Returns only
/// count episodes that ran to completion before the budget was filled.
pub fn collect_rollouts<M: MdpModel, P: Policy + ?Sized>(
    mdp: &M,
    policy: &P,
    n: usize,
    seed: u64,
) -> Result<RolloutBatch, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptyBatch);
    }
    check_spaces(mdp, policy)?;
    let cap = mdp.max_episode_steps().unwrap_or(usize::MAX);
    let mut samples = Vec::with_capacity(n);
    let mut returns = Vec::new();
    let mut lengths = Vec::new();
    let mut episode = 0u64;
    while samples.len() < n {
        let mut rng = stream_rng(seed, episode);
        episode += 1;
        let mut s = mdp.sample_initial(&mut rng);
        let mut obs = checked_observation(mdp, &s)?;
        let mut a = checked_action(policy, &obs, &mut rng)?;
        let mut total = 0.0;
        let mut t = 0;
        let finished = loop {
            let step = mdp.step(&s, a, &mut rng)?;
            check_reward(mdp, step.reward)?;
            let next_obs = checked_observation(mdp, &step.next)?;
            let next_a = checked_action(policy, &next_obs, &mut rng)?;
            total += step.reward;
            t += 1;
            samples.push(TransitionSample {
                omega0: StateAction::new(obs, a),
                reward: step.reward,
                omega1: StateAction::new(next_obs.clone(), next_a),
                terminal: step.terminal,
            });
            if step.terminal || t >= cap {
                break true;
            }
            if samples.len() >= n {
                break false;
            }
            s = step.next;
            obs = next_obs;
            a = next_a;
        };
        if finished {
            returns.push(total);
            lengths.push(t);
        }
    }
    samples.truncate(n);
    Ok(RolloutBatch {
        batch: SampleBatch {
            samples,
            seed,
            policy_id: policy.policy_id(),
        },
        episode_returns: returns,
        episode_lengths: lengths,
    })
}

/// Undiscounted return of one episode from the reset distribution, capped at the MDP's step
/// limit (or `fallback_cap` when it has none).
pub fn run_episode<M: MdpModel, P: Policy + ?Sized>(
    mdp: &M,
    policy: &P,
    seed: u64,
    stream: u64,
    fallback_cap: usize,
) -> Result<(f64, usize), SampleError> {
    check_spaces(mdp, policy)?;
    let cap = mdp.max_episode_steps().unwrap_or(fallback_cap);
    let mut rng = stream_rng(seed, stream);
    let mut s = mdp.sample_reset(&mut rng);
    let mut total = 0.0;
    for t in 0..cap {
        let obs = checked_observation(mdp, &s)?;
        let a = checked_action(policy, &obs, &mut rng)?;
        let step = mdp.step(&s, a, &mut rng)?;
        total += step.reward;
        if step.terminal {
            return Ok((total, t + 1));
        }
        s = step.next;
    }
    Ok((total, cap))
}
