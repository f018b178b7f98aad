use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::mdp::{sample_categorical, ActionSpace, MdpModel, SampleError, SimRng, Step};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TabularError {
    #[error("state and action counts must be at least 1")]
    EmptySpace,
    #[error("discount must lie in [0, 1), got {0}")]
    Discount(f64),
    #[error("sparsity must lie in [0, 1), got {0}")]
    Sparsity(f64),
    #[error("row P[{state}, {action}, ·] is not a probability vector (sum {sum})")]
    Row { state: usize, action: usize, sum: f64 },
    #[error("initial distribution is not a probability vector (sum {0})")]
    Initial(f64),
    #[error("table has length {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
}

/// Finite MDP with dense tables.
///
/// States are observed as the one-dimensional vector `[s as f64]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `P[(s·A + a)·S + s']`.
    transitions: Vec<f64>,
    /// `r[s·A + a]`.
    rewards: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self, TabularError> {
        if n_states == 0 || n_actions == 0 {
            return Err(TabularError::EmptySpace);
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(TabularError::Discount(gamma));
        }
        let sa = n_states * n_actions;
        if transitions.len() != sa * n_states {
            return Err(TabularError::Shape {
                got: transitions.len(),
                expected: sa * n_states,
            });
        }
        if rewards.len() != sa {
            return Err(TabularError::Shape {
                got: rewards.len(),
                expected: sa,
            });
        }
        if initial.len() != n_states {
            return Err(TabularError::Shape {
                got: initial.len(),
                expected: n_states,
            });
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transitions[(s * n_actions + a) * n_states..][..n_states];
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                    return Err(TabularError::Row { state: s, action: a, sum });
                }
            }
        }
        let total: f64 = initial.iter().sum();
        if initial.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(TabularError::Initial(total));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            initial,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, TabularError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(TabularError::Discount(gamma));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Recovers the state index from an observation `[s as f64]`.
    pub fn state_index(obs: &[f64]) -> usize {
        obs[0] as usize
    }

    pub fn observation(s: usize) -> Vec<f64> {
        vec![s as f64]
    }
}

impl MdpModel for TabularMdp {
    type State = usize;

    fn observation_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.n_actions)
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    fn sample_initial(&self, rng: &mut SimRng) -> usize {
        sample_categorical(&self.initial, rng)
    }

    fn step(&self, state: &usize, action: usize, rng: &mut SimRng) -> Result<Step<usize>, SampleError> {
        let next = sample_categorical(self.transition_row(*state, action), rng);
        Ok(Step {
            next,
            reward: self.r(*state, action),
            terminal: false,
        })
    }

    fn observe(&self, state: &usize) -> Vec<f64> {
        Self::observation(*state)
    }
}

/// Random MDP with Dirichlet(1) transition rows, uniform `[0, 1]` rewards,
/// and uniform `μ₀`.
///
/// With `sparsity > 0` each transition entry is dropped with that
/// probability (keeping at least the largest entry of the row) and the row
/// renormalized.
pub fn make_random_tabular(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    sparsity: f64,
    seed: u64,
) -> Result<TabularMdp, TabularError> {
    if n_states == 0 || n_actions == 0 {
        return Err(TabularError::EmptySpace);
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(TabularError::Sparsity(sparsity));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma_dist = Gamma::new(1.0, 1.0).expect("unit gamma");
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states).map(|_| gamma_dist.sample(&mut rng)).collect();
        if sparsity > 0.0 {
            let keep = row
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            for (i, v) in row.iter_mut().enumerate() {
                if i != keep && rng.random::<f64>() < sparsity {
                    *v = 0.0;
                }
            }
        }
        normalize(&mut row);
        transitions.extend(row);
    }
    let rewards = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let initial = vec![1.0 / n_states as f64; n_states];
    TabularMdp::new(n_states, n_actions, transitions, rewards, gamma, initial)
}

/// Gridworld with four moves (up, right, down, left) and slip probability
/// `slip` of moving in a uniformly random direction instead.
///
/// Acting in the goal cell (top-right) pays 1 and restarts uniformly, which
/// keeps every policy's chain irreducible.
pub fn make_gridworld(width: usize, height: usize, slip: f64, gamma: f64) -> Result<TabularMdp, TabularError> {
    if width == 0 || height == 0 {
        return Err(TabularError::EmptySpace);
    }
    let n = width * height;
    let goal = width - 1;
    let moves: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let target = |s: usize, m: usize| -> usize {
        let (x, y) = ((s % width) as i64, (s / width) as i64);
        let (dx, dy) = moves[m];
        let nx = (x + dx).clamp(0, width as i64 - 1);
        let ny = (y + dy).clamp(0, height as i64 - 1);
        ny as usize * width + nx as usize
    };
    let mut transitions = vec![0.0; n * 4 * n];
    let mut rewards = vec![0.0; n * 4];
    for s in 0..n {
        for a in 0..4 {
            let row = &mut transitions[(s * 4 + a) * n..][..n];
            if s == goal {
                row.iter_mut().for_each(|p| *p = 1.0 / n as f64);
                rewards[s * 4 + a] = 1.0;
                continue;
            }
            row[target(s, a)] += 1.0 - slip;
            for m in 0..4 {
                row[target(s, m)] += slip / 4.0;
            }
        }
    }
    let initial = vec![1.0 / n as f64; n];
    TabularMdp::new(n, 4, transitions, rewards, gamma, initial)
}

fn normalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
    // Push the rounding residue onto the largest entry so the row sums to 1
    // as closely as floating point allows.
    let residue = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
}
