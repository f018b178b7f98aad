//! Exact solvers for tabular MDPs: `Q^π`, `π*`, `ν*`, `σ*`, and `ℛ[π]`.
//!
//! Policies are passed as row-major `S × A` tables of probabilities.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::env::TabularMdp;
use crate::evaluation::QFunction;
use crate::kernels::StateAction;
use crate::mdp::Policy;

/// `Q^π` as an `S × A` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactQ {
    table: Vec<f64>,
    n_actions: usize,
    gamma: f64,
}

impl ExactQ {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.n_actions + a]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `max |Q − r − γPΠQ|` for the policy table `pi`.
    pub fn bellman_residual(&self, mdp: &TabularMdp, pi: &[f64]) -> f64 {
        let v = state_values(self, pi);
        let mut worst: f64 = 0.0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let next: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                worst = worst.max((self.get(s, a) - mdp.r(s, a) - self.gamma * next).abs());
            }
        }
        worst
    }
}

impl QFunction for ExactQ {
    fn q_value(&self, omega: &StateAction) -> f64 {
        let a = omega.action.index().expect("tabular Q needs a discrete action");
        self.get(TabularMdp::state_index(&omega.state), a)
    }
}

/// Evaluates `policy` at every state of `mdp`.
pub fn policy_table<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P) -> Vec<f64> {
    (0..mdp.n_states())
        .flat_map(|s| policy.action_distribution(&TabularMdp::observation(s)))
        .collect()
}

pub fn uniform_table(mdp: &TabularMdp) -> Vec<f64> {
    vec![1.0 / mdp.n_actions() as f64; mdp.n_states() * mdp.n_actions()]
}

/// `V^π(s) = Σ_a π(a|s) Q^π(s, a)`.
pub fn state_values(q: &ExactQ, pi: &[f64]) -> Vec<f64> {
    pi.chunks(q.n_actions)
        .enumerate()
        .map(|(s, p)| p.iter().enumerate().map(|(a, w)| w * q.get(s, a)).sum())
        .collect()
}

/// Solves `(I − γP^π)Q = r` over all `S·A` pairs by LU.
pub fn exact_q(mdp: &TabularMdp, pi: &[f64]) -> ExactQ {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let sa = ns * na;
    assert_eq!(pi.len(), sa, "policy table must be S × A");
    let g = mdp.gamma();
    let mut m = DMatrix::identity(sa, sa);
    for s in 0..ns {
        for a in 0..na {
            let row = s * na + a;
            for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for b in 0..na {
                    m[(row, next * na + b)] -= g * p * pi[next * na + b];
                }
            }
        }
    }
    let r = DVector::from_column_slice(mdp.rewards());
    let lu = m.clone().lu();
    let mut q = lu.solve(&r).expect("I − γP^π is nonsingular for γ < 1");
    let resid = &r - &m * &q;
    if let Some(dq) = lu.solve(&resid) {
        q += dq;
    }
    ExactQ {
        table: q.as_slice().to_vec(),
        n_actions: na,
        gamma: g,
    }
}

/// `Q*` by value iteration until the span of successive differences is
/// below `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> ExactQ {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let g = mdp.gamma();
    let mut q = vec![0.0; ns * na];
    loop {
        let v: Vec<f64> = (0..ns)
            .map(|s| q[s * na..(s + 1) * na].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut next = vec![0.0; ns * na];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                let x = mdp.r(s, a) + g * ev;
                let d = x - q[s * na + a];
                lo = lo.min(d);
                hi = hi.max(d);
                next[s * na + a] = x;
            }
        }
        q = next;
        if g == 0.0 || hi - lo <= tol {
            break;
        }
    }
    ExactQ {
        table: q,
        n_actions: na,
        gamma: g,
    }
}

/// `π*`, `Q^{π*}`, `ν*`, and `σ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    /// Deterministic greedy table.
    pub policy: Vec<f64>,
    pub q: ExactQ,
    /// Stationary distribution of `P^{π*}`.
    pub nu: Vec<f64>,
    /// `σ*(s, a) = π*(a|s)ν*(s)`, row-major.
    pub sigma: Vec<f64>,
    /// `ν*` had to be taken as a Cesàro average because plain power
    /// iteration did not settle.
    pub cesaro: bool,
}

/// Value iteration to a `1e−12` span, greedy `π*` (lowest index on ties),
/// then `ν*` by power iteration on `P^{π*}`.
pub fn optimal_policy(mdp: &TabularMdp) -> OptimalSolution {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let qstar = value_iteration(mdp, 1e-12);
    let mut policy = vec![0.0; ns * na];
    for s in 0..ns {
        let row = &qstar.table[s * na..(s + 1) * na];
        let mut best = 0;
        for a in 1..na {
            if row[a] > row[best] + 1e-12 {
                best = a;
            }
        }
        policy[s * na + best] = 1.0;
    }
    let q = exact_q(mdp, &policy);
    let (nu, cesaro) = stationary_distribution(mdp, &policy);
    let sigma = (0..ns * na).map(|i| policy[i] * nu[i / na]).collect();
    OptimalSolution {
        policy,
        q,
        nu,
        sigma,
        cesaro,
    }
}

/// `P^π` as a dense `S × S` matrix.
pub fn state_transition_matrix(mdp: &TabularMdp, pi: &[f64]) -> DMatrix<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut p = DMatrix::zeros(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            let w = pi[s * na + a];
            if w == 0.0 {
                continue;
            }
            for (next, q) in mdp.transition_row(s, a).iter().enumerate() {
                p[(s, next)] += w * q;
            }
        }
    }
    p
}

/// Left principal eigenvector of `P^π` by power iteration from uniform,
/// falling back to the Cesàro average of the iterates when the chain is
/// periodic and the iteration does not converge.
pub fn stationary_distribution(mdp: &TabularMdp, pi: &[f64]) -> (Vec<f64>, bool) {
    let p = state_transition_matrix(mdp, pi);
    let ns = mdp.n_states();
    let pt = p.transpose();
    let mut nu = DVector::from_element(ns, 1.0 / ns as f64);
    let mut avg = DVector::zeros(ns);
    const MAX_ITERS: usize = 200_000;
    for _ in 0..MAX_ITERS {
        let next = &pt * &nu;
        avg += &next;
        let delta = (&next - &nu).abs().sum();
        nu = next;
        if delta <= 1e-14 {
            let total = nu.sum();
            return (nu.iter().map(|x| x / total).collect(), false);
        }
    }
    log::warn!("stationary distribution did not converge; using the Cesàro average");
    let total = avg.sum();
    (avg.iter().map(|x| x / total).collect(), true)
}

/// `ℛ[π] = Σ_s ν(s) Σ_a π(a|s) Q^π(s, a)`.
pub fn expected_total_reward(mdp: &TabularMdp, pi: &[f64], nu: &[f64]) -> f64 {
    let q = exact_q(mdp, pi);
    state_values(&q, pi).iter().zip(nu).map(|(v, w)| v * w).sum()
}

/// Both sides of the performance-difference identity
/// `ℛ[π*] − ℛ[π] = (1−γ)⁻¹ Σ_s ν*(s) ⟨Q^π(s,·), π*(·|s) − π(·|s)⟩`,
/// which holds because `ν*` is stationary under `π*`.
pub fn performance_difference(mdp: &TabularMdp, pi: &[f64], opt: &OptimalSolution) -> (f64, f64) {
    let na = mdp.n_actions();
    let gap = expected_total_reward(mdp, &opt.policy, &opt.nu) - expected_total_reward(mdp, pi, &opt.nu);
    let q = exact_q(mdp, pi);
    let mut rhs = 0.0;
    for (s, w) in opt.nu.iter().enumerate() {
        for a in 0..na {
            rhs += w * q.get(s, a) * (opt.policy[s * na + a] - pi[s * na + a]);
        }
    }
    (gap, rhs / (1.0 - mdp.gamma()))
}

/// `E_{ν*} KL(π*(·|s) ‖ π(·|s))`.
pub fn expected_kl(pi_star: &[f64], pi: &[f64], nu: &[f64], n_actions: usize) -> f64 {
    let mut total = 0.0;
    for (s, w) in nu.iter().enumerate() {
        for a in 0..n_actions {
            let p = pi_star[s * n_actions + a];
            if p > 0.0 {
                total += w * p * (p / pi[s * n_actions + a]).ln();
            }
        }
    }
    total
}
