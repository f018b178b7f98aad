use alloc::vec;
#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::Rng;

use crate::mdp::{ActionSpace, MdpModel, Policy, SampleError, SimRng, Step};

/// Two-action MDP on the circle `s ∈ [0, 1)` whose transition density
/// `p(s'|s,a) = 1 + ε φ(s,a) cos(2πs')` and reward are trigonometric, so
/// every `Q^π` is smooth and has a closed form up to two scalar integrals.
///
/// `φ(s,0) = cos 2πs`, `φ(s,1) = sin 2πs`, `r(s,0) = ½ + 0.4 cos 2πs`,
/// `r(s,1) = ½ + 0.4 sin 2πs`. `μ₀` is uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothCosineMdp {
    gamma: f64,
    epsilon: f64,
}

impl SmoothCosineMdp {
    /// Panics unless `γ ∈ [0, 1)` and `ε ∈ [0, 1)`.
    pub fn new(gamma: f64, epsilon: f64) -> Self {
        assert!((0.0..1.0).contains(&gamma), "discount must lie in [0, 1)");
        assert!((0.0..1.0).contains(&epsilon), "epsilon must lie in [0, 1)");
        Self { gamma, epsilon }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn phi(s: f64, a: usize) -> f64 {
        if a == 0 {
            (TAU * s).cos()
        } else {
            (TAU * s).sin()
        }
    }

    pub fn r(s: f64, a: usize) -> f64 {
        0.5 + 0.4 * Self::phi(s, a)
    }

    /// Exact `Q^π`, with the two integrals of `V^π` against `1` and
    /// `cos 2πs` computed by composite Simpson on `intervals` panels.
    ///
    /// `V(s) = r_π(s) + γ(c₀ + ε φ_π(s) c₁)` closes into
    /// `c₁ = R₁ / (1 − γεΦ₁)` and `c₀ = (R₀ + γεΦ₀c₁) / (1 − γ)` where
    /// `R_j, Φ_j` integrate `r_π, φ_π` against `1` and `cos 2πs`.
    pub fn exact_q<P: Policy + ?Sized>(&self, policy: &P, intervals: usize) -> SmoothQ {
        let m = intervals.max(2) & !1;
        let h = 1.0 / m as f64;
        let (mut r0, mut r1, mut f0, mut f1) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..=m {
            let s = i as f64 * h;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let pi = policy.action_distribution(&[s]);
            let rp = pi[0] * Self::r(s, 0) + pi[1] * Self::r(s, 1);
            let fp = pi[0] * Self::phi(s, 0) + pi[1] * Self::phi(s, 1);
            let c = (TAU * s).cos();
            r0 += w * rp;
            r1 += w * rp * c;
            f0 += w * fp;
            f1 += w * fp * c;
        }
        let scale = h / 3.0;
        let (r0, r1, f0, f1) = (r0 * scale, r1 * scale, f0 * scale, f1 * scale);
        let g = self.gamma;
        let e = self.epsilon;
        let c1 = r1 / (1.0 - g * e * f1);
        let c0 = (r0 + g * e * f0 * c1) / (1.0 - g);
        SmoothQ {
            gamma: g,
            epsilon: e,
            c0,
            c1,
        }
    }
}

/// Closed-form `Q^π` of a [`SmoothCosineMdp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothQ {
    gamma: f64,
    epsilon: f64,
    /// `∫ V^π`.
    pub c0: f64,
    /// `∫ cos(2πs) V^π(s) ds`.
    pub c1: f64,
}

impl SmoothQ {
    pub fn eval(&self, s: f64, a: usize) -> f64 {
        SmoothCosineMdp::r(s, a)
            + self.gamma * (self.c0 + self.epsilon * SmoothCosineMdp::phi(s, a) * self.c1)
    }
}

impl MdpModel for SmoothCosineMdp {
    type State = f64;

    fn observation_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        0.9
    }

    fn sample_initial(&self, rng: &mut SimRng) -> f64 {
        rng.random()
    }

    fn step(&self, state: &f64, action: usize, rng: &mut SimRng) -> Result<Step<f64>, SampleError> {
        let amp = self.epsilon * Self::phi(*state, action);
        let bound = 1.0 + amp.abs();
        let next = loop {
            let x: f64 = rng.random();
            let u: f64 = rng.random();
            if u * bound < 1.0 + amp * (TAU * x).cos() {
                break x;
            }
        };
        Ok(Step {
            next,
            reward: Self::r(*state, action),
            terminal: false,
        })
    }

    fn observe(&self, state: &f64) -> Vec<f64> {
        vec![*state]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::stream_rng;
    use alloc::string::String;

    struct Fixed(f64);

    impl Policy for Fixed {
        fn num_actions(&self) -> usize {
            2
        }
        fn action_distribution(&self, _: &[f64]) -> Vec<f64> {
            vec![self.0, 1.0 - self.0]
        }
        fn policy_id(&self) -> String {
            String::from("fixed")
        }
    }

    #[test]
    fn exact_q_satisfies_bellman_equation() {
        let mdp = SmoothCosineMdp::new(0.8, 0.6);
        let pol = Fixed(0.3);
        let q = mdp.exact_q(&pol, 2048);
        // Check Q(s,a) = r + γ ∫ p(s'|s,a) V(s') ds' by an independent midpoint rule.
        let v = |s: f64| 0.3 * q.eval(s, 0) + 0.7 * q.eval(s, 1);
        for &(s, a) in &[(0.1, 0usize), (0.45, 1), (0.9, 0)] {
            let m = 20000;
            let mut acc = 0.0;
            for i in 0..m {
                let x = (i as f64 + 0.5) / m as f64;
                acc += (1.0 + 0.6 * SmoothCosineMdp::phi(s, a) * (TAU * x).cos()) * v(x);
            }
            let rhs = SmoothCosineMdp::r(s, a) + 0.8 * acc / m as f64;
            assert!((q.eval(s, a) - rhs).abs() < 1e-9, "{} vs {}", q.eval(s, a), rhs);
        }
    }

    #[test]
    fn transition_density_matches_first_moment() {
        // E[cos 2πs'] = ε φ(s,a) / 2 under the cosine density.
        let mdp = SmoothCosineMdp::new(0.5, 0.8);
        let mut rng = stream_rng(4, 0);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += (TAU * mdp.step(&0.0, 0, &mut rng).unwrap().next).cos();
        }
        let mean = acc / n as f64;
        assert!((mean - 0.4).abs() < 4.0 * (0.5f64 / n as f64).sqrt());
    }
}
