//! CartPole and Acrobot with the standard classic-control dynamics.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::mdp::{ActionSpace, MdpModel, SampleError, SimRng, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhysicsKind {
    CartPole,
    Acrobot,
}

impl FromStr for PhysicsKind {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cartpole" => Ok(Self::CartPole),
            "acrobot" => Ok(Self::Acrobot),
            other => Err(alloc::format!("unknown physics environment '{other}'")),
        }
    }
}

impl fmt::Display for PhysicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CartPole => "cartpole",
            Self::Acrobot => "acrobot",
        })
    }
}

fn uniform_box(rng: &mut SimRng, half_widths: &[f64; 4]) -> [f64; 4] {
    let mut s = [0.0; 4];
    for (x, w) in s.iter_mut().zip(half_widths) {
        *x = w * (2.0 * rng.random::<f64>() - 1.0);
    }
    s
}

fn non_finite(s: &[f64; 4]) -> Result<(), SampleError> {
    if s.iter().any(|x| !x.is_finite()) {
        return Err(SampleError::Physics { state: s.to_vec() });
    }
    Ok(())
}

/// Cart-pole balancing. State `[x, ẋ, θ, θ̇]`; action 0 pushes left, 1 right.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPole {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub x_threshold: f64,
    /// Radians.
    pub theta_threshold: f64,
    pub max_steps: usize,
    pub gamma: f64,
    /// Probability that a sampling reset is drawn from `explore_box` instead.
    pub explore_prob: f64,
    pub explore_box: [f64; 4],
    pub normalizer: [f64; 4],
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * PI / 360.0,
            max_steps: 500,
            gamma: 0.99,
            explore_prob: 0.3,
            explore_box: [2.0, 2.0, 0.18, 2.0],
            normalizer: [2.4, 3.0, 0.21, 3.0],
        }
    }
}

impl CartPole {
    /// One semi-implicit Euler step: velocities first, then positions with
    /// the updated velocities.
    pub fn step_raw(&self, s: &[f64; 4], action: usize) -> Result<([f64; 4], f64, bool), SampleError> {
        let [x, x_dot, theta, theta_dot] = *s;
        let force = if action == 1 { self.force } else { -self.force };
        let total_mass = self.mass_cart + self.mass_pole;
        let pm_len = self.mass_pole * self.half_length;
        let (sin, cos) = (theta.sin(), theta.cos());
        let temp = (force + pm_len * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.mass_pole * cos * cos / total_mass));
        let x_acc = temp - pm_len * theta_acc * cos / total_mass;
        let x_dot = x_dot + self.tau * x_acc;
        let x = x + self.tau * x_dot;
        let theta_dot = theta_dot + self.tau * theta_acc;
        let theta = theta + self.tau * theta_dot;
        let next = [x, x_dot, theta, theta_dot];
        non_finite(&next)?;
        let done = x.abs() > self.x_threshold || theta.abs() > self.theta_threshold;
        Ok((next, 1.0, done))
    }
}

impl MdpModel for CartPole {
    type State = [f64; 4];

    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn sample_initial(&self, rng: &mut SimRng) -> [f64; 4] {
        if rng.random::<f64>() < self.explore_prob {
            uniform_box(rng, &self.explore_box)
        } else {
            self.sample_reset(rng)
        }
    }

    fn sample_reset(&self, rng: &mut SimRng) -> [f64; 4] {
        uniform_box(rng, &[0.05; 4])
    }

    fn step(&self, state: &[f64; 4], action: usize, _: &mut SimRng) -> Result<Step<[f64; 4]>, SampleError> {
        let (next, reward, terminal) = self.step_raw(state, action)?;
        Ok(Step { next, reward, terminal })
    }

    fn observe(&self, s: &[f64; 4]) -> Vec<f64> {
        s.iter().zip(&self.normalizer).map(|(x, n)| x / n).collect()
    }

    fn max_episode_steps(&self) -> Option<usize> {
        Some(self.max_steps)
    }
}

/// Two-link underactuated swing-up. State `[θ₁, θ₂, θ̇₁, θ̇₂]`; actions
/// 0, 1, 2 apply torque −1, 0, +1 at the elbow. Reward −1 per step until
/// the tip rises one link length above the pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct Acrobot {
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub gravity: f64,
    pub dt: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub max_steps: usize,
    pub gamma: f64,
    pub explore_prob: f64,
    pub explore_box: [f64; 4],
    pub normalizer: [f64; 6],
}

impl Default for Acrobot {
    fn default() -> Self {
        Self {
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            gravity: 9.8,
            dt: 0.2,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            max_steps: 500,
            gamma: 0.99,
            explore_prob: 0.3,
            explore_box: [PI, PI, 2.0 * PI, 4.0 * PI],
            normalizer: [1.0, 1.0, 1.0, 1.0, 4.0 * PI, 9.0 * PI],
        }
    }
}

impl Acrobot {
    fn derivs(&self, s: &[f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let l1 = self.link_length_1;
        let (lc1, lc2) = (self.link_com_1, self.link_com_2);
        let (i1, i2) = (self.link_moi, self.link_moi);
        let g = self.gravity;
        let [theta1, theta2, dtheta1, dtheta2] = *s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
            + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
            + phi2;
        let ddtheta2 = (torque + d2 / d1 * phi1
            - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin()
            - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
        [dtheta1, dtheta2, ddtheta1, ddtheta2]
    }

    /// One classical RK4 step of length `dt`, then angle wrapping and
    /// velocity clamping.
    pub fn step_raw(&self, s: &[f64; 4], action: usize) -> Result<([f64; 4], f64, bool), SampleError> {
        let torque = action as f64 - 1.0;
        let h = self.dt;
        let add = |a: &[f64; 4], k: &[f64; 4], c: f64| {
            let mut out = *a;
            for (o, d) in out.iter_mut().zip(k) {
                *o += c * d;
            }
            out
        };
        let k1 = self.derivs(s, torque);
        let k2 = self.derivs(&add(s, &k1, h / 2.0), torque);
        let k3 = self.derivs(&add(s, &k2, h / 2.0), torque);
        let k4 = self.derivs(&add(s, &k3, h), torque);
        let mut next = *s;
        for i in 0..4 {
            next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        non_finite(&next)?;
        next[0] = wrap(next[0]);
        next[1] = wrap(next[1]);
        next[2] = next[2].clamp(-self.max_vel_1, self.max_vel_1);
        next[3] = next[3].clamp(-self.max_vel_2, self.max_vel_2);
        let done = -next[0].cos() - (next[1] + next[0]).cos() > 1.0;
        Ok((next, if done { 0.0 } else { -1.0 }, done))
    }
}

fn wrap(x: f64) -> f64 {
    let t = (x + PI).rem_euclid(2.0 * PI);
    t - PI
}

impl MdpModel for Acrobot {
    type State = [f64; 4];

    fn observation_dim(&self) -> usize {
        6
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(3)
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn sample_initial(&self, rng: &mut SimRng) -> [f64; 4] {
        if rng.random::<f64>() < self.explore_prob {
            uniform_box(rng, &self.explore_box)
        } else {
            self.sample_reset(rng)
        }
    }

    fn sample_reset(&self, rng: &mut SimRng) -> [f64; 4] {
        uniform_box(rng, &[0.1; 4])
    }

    fn step(&self, state: &[f64; 4], action: usize, _: &mut SimRng) -> Result<Step<[f64; 4]>, SampleError> {
        let (next, reward, terminal) = self.step_raw(state, action)?;
        Ok(Step { next, reward, terminal })
    }

    fn observe(&self, s: &[f64; 4]) -> Vec<f64> {
        let raw = [s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin(), s[2], s[3]];
        raw.iter().zip(&self.normalizer).map(|(x, n)| x / n).collect()
    }

    fn max_episode_steps(&self) -> Option<usize> {
        Some(self.max_steps)
    }
}

/// Either physics environment behind one type, for config-driven selection.
#[derive(Debug, Clone, PartialEq)]
pub enum PhysicsEnv {
    CartPole(CartPole),
    Acrobot(Acrobot),
}

impl PhysicsEnv {
    pub fn new(kind: PhysicsKind) -> Self {
        match kind {
            PhysicsKind::CartPole => Self::CartPole(CartPole::default()),
            PhysicsKind::Acrobot => Self::Acrobot(Acrobot::default()),
        }
    }

    pub fn kind(&self) -> PhysicsKind {
        match self {
            Self::CartPole(_) => PhysicsKind::CartPole,
            Self::Acrobot(_) => PhysicsKind::Acrobot,
        }
    }

    /// `(s′, reward, done)` for one control step.
    pub fn step_physics(&self, s: &[f64; 4], action: usize) -> Result<([f64; 4], f64, bool), SampleError> {
        match self {
            Self::CartPole(e) => e.step_raw(s, action),
            Self::Acrobot(e) => e.step_raw(s, action),
        }
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        match self {
            Self::CartPole(e) => e.gamma = gamma,
            Self::Acrobot(e) => e.gamma = gamma,
        }
    }

    pub fn set_explore_prob(&mut self, p: f64) {
        match self {
            Self::CartPole(e) => e.explore_prob = p,
            Self::Acrobot(e) => e.explore_prob = p,
        }
    }

    pub fn set_max_steps(&mut self, steps: usize) {
        match self {
            Self::CartPole(e) => e.max_steps = steps,
            Self::Acrobot(e) => e.max_steps = steps,
        }
    }
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            PhysicsEnv::CartPole($e) => $body,
            PhysicsEnv::Acrobot($e) => $body,
        }
    };
}

impl MdpModel for PhysicsEnv {
    type State = [f64; 4];

    fn observation_dim(&self) -> usize {
        delegate!(self, e => e.observation_dim())
    }

    fn action_space(&self) -> ActionSpace {
        delegate!(self, e => e.action_space())
    }

    fn discount(&self) -> f64 {
        delegate!(self, e => e.discount())
    }

    fn reward_bound(&self) -> f64 {
        delegate!(self, e => e.reward_bound())
    }

    fn sample_initial(&self, rng: &mut SimRng) -> [f64; 4] {
        delegate!(self, e => e.sample_initial(rng))
    }

    fn sample_reset(&self, rng: &mut SimRng) -> [f64; 4] {
        delegate!(self, e => e.sample_reset(rng))
    }

    fn step(&self, state: &[f64; 4], action: usize, rng: &mut SimRng) -> Result<Step<[f64; 4]>, SampleError> {
        delegate!(self, e => e.step(state, action, rng))
    }

    fn observe(&self, s: &[f64; 4]) -> Vec<f64> {
        delegate!(self, e => e.observe(s))
    }

    fn max_episode_steps(&self) -> Option<usize> {
        delegate!(self, e => e.max_episode_steps())
    }
}
