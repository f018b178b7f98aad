//! Outer-loop schedules for step size `Δ_k`, sample count `n⁽ᵏ⁾`, and
//! regularization `λ⁽ᵏ⁾`, one growth rule per kernel regime.
//!
//! The rules carry unspecified `O(1)` constants; `n_base` and `lambda_base`
//! expose them. `‖π^k‖_H` is replaced by a caller-supplied proxy.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::policy::NormProxyMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("outer index k must be at least 1")]
    ZeroIndex,
    #[error("norm proxy must be positive and finite, got {0}")]
    Proxy(f64),
    #[error("invalid schedule configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Tabular,
    Sobolev,
    Ntk,
    Gaussian,
}

impl FromStr for Regime {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tabular" => Ok(Self::Tabular),
            "sobolev" => Ok(Self::Sobolev),
            "ntk" => Ok(Self::Ntk),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(ScheduleError::Config(format!("unknown regime '{other}'"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tabular => "tabular",
            Self::Sobolev => "sobolev",
            Self::Ntk => "ntk",
            Self::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub regime: Regime,
    /// `a` in `Δ_k = k^{−a}`.
    pub step_exponent: f64,
    /// The factor `1 − cγ`.
    pub one_minus_cgamma: f64,
    /// Sobolev smoothness `m`.
    pub smoothness: f64,
    /// Intrinsic dimension `d` (Sobolev and NTK).
    pub dimension: f64,
    /// Tabular exponent `ν` in `(√k‖π‖)^{4/(1+ν)}`.
    pub nu: f64,
    /// Gaussian `ε ∈ (0, 1)`.
    pub epsilon: f64,
    pub n_base: f64,
    pub lambda_base: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub norm_proxy_mode: NormProxyMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Tabular,
            step_exponent: 0.5,
            one_minus_cgamma: 0.1,
            smoothness: 2.0,
            dimension: 1.0,
            nu: 1.0,
            epsilon: 0.5,
            n_base: 1.0,
            lambda_base: 1.0,
            n_min: 100,
            n_max: 4000,
            norm_proxy_mode: NormProxyMode::CoefficientNorm,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: &str| Err(ScheduleError::Config(String::from(m)));
        if !(self.step_exponent >= 0.0) {
            return bad("step exponent must be ≥ 0");
        }
        if !(self.one_minus_cgamma > 0.0 && self.one_minus_cgamma <= 1.0) {
            return bad("1 − cγ must lie in (0, 1]");
        }
        if !(self.n_base > 0.0 && self.lambda_base > 0.0) {
            return bad("n_base and lambda_base must be positive");
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return bad("need 1 ≤ n_min ≤ n_max");
        }
        match self.regime {
            Regime::Sobolev if !(2.0 * self.smoothness > self.dimension && self.dimension > 0.0) => {
                bad("Sobolev rules need 2m > d > 0")
            }
            Regime::Ntk if !(self.dimension > 0.0) => bad("NTK rules need d > 0"),
            Regime::Gaussian if !(self.epsilon > 0.0 && self.epsilon < 1.0) => bad("Gaussian rules need ε ∈ (0, 1)"),
            Regime::Tabular if !(self.nu > -1.0) => bad("tabular rules need ν > −1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleStep {
    pub delta: f64,
    pub n: usize,
    pub lambda: f64,
}

/// `(Δ_k, n⁽ᵏ⁾, λ⁽ᵏ⁾)` for outer iteration `k ≥ 1`.
///
/// Logarithmic factors use `ln(1 + x)` so the sample rule stays positive
/// when `x < 1`.
pub fn schedule(cfg: &ScheduleConfig, k: usize, norm_proxy: f64) -> Result<ScheduleStep, ScheduleError> {
    if k == 0 {
        return Err(ScheduleError::ZeroIndex);
    }
    if !(norm_proxy > 0.0 && norm_proxy.is_finite()) {
        return Err(ScheduleError::Proxy(norm_proxy));
    }
    cfg.validate()?;
    let kf = k as f64;
    let p = norm_proxy;
    let c = cfg.one_minus_cgamma;
    let delta = kf.powf(-cfg.step_exponent);
    let (n_raw, lambda) = match cfg.regime {
        Regime::Tabular => {
            let n = p * p * kf / (c * c) * (1.0 + p * kf / c).ln()
                + (kf.sqrt() * p).powf(4.0 / (1.0 + cfg.nu));
            (n, c / (p * kf.sqrt()))
        }
        Regime::Sobolev => {
            let (m, d) = (cfg.smoothness, cfg.dimension);
            let e = 2.0 * m - d;
            let n = p.powf(2.0 * (2.0 * m + d) / e) * kf.powf((2.0 * m + d) / e) / c.powf((2.0 * m + d / 2.0) / m);
            (n, c / (p.powf(2.0 * m / e) * kf.powf(m / e)))
        }
        Regime::Ntk => {
            let d = cfg.dimension;
            let n = p.powf(2.0 * d) * kf.powf(d) / c.powf((3.0 * d + 1.0) / (d + 1.0));
            (n, c / (p.powf((d + 1.0) / 2.0) * kf.powf((d + 1.0) / 4.0)))
        }
        Regime::Gaussian => {
            let q = 1.0 / (1.0 - cfg.epsilon);
            let n = p.powf(2.0 * q) * kf.powf(q) / (c * c) * (1.0 + p * kf / c).ln();
            (n, c / (p.powf(q) * kf.sqrt().powf(q)))
        }
    };
    let n = (cfg.n_base * n_raw).ceil();
    let n = if n.is_finite() { n as usize } else { cfg.n_max };
    Ok(ScheduleStep {
        delta,
        n: n.clamp(cfg.n_min, cfg.n_max),
        lambda: cfg.lambda_base * lambda,
    })
}

/// Source-condition exponents `(β, κ)` of the regime's entropy bound.
pub fn entropy_exponents(cfg: &ScheduleConfig) -> (f64, f64) {
    match cfg.regime {
        Regime::Tabular => (0.0, 0.5),
        Regime::Sobolev => (cfg.dimension / (2.0 * cfg.smoothness), 0.0),
        // Laplace is Matérn-1/2, a Sobolev space with m = (d + 1)/2.
        Regime::Ntk => (cfg.dimension / (cfg.dimension + 1.0), 0.0),
        Regime::Gaussian => (0.0, (cfg.dimension + 1.0) / 2.0),
    }
}

/// Regularization for a single fixed-size evaluation:
/// `λ_base (1−cγ)^{β/(2+2β)} n^{−1/(2+2β)} (ln n)^{κ/(1+β)}`.
pub fn evaluation_lambda(cfg: &ScheduleConfig, n: usize) -> Result<f64, ScheduleError> {
    cfg.validate()?;
    if n < 2 {
        return Err(ScheduleError::Config(String::from("evaluation λ needs n ≥ 2")));
    }
    let (beta, kappa) = entropy_exponents(cfg);
    let nf = n as f64;
    Ok(cfg.lambda_base
        * cfg.one_minus_cgamma.powf(beta / (2.0 + 2.0 * beta))
        * nf.powf(-1.0 / (2.0 + 2.0 * beta))
        * nf.ln().powf(kappa / (1.0 + beta)))
}
