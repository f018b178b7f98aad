//! TOML experiment configuration. Every table rejects unknown keys and is
//! validated into core types before any compute starts.

use std::path::{Path, PathBuf};

use kernel_npg::analysis::halton;
use kernel_npg::env::{make_gridworld, make_random_tabular, PhysicsEnv, PhysicsKind, SmoothCosineMdp, TabularMdp};
use kernel_npg::evaluation::{SolverMode, TdSolverConfig};
use kernel_npg::kernels::{ActionCoupling, KernelFamily, KernelSpec};
use kernel_npg::npg::{Compaction, NpgConfig, SamplingMode};
use kernel_npg::policy::NormProxyMode;
use kernel_npg::schedule::{Regime, ScheduleConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    EvalRate,
    NpgTrain,
    ScheduleSweep,
    Diagnostics,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EvalRate => "eval-rate",
            Self::NpgTrain => "npg-train",
            Self::ScheduleSweep => "schedule-sweep",
            Self::Diagnostics => "diagnostics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub td: TdSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub eval_rate: EvalRateSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    RandomTabular {
        states: usize,
        actions: usize,
        gamma: f64,
        #[serde(default)]
        sparsity: f64,
        seed: u64,
    },
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default)]
        slip: f64,
        gamma: f64,
    },
    SmoothCosine {
        gamma: f64,
        epsilon: f64,
    },
    Cartpole {
        gamma: Option<f64>,
        explore_prob: Option<f64>,
        max_steps: Option<usize>,
    },
    Acrobot {
        gamma: Option<f64>,
        explore_prob: Option<f64>,
        max_steps: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub family: String,
    pub length_scale: f64,
    pub smoothness: f64,
    pub coupling: String,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: "tabular".into(),
            length_scale: 1.0,
            smoothness: 2.0,
            coupling: "delta".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub regime: String,
    pub step_exponent: f64,
    pub one_minus_cgamma: f64,
    pub smoothness: f64,
    pub dimension: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub n_base: f64,
    pub lambda_base: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub norm_proxy: String,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let d = ScheduleConfig::default();
        Self {
            regime: d.regime.to_string(),
            step_exponent: d.step_exponent,
            one_minus_cgamma: d.one_minus_cgamma,
            smoothness: d.smoothness,
            dimension: d.dimension,
            nu: d.nu,
            epsilon: d.epsilon,
            n_base: d.n_base,
            lambda_base: d.lambda_base,
            n_min: d.n_min,
            n_max: d.n_max,
            norm_proxy: "coefficient-norm".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdSection {
    pub mode: String,
    /// Used by eval-rate with `lambda_rule = "fixed"` and by diagnostics.
    pub lambda: f64,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub iters: Option<usize>,
    pub max_iters: usize,
    pub tol: f64,
    pub warm_start: bool,
}

impl Default for TdSection {
    fn default() -> Self {
        let d = TdSolverConfig::default();
        Self {
            mode: "iterative".into(),
            lambda: d.lambda,
            eta: None,
            alpha: None,
            iters: None,
            max_iters: d.max_iters,
            tol: d.tol,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub outer_iters: usize,
    pub sampling: String,
    pub eval_episodes: usize,
    pub compaction: Option<CompactionSection>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            outer_iters: 200,
            sampling: "independent".into(),
            eval_episodes: 10,
            compaction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactionSection {
    pub every: usize,
    /// Number of Halton dictionary states in `[−1, 1]^d`.
    pub dictionary_size: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalRateSection {
    pub n_grid: Vec<usize>,
    /// `"theory"` scales λ with n per the regime; `"fixed"` uses `td.lambda`.
    pub lambda_rule: String,
    pub lambda_base: f64,
    pub probe_points: usize,
}

impl Default for EvalRateSection {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 200, 400, 800, 1600, 3200],
            lambda_rule: "theory".into(),
            lambda_base: 0.01,
            probe_points: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub exponents: Vec<f64>,
    pub smoothing_window: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            exponents: vec![0.2, 0.5, 1.5],
            smoothing_window: 60,
        }
    }
}

/// A built environment.
#[derive(Debug, Clone)]
pub enum Environment {
    Tabular(TabularMdp),
    Smooth(SmoothCosineMdp),
    Physics(PhysicsEnv),
}

impl Environment {
    pub fn name(&self) -> String {
        match self {
            Self::Tabular(_) => "tabular".into(),
            Self::Smooth(_) => "smooth-cosine".into(),
            Self::Physics(p) => p.kind().to_string(),
        }
    }

    pub fn observation_dim(&self) -> usize {
        use kernel_npg::mdp::MdpModel;
        match self {
            Self::Tabular(m) => m.observation_dim(),
            Self::Smooth(m) => m.observation_dim(),
            Self::Physics(m) => m.observation_dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaRule {
    Theory,
    Fixed,
}

/// Everything the experiment drivers need, in core types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub env: Environment,
    pub kernel: KernelSpec,
    pub schedule: ScheduleConfig,
    pub td: TdSolverConfig,
    pub npg: NpgConfig,
    pub n_grid: Vec<usize>,
    pub lambda_rule: LambdaRule,
    pub eval_lambda_base: f64,
    pub probe_points: usize,
    pub exponents: Vec<f64>,
    pub smoothing_window: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    fn build_env(&self) -> Result<Environment, ConfigError> {
        let env = match &self.environment {
            EnvironmentConfig::RandomTabular {
                states,
                actions,
                gamma,
                sparsity,
                seed,
            } => Environment::Tabular(
                make_random_tabular(*states, *actions, *gamma, *sparsity, *seed).map_err(|e| invalid(e.to_string()))?,
            ),
            EnvironmentConfig::Gridworld {
                width,
                height,
                slip,
                gamma,
            } => Environment::Tabular(make_gridworld(*width, *height, *slip, *gamma).map_err(|e| invalid(e.to_string()))?),
            EnvironmentConfig::SmoothCosine { gamma, epsilon } => {
                if !(0.0..1.0).contains(gamma) || !(0.0..=1.0).contains(epsilon) {
                    return Err(invalid("smooth-cosine needs γ ∈ [0, 1) and ε ∈ [0, 1]"));
                }
                Environment::Smooth(SmoothCosineMdp::new(*gamma, *epsilon))
            }
            EnvironmentConfig::Cartpole {
                gamma,
                explore_prob,
                max_steps,
            }
            | EnvironmentConfig::Acrobot {
                gamma,
                explore_prob,
                max_steps,
            } => {
                let kind = if matches!(self.environment, EnvironmentConfig::Cartpole { .. }) {
                    PhysicsKind::CartPole
                } else {
                    PhysicsKind::Acrobot
                };
                let mut env = PhysicsEnv::new(kind);
                if let Some(g) = gamma {
                    if !(0.0..1.0).contains(g) {
                        return Err(invalid(format!("discount {g} outside [0, 1)")));
                    }
                    env.set_gamma(*g);
                }
                if let Some(p) = explore_prob {
                    if !(0.0..=1.0).contains(p) {
                        return Err(invalid(format!("explore_prob {p} outside [0, 1]")));
                    }
                    env.set_explore_prob(*p);
                }
                if let Some(s) = max_steps {
                    if *s == 0 {
                        return Err(invalid("max_steps must be positive"));
                    }
                    env.set_max_steps(*s);
                }
                Environment::Physics(env)
            }
        };
        Ok(env)
    }

    /// Checks every field and converts to core types.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        let env = self.build_env()?;

        let k = &self.kernel;
        let family: KernelFamily = k.family.parse().map_err(|e: kernel_npg::kernels::KernelError| invalid(e.to_string()))?;
        let coupling: ActionCoupling = k.coupling.parse().map_err(|e: kernel_npg::kernels::KernelError| invalid(e.to_string()))?;
        let kernel = KernelSpec::new(family, k.length_scale, k.smoothness, coupling).map_err(|e| invalid(e.to_string()))?;
        if family == KernelFamily::TabularDelta && !matches!(env, Environment::Tabular(_)) {
            return Err(invalid("the tabular kernel needs a tabular environment"));
        }

        let s = &self.schedule;
        let schedule = ScheduleConfig {
            regime: s.regime.parse::<Regime>().map_err(|e| invalid(e.to_string()))?,
            step_exponent: s.step_exponent,
            one_minus_cgamma: s.one_minus_cgamma,
            smoothness: s.smoothness,
            dimension: s.dimension,
            nu: s.nu,
            epsilon: s.epsilon,
            n_base: s.n_base,
            lambda_base: s.lambda_base,
            n_min: s.n_min,
            n_max: s.n_max,
            norm_proxy_mode: s.norm_proxy.parse::<NormProxyMode>().map_err(|e| invalid(e.to_string()))?,
        };
        schedule.validate().map_err(|e| invalid(e.to_string()))?;

        let t = &self.td;
        let td = TdSolverConfig {
            lambda: t.lambda,
            eta: t.eta,
            alpha: t.alpha,
            iters: t.iters,
            max_iters: t.max_iters,
            mode: t.mode.parse::<SolverMode>().map_err(|e| invalid(e.to_string()))?,
            tol: t.tol,
        };
        if !(td.lambda >= 0.0 && td.lambda.is_finite()) {
            return Err(invalid(format!("td.lambda must be finite and ≥ 0, got {}", td.lambda)));
        }
        if !(td.tol > 0.0) || td.max_iters == 0 {
            return Err(invalid("td.tol and td.max_iters must be positive"));
        }

        let tr = &self.training;
        let sampling = match tr.sampling.as_str() {
            "independent" => SamplingMode::Independent,
            "rollouts" => SamplingMode::Rollouts,
            other => return Err(invalid(format!("unknown sampling mode `{other}`"))),
        };
        let compaction = match &tr.compaction {
            None => None,
            Some(c) => {
                if c.every == 0 || c.dictionary_size == 0 || !(c.ridge > 0.0) {
                    return Err(invalid("compaction needs every, dictionary_size, ridge > 0"));
                }
                let dim = env.observation_dim();
                let states = halton(dim, c.dictionary_size, 0)
                    .into_iter()
                    .map(|p| p.into_iter().map(|x| 2.0 * x - 1.0).collect())
                    .collect();
                Some(Compaction {
                    every: c.every,
                    states,
                    ridge: c.ridge,
                })
            }
        };
        let mut npg = NpgConfig::new(kernel, schedule, tr.outer_iters);
        npg.td = td;
        npg.sampling = sampling;
        npg.warm_start = t.warm_start;
        npg.eval_episodes = tr.eval_episodes;
        npg.compaction = compaction;

        let er = &self.eval_rate;
        let lambda_rule = match er.lambda_rule.as_str() {
            "theory" => LambdaRule::Theory,
            "fixed" => LambdaRule::Fixed,
            other => return Err(invalid(format!("unknown lambda_rule `{other}`"))),
        };
        if er.n_grid.is_empty() || er.n_grid.iter().any(|n| *n < 2) {
            return Err(invalid("eval_rate.n_grid needs entries ≥ 2"));
        }
        if !(er.lambda_base > 0.0) {
            return Err(invalid("eval_rate.lambda_base must be positive"));
        }

        let sw = &self.sweep;
        if self.kind == ExperimentKind::ScheduleSweep && sw.exponents.is_empty() {
            return Err(invalid("sweep.exponents must not be empty"));
        }
        if sw.exponents.iter().any(|a| !(*a >= 0.0)) || sw.smoothing_window == 0 {
            return Err(invalid("sweep exponents must be ≥ 0 and the window positive"));
        }

        match (self.kind, &env) {
            (ExperimentKind::EvalRate, Environment::Physics(_)) => {
                return Err(invalid("eval-rate needs an environment with an exact oracle"));
            }
            (ExperimentKind::NpgTrain | ExperimentKind::ScheduleSweep, Environment::Smooth(_)) => {
                return Err(invalid("training on smooth-cosine is not supported; use eval-rate or diagnostics"));
            }
            _ => {}
        }

        Ok(Resolved {
            kind: self.kind,
            seeds: self.seeds.clone(),
            out_dir: self.out_dir.clone(),
            env,
            kernel,
            schedule,
            td,
            npg,
            n_grid: er.n_grid.clone(),
            lambda_rule,
            eval_lambda_base: er.lambda_base,
            probe_points: er.probe_points,
            exponents: sw.exponents.clone(),
            smoothing_window: sw.smoothing_window,
        })
    }
}
