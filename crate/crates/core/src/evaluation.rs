//! Kernel TD critic: closed-form KRR-TD, the iterative RKHS update, and
//! residual diagnostics.
//!
//! Batches frequently repeat anchors (always, in the tabular case), so all
//! solvers work on the deduplicated anchor set. With `G` the `n × m`
//! indicator of which unique anchor each sample uses, `𝐊 = G K_u Gᵀ` and
//! `𝐂 = C_u Gᵀ`, so the summed coefficients `c = Gᵀb` follow a closed
//! `m`-dimensional recursion and the full `b` can be rebuilt afterwards.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::kernels::{gram, KernelError, KernelFamily, KernelSpec, StateAction};
use crate::linalg::{power_spectral_radius, solve_dense, LinalgError, SolveInfo};
use crate::mdp::SampleBatch;

/// Fixed constant in the step-size bound `η ≤ (1−C₁)/(n(1+γ)K_max + λn)`.
pub const STEP_C1: f64 = 0.5;
/// Safety factor on the log-rule iteration cap.
pub const ITER_C2: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{0}; try a larger regularization λ")]
    Linalg(#[from] LinalgError),
    #[error("solve residual {residual:e} exceeds {bound:e}")]
    Residual { residual: f64, bound: f64 },
    #[error("kernel TD diverged at iteration {iteration} (iteration-matrix spectral radius ≈ {spectral_radius})")]
    Divergence { iteration: usize, spectral_radius: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("the error-decomposition check needs exact RKHS inner products and is only available for the tabular kernel")]
    Unsupported,
}

/// Anything that can be evaluated at a state-action pair.
pub trait QFunction {
    fn q_value(&self, omega: &StateAction) -> f64;
}

/// `f = Σᵢ bᵢ K(ωᵢ, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    anchors: Vec<StateAction>,
    coeffs: Vec<f64>,
    kernel: KernelSpec,
}

impl QEstimate {
    pub fn new(anchors: Vec<StateAction>, coeffs: Vec<f64>, kernel: KernelSpec) -> Result<Self, TdError> {
        if anchors.len() != coeffs.len() {
            return Err(TdError::Config(alloc::format!(
                "{} anchors but {} coefficients",
                anchors.len(),
                coeffs.len()
            )));
        }
        if let Some(first) = anchors.first() {
            for a in &anchors {
                kernel.check_compatible(first, a)?;
            }
        }
        Ok(Self { anchors, coeffs, kernel })
    }

    /// The zero function.
    pub fn zero(kernel: KernelSpec) -> Self {
        Self {
            anchors: Vec::new(),
            coeffs: Vec::new(),
            kernel,
        }
    }

    pub fn anchors(&self) -> &[StateAction] {
        &self.anchors
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn eval(&self, omega: &StateAction) -> f64 {
        self.anchors
            .iter()
            .zip(&self.coeffs)
            .map(|(a, b)| b * self.kernel.eval_unchecked(a, omega))
            .sum()
    }

    /// `bᵀ𝐊b`, clamped at zero when roundoff makes it slightly negative.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let c = self.compact();
        if c.is_empty() {
            return 0.0;
        }
        let k = gram(&c.kernel, &c.anchors, &c.anchors).expect("anchors validated on construction");
        let b = DVector::from_column_slice(&c.coeffs);
        let v = b.dot(&(&k * &b));
        debug_assert!(v >= -1e-10 * (1.0 + b.norm_squared()), "negative RKHS norm {v}");
        v.max(0.0)
    }

    /// Same function with repeated anchors merged (coefficients summed) and
    /// zero coefficients dropped. Anchors keep first-appearance order.
    pub fn compact(&self) -> QEstimate {
        let (unique, group) = group_points(&self.anchors);
        let mut coeffs = vec![0.0; unique.len()];
        for (g, b) in group.iter().zip(&self.coeffs) {
            coeffs[*g] += b;
        }
        let mut anchors = Vec::new();
        let mut kept = Vec::new();
        for (idx, c) in unique.into_iter().zip(coeffs) {
            if c != 0.0 {
                anchors.push(self.anchors[idx].clone());
                kept.push(c);
            }
        }
        QEstimate {
            anchors,
            coeffs: kept,
            kernel: self.kernel,
        }
    }

    /// `a·f + g` over the union of anchors (no merging).
    pub fn axpy(&self, a: f64, other: &QEstimate) -> QEstimate {
        let mut anchors = self.anchors.clone();
        let mut coeffs: Vec<f64> = self.coeffs.iter().map(|b| a * b).collect();
        anchors.extend(other.anchors.iter().cloned());
        coeffs.extend_from_slice(&other.coeffs);
        QEstimate {
            anchors,
            coeffs,
            kernel: self.kernel,
        }
    }
}

impl QFunction for QEstimate {
    fn q_value(&self, omega: &StateAction) -> f64 {
        self.eval(omega)
    }
}

impl<F: Fn(&StateAction) -> f64> QFunction for F {
    fn q_value(&self, omega: &StateAction) -> f64 {
        self(omega)
    }
}

/// Indices of first occurrences, and for every point its group number.
pub(crate) fn group_points(points: &[StateAction]) -> (Vec<usize>, Vec<usize>) {
    let mut seen = BTreeMap::new();
    let mut unique = Vec::new();
    let mut group = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let g = *seen.entry(p.key()).or_insert_with(|| {
            unique.push(i);
            unique.len() - 1
        });
        group.push(g);
    }
    (unique, group)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    ClosedForm,
    Iterative,
}

impl core::str::FromStr for SolverMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "closedform" => Ok(Self::ClosedForm),
            "iterative" => Ok(Self::Iterative),
            other => Err(alloc::format!("unknown solver mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdSolverConfig {
    pub lambda: f64,
    /// `None` selects the automatic step size.
    pub eta: Option<f64>,
    /// `None` couples `α = ηλn`.
    pub alpha: Option<f64>,
    /// Run exactly this many steps instead of stopping on `tol`.
    pub iters: Option<usize>,
    /// Hard cap when stopping on `tol`.
    pub max_iters: usize,
    pub mode: SolverMode,
    /// Stop once `‖c_{t+1} − c_t‖∞ ≤ tol`.
    pub tol: f64,
}

impl Default for TdSolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            eta: None,
            alpha: None,
            iters: None,
            max_iters: 200_000,
            mode: SolverMode::Iterative,
            tol: 1e-8,
        }
    }
}

/// Per-step record of an iterative solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    /// `‖f_{t+1} − f_t‖_n` for each step.
    pub step_norms: Vec<f64>,
    /// `‖Gᵀb_{t+1}‖₂`.
    pub coeff_norms: Vec<f64>,
    /// `‖f_{t+1} − reference‖_n`, when a reference was supplied.
    pub errors: Vec<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub converged: bool,
    /// Iteration cap in force (from the log rule or `iters`).
    pub cap: usize,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }
}

/// `η = (1−C₁)/(n(1+γ)K_max + λn)` and `α = ηλn`.
///
/// Any `η` at or below `(1−C₁)/(n(1+γ)K_max + λ)` is admissible; scaling the
/// `λ` term by `n` keeps `α < 1 − C₁` for every `λ`.
pub fn auto_step_size(k_max: f64, lambda: f64, n: usize, gamma: f64) -> (f64, f64) {
    let n = n.max(1) as f64;
    let eta = (1.0 - STEP_C1) / (n * (1.0 + gamma) * k_max + lambda * n);
    (eta, eta * lambda * n)
}

/// A batch's TD linear system on the deduplicated anchor set.
#[derive(Debug, Clone)]
pub struct TdSystem {
    kernel: KernelSpec,
    gamma: f64,
    batch_anchors: Vec<StateAction>,
    next_points: Vec<StateAction>,
    terminal: Vec<bool>,
    anchors: Vec<StateAction>,
    group: Vec<usize>,
    counts: DVector<f64>,
    ku: DMatrix<f64>,
    /// `n × m`; rows of terminal samples are zero.
    cu: DMatrix<f64>,
    /// `GᵀC_u`, `m × m`.
    b: DMatrix<f64>,
    rewards: DVector<f64>,
    reward_sums: DVector<f64>,
}

impl TdSystem {
    pub fn new(batch: &SampleBatch, kernel: &KernelSpec, gamma: f64) -> Result<Self, TdError> {
        if batch.is_empty() {
            return Err(TdError::Config(String::from("empty batch")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(TdError::Config(alloc::format!("discount {gamma} outside [0, 1)")));
        }
        let batch_anchors = batch.anchors();
        let next_points = batch.next_points();
        let terminal: Vec<bool> = batch.samples.iter().map(|s| s.terminal).collect();
        let (unique, group) = group_points(&batch_anchors);
        let anchors: Vec<StateAction> = unique.iter().map(|&i| batch_anchors[i].clone()).collect();
        let (n, m) = (batch_anchors.len(), anchors.len());
        let ku = gram(kernel, &anchors, &anchors)?;
        let mut cu = gram(kernel, &next_points, &anchors)?;
        for (i, t) in terminal.iter().enumerate() {
            if *t {
                cu.row_mut(i).fill(0.0);
            }
        }
        let mut counts = DVector::zeros(m);
        let mut b = DMatrix::zeros(m, m);
        let rewards = DVector::from_vec(batch.rewards());
        let mut reward_sums = DVector::zeros(m);
        for i in 0..n {
            let g = group[i];
            counts[g] += 1.0;
            reward_sums[g] += rewards[i];
            for j in 0..m {
                b[(g, j)] += cu[(i, j)];
            }
        }
        Ok(Self {
            kernel: *kernel,
            gamma,
            batch_anchors,
            next_points,
            terminal,
            anchors,
            group,
            counts,
            ku,
            cu,
            b,
            rewards,
            reward_sums,
        })
    }

    pub fn n(&self) -> usize {
        self.batch_anchors.len()
    }

    /// Number of distinct anchors.
    pub fn m(&self) -> usize {
        self.anchors.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn unique_anchors(&self) -> &[StateAction] {
        &self.anchors
    }

    /// Group index of each sample's anchor.
    pub fn groups(&self) -> &[usize] {
        &self.group
    }

    pub fn counts(&self) -> &[f64] {
        self.counts.as_slice()
    }

    pub fn k_max(&self) -> f64 {
        (0..self.m()).map(|i| self.ku[(i, i)]).fold(0.0, f64::max)
    }

    pub fn auto_step_size(&self, lambda: f64) -> (f64, f64) {
        let (eta, alpha) = auto_step_size(self.k_max(), lambda, self.n(), self.gamma);
        if cfg!(debug_assertions) && self.m() <= 256 {
            let rho = self.spectral_radius(eta, alpha);
            if rho >= 1.0 {
                log::warn!("auto step size gives iteration spectral radius {rho} ≥ 1");
            }
        }
        (eta, alpha)
    }

    /// Iteration matrix on summed coefficients:
    /// `(1−α)I − η(diag(counts)K_u − γGᵀC_u)`.
    ///
    /// Its spectrum is that of `(1−α)I − η𝐊 + ηγ𝐂` minus the `n − m`
    /// copies of `1 − α` that live on the kernel of `Gᵀ`.
    pub fn iteration_matrix(&self, eta: f64, alpha: f64) -> DMatrix<f64> {
        let m = self.m();
        let mut a = DMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                a[(i, j)] = -eta * (self.counts[i] * self.ku[(i, j)] - self.gamma * self.b[(i, j)]);
            }
            a[(j, j)] += 1.0 - alpha;
        }
        a
    }

    /// Gelfand estimate of the iteration matrix's spectral radius.
    pub fn spectral_radius(&self, eta: f64, alpha: f64) -> f64 {
        let a = self.iteration_matrix(eta, alpha);
        power_spectral_radius(self.m(), 400, 0x7d, |v, w| {
            let out = &a * DVector::from_column_slice(v);
            w.copy_from_slice(out.as_slice());
        })
    }

    /// `q` at each distinct anchor.
    pub fn values_at_anchors<Q: QFunction + ?Sized>(&self, q: &Q) -> Vec<f64> {
        self.anchors.iter().map(|a| q.q_value(a)).collect()
    }

    /// `‖·‖_n` of a function given by its values at the distinct anchors.
    pub fn empirical_norm(&self, values: &[f64]) -> f64 {
        let s: f64 = values.iter().zip(self.counts.iter()).map(|(v, c)| c * v * v).sum();
        (s / self.n() as f64).sqrt()
    }

    /// `‖f − g‖_n` over the batch anchors.
    pub fn distance<A: QFunction + ?Sized, B: QFunction + ?Sized>(&self, f: &A, g: &B) -> f64 {
        let d: Vec<f64> = self.anchors.iter().map(|a| f.q_value(a) - g.q_value(a)).collect();
        self.empirical_norm(&d)
    }

    fn estimate_from_full(&self, b: Vec<f64>) -> QEstimate {
        QEstimate {
            anchors: self.batch_anchors.clone(),
            coeffs: b,
            kernel: self.kernel,
        }
    }

    fn estimate_from_summed(&self, c: &DVector<f64>) -> QEstimate {
        QEstimate {
            anchors: self.anchors.clone(),
            coeffs: c.as_slice().to_vec(),
            kernel: self.kernel,
        }
    }

    /// `‖(𝐊 + λnI − γ𝐂)b − 𝐫‖₂` evaluated through the factored matrices.
    pub fn full_residual(&self, lambda: f64, b: &[f64]) -> f64 {
        let n = self.n();
        let mut c = DVector::zeros(self.m());
        for (i, bi) in b.iter().enumerate() {
            c[self.group[i]] += bi;
        }
        let kc = &self.ku * &c;
        let cc = &self.cu * &c;
        (0..n)
            .map(|i| {
                let v = kc[self.group[i]] + lambda * n as f64 * b[i] - self.gamma * cc[i] - self.rewards[i];
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Solves `(𝐊 + λnI − γ𝐂)b = 𝐫`.
    ///
    /// The solve happens on `(λnI + diag(counts)K_u − γGᵀC_u)c = Gᵀ𝐫`; for
    /// `λ > 0` the per-sample coefficients are recovered as
    /// `b = (𝐫 − G K_u c + γC_u c)/(λn)`. With `λ = 0` and repeated anchors
    /// `b` is not unique and the estimate is returned on the distinct
    /// anchors instead.
    pub fn closed_form(&self, lambda: f64) -> Result<(QEstimate, SolveInfo), TdError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(TdError::Config(alloc::format!("λ must be finite and ≥ 0, got {lambda}")));
        }
        let (n, m) = (self.n(), self.m());
        let ln = lambda * n as f64;
        let mut a = DMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                a[(i, j)] = self.counts[i] * self.ku[(i, j)] - self.gamma * self.b[(i, j)];
            }
            a[(j, j)] += ln;
        }
        let (c, mut info) = solve_dense(&a, &self.reward_sums)?;
        let r_norm = self.rewards.norm();
        let bound = 1e-10 * r_norm.max(f64::MIN_POSITIVE);
        if m == n {
            // Every sample is its own group, in first-appearance order.
            let b = c.as_slice().to_vec();
            info.residual = self.full_residual(lambda, &b);
            if info.residual > bound && r_norm > 0.0 {
                return Err(TdError::Residual {
                    residual: info.residual,
                    bound,
                });
            }
            return Ok((self.estimate_from_full(b), info));
        }
        if lambda == 0.0 {
            return Ok((self.estimate_from_summed(&c), info));
        }
        let kc = &self.ku * &c;
        let cc = &self.cu * &c;
        let b: Vec<f64> = (0..n)
            .map(|i| (self.rewards[i] - kc[self.group[i]] + self.gamma * cc[i]) / ln)
            .collect();
        info.residual = self.full_residual(lambda, &b);
        if info.residual > bound && r_norm > 0.0 {
            return Err(TdError::Residual {
                residual: info.residual,
                bound,
            });
        }
        Ok((self.estimate_from_full(b), info))
    }

    /// Runs `b_{t+1} = (1−α)b_t − η(f_t(𝛚₀) − 𝐫 − γf_t(𝛚₁))` from
    /// `f_0 = init` (zero when `None`).
    ///
    /// With `f_0 = g` the iterate is `f_t = (1−α)ᵗ g + Σᵢ b̃ᵢ K(ω₀⁽ⁱ⁾, ·)`, so
    /// only `c = Gᵀb̃` is propagated. The returned estimate carries the
    /// per-sample `b̃_T` (rebuilt from discounted sums of the `c_t`) plus
    /// the decayed `g`. `reference` holds target values at the distinct
    /// anchors for the error trace.
    pub fn iterate(
        &self,
        cfg: &TdSolverConfig,
        init: Option<&QEstimate>,
        reference: Option<&[f64]>,
    ) -> Result<(QEstimate, ConvergenceTrace), TdError> {
        let (n, m) = (self.n(), self.m());
        let (eta, alpha) = match (cfg.eta, cfg.alpha) {
            (None, _) => self.auto_step_size(cfg.lambda),
            (Some(eta), None) => (eta, eta * cfg.lambda * n as f64),
            (Some(eta), Some(alpha)) => (eta, alpha),
        };
        if !(eta >= 0.0) || !(0.0..1.0).contains(&alpha) {
            return Err(TdError::Config(alloc::format!("need η ≥ 0 and α ∈ [0, 1), got η={eta}, α={alpha}")));
        }
        let decay = 1.0 - alpha;
        let g_u = DVector::from_iterator(m, self.anchors.iter().map(|a| init.map_or(0.0, |g| g.eval(a))));
        let g1 = DVector::from_iterator(
            n,
            self.next_points
                .iter()
                .zip(&self.terminal)
                .map(|(p, t)| if *t { 0.0 } else { init.map_or(0.0, |g| g.eval(p)) }),
        );
        let mut h = DVector::zeros(m);
        for i in 0..n {
            h[self.group[i]] += g1[i];
        }

        let mut trace = ConvergenceTrace {
            eta,
            alpha,
            ..Default::default()
        };
        let mut c = DVector::zeros(m);
        let mut s = 1.0;
        let mut val0 = &g_u * s;
        // Discounted sums Σₜ (1−α)^{T−1−t} xₜ for c_t, s_t, and 1.
        let mut sum_c = DVector::zeros(m);
        let mut sum_s = 0.0;
        let mut sum_one = 0.0;
        let mut cap = cfg.iters.unwrap_or(cfg.max_iters);
        let mut rho = f64::NAN;
        let mut t = 0;
        while t < cap {
            let nxt = &self.b * &c + &h * s;
            let mut c_new = &c * decay;
            for g in 0..m {
                let resid = self.counts[g] * val0[g] - self.reward_sums[g] - self.gamma * nxt[g];
                c_new[g] -= eta * resid;
            }
            sum_c = &sum_c * decay + &c;
            sum_s = sum_s * decay + s;
            sum_one = sum_one * decay + 1.0;
            let s_new = s * decay;
            let val_new = &self.ku * &c_new + &g_u * s_new;
            let diff: Vec<f64> = (0..m).map(|g| val_new[g] - val0[g]).collect();
            let step = self.empirical_norm(&diff);
            let c_step = (&c_new - &c).amax();
            trace.step_norms.push(step);
            trace.coeff_norms.push(c_new.norm());
            if let Some(target) = reference {
                let e: Vec<f64> = (0..m).map(|g| val_new[g] - target[g]).collect();
                trace.errors.push(self.empirical_norm(&e));
            }
            c = c_new;
            s = s_new;
            val0 = val_new;
            t += 1;

            if !step.is_finite() || (t > 50 && step > 10.0 * trace.step_norms[t - 51] && step > 1e-300) {
                return Err(TdError::Divergence {
                    iteration: t,
                    spectral_radius: self.spectral_radius(eta, alpha),
                });
            }
            if cfg.iters.is_none() {
                if c_step <= cfg.tol {
                    trace.converged = true;
                    break;
                }
                if t == 1 {
                    rho = self.spectral_radius(eta, alpha);
                    if rho < 1.0 && rho > 0.0 {
                        let needed = ((cfg.tol / c_step.max(f64::MIN_POSITIVE)).ln() / rho.ln()).ceil();
                        let rule = (ITER_C2 * needed).max(0.0) as usize + 50;
                        cap = cap.min(rule.max(1));
                    }
                }
            }
        }
        trace.cap = cap;
        if cfg.iters.is_none() && !trace.converged {
            log::warn!(
                "kernel TD stopped at the iteration cap {cap} before reaching tol {} (ρ ≈ {rho})",
                cfg.tol
            );
        }

        // b̃_T = −η Σₜ (1−α)^{T−1−t} (f_t(𝛚₀) − 𝐫 − γ f_t(𝛚₁)).
        let ks = &self.ku * &sum_c;
        let cs = &self.cu * &sum_c;
        let b: Vec<f64> = (0..n)
            .map(|i| {
                let g = self.group[i];
                let f0 = ks[g] + sum_s * g_u[g];
                let f1 = cs[i] + sum_s * g1[i];
                -eta * (f0 - sum_one * self.rewards[i] - self.gamma * f1)
            })
            .collect();
        let mut q = self.estimate_from_full(b);
        if let Some(g) = init {
            q = g.axpy(s, &q);
        }
        Ok((q, trace))
    }
}

/// Closed-form KRR-TD estimate `b = (𝐊 + λnI − γ𝐂)⁻¹𝐫` for one batch.
pub fn krr_td_closed_form(
    batch: &SampleBatch,
    kernel: &KernelSpec,
    lambda: f64,
    gamma: f64,
) -> Result<(QEstimate, SolveInfo), TdError> {
    TdSystem::new(batch, kernel, gamma)?.closed_form(lambda)
}

/// Iterative kernel TD on one batch; see [`TdSystem::iterate`].
pub fn kernel_td_iterate(
    batch: &SampleBatch,
    kernel: &KernelSpec,
    gamma: f64,
    cfg: &TdSolverConfig,
    init: Option<&QEstimate>,
) -> Result<(QEstimate, ConvergenceTrace), TdError> {
    TdSystem::new(batch, kernel, gamma)?.iterate(cfg, init, None)
}

/// `εᵢ = r(ω₀⁽ⁱ⁾) + γ q(ω₁⁽ⁱ⁾) − q(ω₀⁽ⁱ⁾)`, with no bootstrap through
/// terminal samples.
pub fn bellman_residuals<Q: QFunction + ?Sized>(batch: &SampleBatch, q: &Q, gamma: f64) -> Vec<f64> {
    batch
        .samples
        .iter()
        .map(|s| {
            let next = if s.terminal { 0.0 } else { q.q_value(&s.omega1) };
            s.reward + gamma * next - q.q_value(&s.omega0)
        })
        .collect()
}

/// Both sides of the error decomposition for a KRR-TD estimate.
///
/// With `D = Q̂ − Q`, the first-order condition of the KRR-TD objective
/// tested against `D` gives
/// `(1/n)Σ(D(ω₀)² − γD(ω₀)D(ω₁)) = (1/n)Σ εᵢD(ω₀) − λ⟨D, Q̂⟩_H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Evaluates the identity above; tabular kernel only, where `Q̂` lives on
/// its anchors and `⟨D, Q̂⟩_H = Σ_ω D(ω)Q̂(ω)` over those anchors.
pub fn error_decomposition_residual<Q: QFunction + ?Sized>(
    batch: &SampleBatch,
    q_hat: &QEstimate,
    q_exact: &Q,
    lambda: f64,
    gamma: f64,
) -> Result<DecompositionCheck, TdError> {
    if q_hat.kernel().family() != KernelFamily::TabularDelta {
        return Err(TdError::Unsupported);
    }
    let n = batch.len() as f64;
    let mut lhs = 0.0;
    let mut noise = 0.0;
    for s in &batch.samples {
        let q0 = q_exact.q_value(&s.omega0);
        let d0 = q_hat.eval(&s.omega0) - q0;
        let (d1, q1) = if s.terminal {
            (0.0, 0.0)
        } else {
            let q1 = q_exact.q_value(&s.omega1);
            (q_hat.eval(&s.omega1) - q1, q1)
        };
        let eps = s.reward + gamma * q1 - q0;
        lhs += d0 * d0 - gamma * d0 * d1;
        noise += eps * d0;
    }
    let compact = q_hat.compact();
    let inner: f64 = compact
        .anchors()
        .iter()
        .zip(compact.coeffs())
        .map(|(a, c)| (c - q_exact.q_value(a)) * c)
        .sum();
    let lhs = lhs / n;
    let rhs = noise / n - lambda * inner;
    Ok(DecompositionCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TransitionSample;
    use alloc::string::ToString;
    use approx::assert_relative_eq;

    fn sa(s: f64, a: usize) -> StateAction {
        StateAction::new(vec![s], a)
    }

    fn batch(samples: &[(f64, usize, f64, f64, usize)]) -> SampleBatch {
        SampleBatch {
            samples: samples
                .iter()
                .map(|&(s0, a0, r, s1, a1)| TransitionSample {
                    omega0: sa(s0, a0),
                    reward: r,
                    omega1: sa(s1, a1),
                    terminal: false,
                })
                .collect(),
            seed: 0,
            policy_id: "test".to_string(),
        }
    }

    #[test]
    fn single_sample_without_self_loop() {
        let b = batch(&[(0.0, 0, 1.0, 1.0, 0)]);
        let (q, _) = krr_td_closed_form(&b, &KernelSpec::tabular(), 0.0, 0.9).unwrap();
        assert_eq!(q.coeffs(), &[1.0]);
        assert_eq!(q.eval(&sa(0.0, 0)), 1.0);
    }

    #[test]
    fn single_sample_self_loop() {
        let b = batch(&[(0.0, 0, 1.0, 0.0, 0)]);
        let (q, _) = krr_td_closed_form(&b, &KernelSpec::tabular(), 0.0, 0.9).unwrap();
        assert_relative_eq!(q.coeffs()[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_step_returns_init() {
        let b = batch(&[(0.0, 0, 1.0, 1.0, 1), (1.0, 1, 0.5, 0.0, 0)]);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let init = QEstimate::new(vec![sa(0.3, 0)], vec![0.7], k).unwrap();
        let cfg = TdSolverConfig {
            lambda: 0.0,
            eta: Some(0.0),
            alpha: Some(0.0),
            iters: Some(25),
            ..Default::default()
        };
        let (q, _) = kernel_td_iterate(&b, &k, 0.9, &cfg, Some(&init)).unwrap();
        for p in [sa(0.0, 0), sa(0.3, 0), sa(1.0, 1)] {
            assert_eq!(q.eval(&p), init.eval(&p));
        }
    }

    #[test]
    fn auto_step_size_example() {
        let (eta, alpha) = auto_step_size(1.0, 0.0, 1, 0.9);
        assert_relative_eq!(eta, 0.5 / 1.9, epsilon = 1e-15);
        assert_eq!(alpha, 0.0);
        let (eta, alpha) = auto_step_size(1.0, 1e12, 10, 0.9);
        assert!(eta < 1e-12 && alpha < 0.5);
    }

    #[test]
    fn compact_merges_duplicates() {
        let k = KernelSpec::tabular();
        let q = QEstimate::new(vec![sa(0.0, 0), sa(1.0, 0), sa(0.0, 0)], vec![1.0, 2.0, 3.0], k).unwrap();
        let c = q.compact();
        assert_eq!(c.coeffs(), &[4.0, 2.0]);
        assert_eq!(c.eval(&sa(0.0, 0)), q.eval(&sa(0.0, 0)));
        assert_relative_eq!(q.rkhs_norm_sq(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn residuals_vanish_for_reward_fit_at_zero_discount() {
        let b = batch(&[(0.0, 0, 0.3, 1.0, 0), (1.0, 0, 0.8, 0.0, 0)]);
        let q = |w: &StateAction| if w.state[0] == 0.0 { 0.3 } else { 0.8 };
        assert!(bellman_residuals(&b, &q, 0.0).iter().all(|e| *e == 0.0));
    }

    #[test]
    fn decomposition_rejects_non_tabular() {
        let b = batch(&[(0.0, 0, 1.0, 1.0, 0)]);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let (q, _) = krr_td_closed_form(&b, &k, 0.1, 0.9).unwrap();
        let zero = |_: &StateAction| 0.0;
        assert_eq!(
            error_decomposition_residual(&b, &q, &zero, 0.1, 0.9),
            Err(TdError::Unsupported)
        );
    }
}
