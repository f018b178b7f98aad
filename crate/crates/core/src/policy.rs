//! Softmax policies `π ∝ exp{F}` with `F = Σⱼ Δⱼ f⁽ʲ⁾`, the NPG update, and
//! the KL-proximal check of that update.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;
use core::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DVector;

use crate::evaluation::{QEstimate, QFunction};
use crate::kernels::{gram, KernelSpec, StateAction};
use crate::linalg::{solve_dense, LinalgError};
use crate::mdp::Policy;

/// Probabilities below this trigger a one-time warning: the KL-proximal
/// reading of the update assumes strictly positive policies.
pub const MIN_PROB_WARNING: f64 = 1e-6;

static NEAR_DETERMINISTIC_WARNED: AtomicBool = AtomicBool::new(false);

/// Numerically safe softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// One `(Δⱼ, f⁽ʲ⁾)` pair.
#[derive(Debug, Clone)]
pub struct PolicyTerm {
    pub step: f64,
    pub f: Arc<QEstimate>,
    /// `‖f⁽ʲ⁾‖²_H`, computed once when the term is added.
    pub norm_sq: f64,
}

/// `π(a|s) ∝ exp{F(s, a)}` over a finite action set.
///
/// Terms are shared and never modified; `merged` caches `F` as a single
/// expansion with repeated anchors combined, which is what evaluation uses.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    n_actions: usize,
    kernel: KernelSpec,
    base: Option<(Arc<QEstimate>, f64)>,
    terms: Vec<PolicyTerm>,
    merged: Arc<QEstimate>,
    /// Number of terms folded into `base` by [`SoftmaxPolicy::compact_onto`].
    compacted_terms: usize,
}

impl SoftmaxPolicy {
    /// `F ≡ 0`: the uniform policy.
    pub fn uniform(n_actions: usize, kernel: KernelSpec) -> Self {
        assert!(n_actions >= 1, "need at least one action");
        Self {
            n_actions,
            kernel,
            base: None,
            terms: Vec::new(),
            merged: Arc::new(QEstimate::zero(kernel)),
            compacted_terms: 0,
        }
    }

    /// `π ∝ exp{f⁽⁰⁾}`.
    pub fn with_base(n_actions: usize, base: QEstimate) -> Self {
        let kernel = *base.kernel();
        let norm = base.rkhs_norm_sq();
        let merged = Arc::new(base.compact());
        Self {
            n_actions,
            kernel,
            base: Some((Arc::new(base), norm)),
            terms: Vec::new(),
            merged,
            compacted_terms: 0,
        }
    }

    pub fn terms(&self) -> &[PolicyTerm] {
        &self.terms
    }

    pub fn base(&self) -> Option<&QEstimate> {
        self.base.as_ref().map(|(b, _)| b.as_ref())
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn compacted_terms(&self) -> usize {
        self.compacted_terms
    }

    /// `F` as one kernel expansion.
    pub fn logit_function(&self) -> &QEstimate {
        &self.merged
    }

    /// `F(s, a)` for every action.
    pub fn logits(&self, state: &[f64]) -> Vec<f64> {
        let mut omega = StateAction::new(state.to_vec(), 0);
        (0..self.n_actions)
            .map(|a| {
                omega.action = crate::kernels::Action::Discrete(a);
                self.merged.eval(&omega)
            })
            .collect()
    }

    /// Returns `π'` with `(Δ, f)` appended, so `π' ∝ π exp{Δf}`.
    ///
    /// # Panics
    /// If `delta` is negative or not finite.
    pub fn npg_step(&self, f: QEstimate, delta: f64) -> SoftmaxPolicy {
        assert!(delta >= 0.0 && delta.is_finite(), "NPG step size must be finite and ≥ 0, got {delta}");
        let norm_sq = f.rkhs_norm_sq();
        let f = Arc::new(f.compact());
        let merged = Arc::new(self.merged.axpy(1.0, &scaled(&f, delta)).compact());
        let mut terms = self.terms.clone();
        terms.push(PolicyTerm { step: delta, f, norm_sq });
        SoftmaxPolicy {
            n_actions: self.n_actions,
            kernel: self.kernel,
            base: self.base.clone(),
            terms,
            merged,
            compacted_terms: self.compacted_terms,
        }
    }

    /// Refits `F` onto `dictionary` (all actions at each listed state) by
    /// regularized least squares `(K + ridge·I)d = F(dictionary)` and
    /// returns a policy whose base is that fit and which has no terms.
    pub fn compact_onto(&self, states: &[Vec<f64>], ridge: f64) -> Result<SoftmaxPolicy, LinalgError> {
        let points: Vec<StateAction> = states
            .iter()
            .flat_map(|s| (0..self.n_actions).map(move |a| StateAction::new(s.clone(), a)))
            .collect();
        let mut k = gram(&self.kernel, &points, &points).expect("dictionary matches the policy kernel");
        for i in 0..points.len() {
            k[(i, i)] += ridge;
        }
        let target = DVector::from_iterator(points.len(), points.iter().map(|p| self.merged.eval(p)));
        let (d, _) = solve_dense(&k, &target)?;
        let fit = QEstimate::new(points, d.as_slice().to_vec(), self.kernel).expect("consistent dictionary");
        let mut out = SoftmaxPolicy::with_base(self.n_actions, fit);
        out.compacted_terms = self.compacted_terms + self.terms.len();
        Ok(out)
    }

    /// Surrogate for the policy's RKHS norm.
    pub fn norm_proxy(&self, mode: NormProxyMode) -> f64 {
        match mode {
            NormProxyMode::Constant => 1.0,
            NormProxyMode::CoefficientNorm => {
                let base = self.base.as_ref().map_or(0.0, |(_, n)| *n);
                let terms: f64 = self.terms.iter().map(|t| t.step * t.step * t.norm_sq).sum();
                (base + terms).sqrt()
            }
        }
    }
}

fn scaled(f: &QEstimate, s: f64) -> QEstimate {
    QEstimate::new(f.anchors().to_vec(), f.coeffs().iter().map(|c| c * s).collect(), *f.kernel())
        .expect("anchors already validated")
}

impl Policy for SoftmaxPolicy {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn action_distribution(&self, state: &[f64]) -> Vec<f64> {
        let p = softmax(&self.logits(state));
        if p.iter().any(|x| *x < MIN_PROB_WARNING) && !NEAR_DETERMINISTIC_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("policy assigns probability below {MIN_PROB_WARNING} to some action; the KL-proximal premise no longer holds");
        }
        p
    }

    fn policy_id(&self) -> String {
        format!("softmax-k{}", self.compacted_terms + self.terms.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormProxyMode {
    /// `sqrt(Σⱼ Δⱼ² bⱼᵀ𝐊ⱼbⱼ)`.
    CoefficientNorm,
    /// Always 1.
    Constant,
}

impl FromStr for NormProxyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "coefficientnorm" => Ok(Self::CoefficientNorm),
            "constant" => Ok(Self::Constant),
            other => Err(format!("unknown norm proxy mode '{other}'")),
        }
    }
}

/// Explicit `S × A` table for states observed as `[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePolicy {
    pub n_actions: usize,
    pub table: Vec<f64>,
    pub id: String,
}

impl TablePolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            table: vec![1.0 / n_actions as f64; n_states * n_actions],
            id: String::from("uniform"),
        }
    }
}

impl Policy for TablePolicy {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn action_distribution(&self, state: &[f64]) -> Vec<f64> {
        let s = state[0] as usize;
        self.table[s * self.n_actions..(s + 1) * self.n_actions].to_vec()
    }

    fn policy_id(&self) -> String {
        self.id.clone()
    }
}

/// `Σ_a π_a (Δ v_a − ln(π_a / p_a))`, with `0 ln 0 = 0`.
fn proximal_objective(pi: &[f64], p: &[f64], dv: &[f64]) -> f64 {
    let mut j = 0.0;
    for ((x, q), d) in pi.iter().zip(p).zip(dv) {
        if *x > 0.0 {
            if *q == 0.0 {
                return f64::NEG_INFINITY;
            }
            j += x * (d - (x / q).ln());
        }
    }
    j
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Point on the simplex from its first `A − 1` coordinates, or `None` if
/// outside.
fn complete(free: &[f64]) -> Option<Vec<f64>> {
    let rest = 1.0 - free.iter().sum::<f64>();
    if free.iter().any(|x| *x < 0.0) || rest < -1e-15 {
        return None;
    }
    let mut v = free.to_vec();
    v.push(rest.max(0.0));
    Some(v)
}

/// Grid search at resolution `1e−3` followed by successively finer local
/// grids; for `A ≤ 3`.
fn grid_maximizer(p: &[f64], dv: &[f64]) -> Vec<f64> {
    let a = p.len();
    let steps = 1000usize;
    let mut best = vec![1.0 / a as f64; a];
    let mut best_j = f64::NEG_INFINITY;
    let consider = |free: &[f64], best: &mut Vec<f64>, best_j: &mut f64| {
        if let Some(v) = complete(free) {
            let j = proximal_objective(&v, p, dv);
            if j > *best_j {
                *best_j = j;
                *best = v;
            }
        }
    };
    match a {
        1 => return vec![1.0],
        2 => {
            for i in 0..=steps {
                consider(&[i as f64 / steps as f64], &mut best, &mut best_j);
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    consider(&[i as f64 / steps as f64, j as f64 / steps as f64], &mut best, &mut best_j);
                }
            }
        }
        _ => unreachable!("grid search is only used for up to three actions"),
    }
    let mut h = 1.0 / steps as f64;
    for _ in 0..4 {
        h /= 10.0;
        let centre: Vec<f64> = best[..a - 1].to_vec();
        let offsets: Vec<f64> = (-10..=10).map(|k| k as f64 * h).collect();
        if a == 2 {
            for o in &offsets {
                consider(&[centre[0] + o], &mut best, &mut best_j);
            }
        } else {
            for o1 in &offsets {
                for o2 in &offsets {
                    consider(&[centre[0] + o1, centre[1] + o2], &mut best, &mut best_j);
                }
            }
        }
    }
    best
}

/// Exponentiated-gradient ascent with step 0.5 from uniform, until
/// successive iterates are within `1e−6` in total variation.
fn ascent_maximizer(p: &[f64], dv: &[f64]) -> Vec<f64> {
    let a = p.len();
    let mut pi: Vec<f64> = p.iter().map(|q| if *q > 0.0 { 1.0 } else { 0.0 }).collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= z);
    for _ in 0..10_000 {
        // ∂/∂π_a of the objective is Δv_a − ln(π_a/p_a) − 1; the constant
        // drops out after normalization.
        let logits: Vec<f64> = (0..a)
            .map(|i| {
                if pi[i] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    pi[i].ln() + 0.5 * (dv[i] - (pi[i] / p[i]).ln())
                }
            })
            .collect();
        let next = softmax(&logits);
        let moved = total_variation(&next, &pi);
        pi = next;
        if moved < 1e-6 {
            break;
        }
    }
    pi
}

/// Largest total-variation distance, over `states`, between the maximizer
/// of `Δ⟨f(s,·), π⟩ − KL(π ‖ π_old(·|s))` on the simplex and the
/// exponentiated update `π_old(·|s) e^{Δf(s,·)} / Z`.
pub fn kl_proximal_check<P: Policy + ?Sized, F: QFunction + ?Sized>(
    old: &P,
    f: &F,
    delta: f64,
    states: &[Vec<f64>],
) -> f64 {
    let a = old.num_actions();
    let mut worst: f64 = 0.0;
    for s in states {
        let p = old.action_distribution(s);
        let dv: Vec<f64> = (0..a).map(|i| delta * f.q_value(&StateAction::new(s.clone(), i))).collect();
        let logits: Vec<f64> = p
            .iter()
            .zip(&dv)
            .map(|(q, d)| if *q > 0.0 { q.ln() + d } else { f64::NEG_INFINITY })
            .collect();
        let exponentiated = softmax(&logits);
        let maximizer = if a <= 3 {
            grid_maximizer(&p, &dv)
        } else {
            ascent_maximizer(&p, &dv)
        };
        worst = worst.max(total_variation(&maximizer, &exponentiated));
    }
    worst
}
