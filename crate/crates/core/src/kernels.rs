//! Kernel functions on state-action pairs and Gram matrix construction.
//!
//! Every kernel here is stationary and normalized so that `K(ω, ω) = 1`.
//! The tabular delta kernel makes each distinct pair an orthonormal feature;
//! the radial families act on the state (times an action indicator) or on
//! the concatenated `(state, action)` vector.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

/// Action component of a state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Action::Discrete(_) => 1,
            Action::Continuous(v) => v.len(),
        }
    }
}

/// A point `ω = (s, a)` of the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateAction {
    pub state: Vec<f64>,
    pub action: Action,
}

impl StateAction {
    pub fn new(state: Vec<f64>, action: usize) -> Self {
        Self {
            state,
            action: Action::Discrete(action),
        }
    }

    pub fn continuous(state: Vec<f64>, action: Vec<f64>) -> Self {
        Self {
            state,
            action: Action::Continuous(action),
        }
    }

    /// Bit-exact identity key, used to group repeated anchors.
    pub(crate) fn key(&self) -> (Vec<u64>, Vec<u64>) {
        let s = self.state.iter().map(|x| x.to_bits()).collect();
        let a = match &self.action {
            Action::Discrete(i) => alloc::vec![*i as u64],
            Action::Continuous(v) => v.iter().map(|x| x.to_bits()).collect(),
        };
        (s, a)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("state dimension mismatch: {left} vs {right}")]
    StateDimension { left: usize, right: usize },
    #[error("action kinds or dimensions are incompatible")]
    ActionMismatch,
    #[error("length scale must be positive and finite, got {0}")]
    LengthScale(f64),
    #[error("smoothness must be positive and finite, got {0}")]
    Smoothness(f64),
    #[error("Matérn order nu = m - d/2 = {nu} is not positive (m = {m}, d = {d})")]
    MaternOrder { nu: f64, m: f64, d: usize },
    #[error("kernel diagonal is unbounded or not finite at a probe point")]
    UnboundedDiagonal,
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: alloc::string::String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    TabularDelta,
    GaussianRbf,
    LaplaceNtk,
    SobolevMatern,
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" | "tabular-delta" | "TabularDelta" => Ok(Self::TabularDelta),
            "gaussian" | "gaussian-rbf" | "GaussianRBF" | "GaussianRbf" => Ok(Self::GaussianRbf),
            "laplace" | "laplace-ntk" | "ntk" | "LaplaceNTK" | "LaplaceNtk" => Ok(Self::LaplaceNtk),
            "sobolev" | "matern" | "sobolev-matern" | "SobolevMatern" => Ok(Self::SobolevMatern),
            other => Err(KernelError::Unknown {
                what: "kernel family",
                name: other.into(),
            }),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TabularDelta => "tabular",
            Self::GaussianRbf => "gaussian",
            Self::LaplaceNtk => "laplace",
            Self::SobolevMatern => "sobolev",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionCoupling {
    /// `K((s,a),(s',a')) = K_S(s,s') · 1[a = a']`.
    DeltaOnAction,
    /// Radial kernel applied to the concatenated `(s, a)` vector.
    JointKernel,
}

impl FromStr for ActionCoupling {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delta" | "delta-on-action" | "DeltaOnAction" => Ok(Self::DeltaOnAction),
            "joint" | "joint-kernel" | "JointKernel" => Ok(Self::JointKernel),
            other => Err(KernelError::Unknown {
                what: "action coupling",
                name: other.into(),
            }),
        }
    }
}

/// Immutable kernel description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    length_scale: f64,
    smoothness: f64,
    coupling: ActionCoupling,
}

impl KernelSpec {
    /// Builds and validates a kernel. `smoothness` is only read by
    /// [`KernelFamily::SobolevMatern`].
    pub fn new(
        family: KernelFamily,
        length_scale: f64,
        smoothness: f64,
        coupling: ActionCoupling,
    ) -> Result<Self, KernelError> {
        if family != KernelFamily::TabularDelta && !(length_scale > 0.0 && length_scale.is_finite())
        {
            return Err(KernelError::LengthScale(length_scale));
        }
        if family == KernelFamily::SobolevMatern && !(smoothness > 0.0 && smoothness.is_finite()) {
            return Err(KernelError::Smoothness(smoothness));
        }
        let spec = Self {
            family,
            length_scale,
            smoothness,
            coupling,
        };
        spec.check_diagonal()?;
        Ok(spec)
    }

    pub fn tabular() -> Self {
        Self {
            family: KernelFamily::TabularDelta,
            length_scale: 1.0,
            smoothness: 1.0,
            coupling: ActionCoupling::DeltaOnAction,
        }
    }

    pub fn gaussian(length_scale: f64) -> Result<Self, KernelError> {
        Self::new(
            KernelFamily::GaussianRbf,
            length_scale,
            1.0,
            ActionCoupling::DeltaOnAction,
        )
    }

    pub fn laplace(length_scale: f64) -> Result<Self, KernelError> {
        Self::new(
            KernelFamily::LaplaceNtk,
            length_scale,
            1.0,
            ActionCoupling::DeltaOnAction,
        )
    }

    pub fn sobolev(length_scale: f64, smoothness: f64) -> Result<Self, KernelError> {
        Self::new(
            KernelFamily::SobolevMatern,
            length_scale,
            smoothness,
            ActionCoupling::DeltaOnAction,
        )
    }

    pub fn with_coupling(mut self, coupling: ActionCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn coupling(&self) -> ActionCoupling {
        self.coupling
    }

    /// Upper bound on `K(ω, ω)`.
    pub fn k_max(&self) -> f64 {
        1.0
    }

    fn check_diagonal(&self) -> Result<(), KernelError> {
        // Matérn orders are resolved per input dimension, so probe the
        // dimensions a radial kernel is likely to see.
        for dim in 1..=8usize {
            if self.family == KernelFamily::SobolevMatern && self.matern_order(dim).is_err() {
                continue;
            }
            let p = StateAction::new(alloc::vec![0.37; dim], 0);
            let q = StateAction::new(alloc::vec![1.0e3; dim], 0);
            for w in [&p, &q] {
                let v = self.eval_unchecked(w, w);
                if !v.is_finite() || v > self.k_max() + 1e-12 {
                    return Err(KernelError::UnboundedDiagonal);
                }
            }
        }
        Ok(())
    }

    /// Matérn order `ν = m − d/2` for inputs of dimension `d`.
    pub fn matern_order(&self, dim: usize) -> Result<f64, KernelError> {
        let nu = self.smoothness - dim as f64 / 2.0;
        if nu > 0.0 {
            Ok(nu)
        } else {
            Err(KernelError::MaternOrder {
                nu,
                m: self.smoothness,
                d: dim,
            })
        }
    }

    /// Input dimension seen by the radial part for a given pair layout.
    pub fn radial_dim(&self, point: &StateAction) -> usize {
        match self.coupling {
            ActionCoupling::DeltaOnAction => point.state.len(),
            ActionCoupling::JointKernel => point.state.len() + point.action.dim(),
        }
    }

    /// Checks that two points can be fed to this kernel.
    pub fn check_compatible(&self, a: &StateAction, b: &StateAction) -> Result<(), KernelError> {
        if a.state.len() != b.state.len() {
            return Err(KernelError::StateDimension {
                left: a.state.len(),
                right: b.state.len(),
            });
        }
        match (&a.action, &b.action) {
            (Action::Discrete(_), Action::Discrete(_)) => {}
            (Action::Continuous(x), Action::Continuous(y)) if x.len() == y.len() => {}
            _ => return Err(KernelError::ActionMismatch),
        }
        if self.family == KernelFamily::SobolevMatern {
            self.matern_order(self.radial_dim(a))?;
        }
        Ok(())
    }

    /// `K(a, b)` with dimension checks.
    pub fn eval(&self, a: &StateAction, b: &StateAction) -> Result<f64, KernelError> {
        self.check_compatible(a, b)?;
        Ok(self.eval_unchecked(a, b))
    }

    /// `K(a, b)` for points already known to be compatible.
    pub fn eval_unchecked(&self, a: &StateAction, b: &StateAction) -> f64 {
        if self.family == KernelFamily::TabularDelta {
            return if same_point(a, b) { 1.0 } else { 0.0 };
        }
        let sq = match self.coupling {
            ActionCoupling::DeltaOnAction => {
                if a.action != b.action {
                    return 0.0;
                }
                squared_distance(&a.state, &b.state)
            }
            ActionCoupling::JointKernel => {
                squared_distance(&a.state, &b.state) + action_squared_distance(&a.action, &b.action)
            }
        };
        let dim = self.radial_dim(a);
        self.radial(sq, dim)
    }

    fn radial(&self, sq_dist: f64, dim: usize) -> f64 {
        let l = self.length_scale;
        match self.family {
            KernelFamily::TabularDelta => unreachable!("delta kernel is not radial"),
            KernelFamily::GaussianRbf => (-sq_dist / (l * l)).exp(),
            KernelFamily::LaplaceNtk => (-sq_dist.sqrt() / l).exp(),
            KernelFamily::SobolevMatern => {
                // Orders were validated by `check_compatible`/`gram`.
                let nu = self.smoothness - dim as f64 / 2.0;
                matern(sq_dist.sqrt() / l, nu)
            }
        }
    }
}

fn same_point(a: &StateAction, b: &StateAction) -> bool {
    let bits_eq = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
    };
    bits_eq(&a.state, &b.state)
        && match (&a.action, &b.action) {
            (Action::Discrete(x), Action::Discrete(y)) => x == y,
            (Action::Continuous(x), Action::Continuous(y)) => bits_eq(x, y),
            _ => false,
        }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn action_squared_distance(a: &Action, b: &Action) -> f64 {
    match (a, b) {
        (Action::Discrete(x), Action::Discrete(y)) => {
            let d = *x as f64 - *y as f64;
            d * d
        }
        (Action::Continuous(x), Action::Continuous(y)) => squared_distance(x, y),
        _ => f64::INFINITY,
    }
}

/// Matérn correlation `2^{1−ν}/Γ(ν) (√(2ν) r)^ν K_ν(√(2ν) r)` with unit scale.
pub fn matern(r: f64, nu: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    let x = (2.0 * nu).sqrt() * r;
    // Half-integer orders have elementary closed forms.
    if (nu - 0.5).abs() < 1e-12 {
        return (-x).exp();
    }
    if (nu - 1.5).abs() < 1e-12 {
        return (1.0 + x) * (-x).exp();
    }
    if (nu - 2.5).abs() < 1e-12 {
        return (1.0 + x + x * x / 3.0) * (-x).exp();
    }
    if x < 1e-8 {
        return 1.0;
    }
    let log_scale = (1.0 - nu) * core::f64::consts::LN_2 - libm::lgamma(nu) + nu * x.ln();
    let v = log_scale.exp() * bessel_k(nu, x);
    v.clamp(0.0, 1.0)
}

/// Modified Bessel function of the second kind, `K_ν(x)` for `x > 0`,
/// from `∫₀^∞ exp(−x cosh t) cosh(νt) dt` by the trapezoid rule, which is
/// exponentially accurate for this analytic, doubly-exponentially decaying
/// integrand: analyticity in `|Im t| < π/2` puts the error near `exp(−π²/h)`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    // Integrate where the exponent is within ~745 of its maximum.
    let t_max = ((745.0 + x) / x).acosh().max(1.0) + 1.0;
    let h = (t_max / 64.0).min(0.05);
    let steps = (t_max / h).ceil() as usize;
    let mut sum = 0.5 * (-x).exp();
    for i in 1..=steps {
        let t = i as f64 * h;
        let term = (-x * t.cosh()).exp() * (nu * t).cosh();
        sum += if i == steps { 0.5 * term } else { term };
    }
    sum * h
}

/// Matrix `G[i, j] = K(rows[i], cols[j])`.
///
/// When `rows` and `cols` are the same slice only the upper triangle is
/// evaluated and mirrored, so the result is exactly symmetric.
pub fn gram(
    spec: &KernelSpec,
    rows: &[StateAction],
    cols: &[StateAction],
) -> Result<DMatrix<f64>, KernelError> {
    if let (Some(r0), Some(c0)) = (rows.first(), cols.first()) {
        for p in rows.iter().chain(cols) {
            spec.check_compatible(r0, p)?;
        }
        spec.check_compatible(r0, c0)?;
    }
    let same = core::ptr::eq(rows, cols);
    let mut g = DMatrix::zeros(rows.len(), cols.len());
    if same {
        for i in 0..rows.len() {
            for j in i..cols.len() {
                let v = spec.eval_unchecked(&rows[i], &cols[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    } else {
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                g[(i, j)] = spec.eval_unchecked(r, c);
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn sa(s: f64, a: usize) -> StateAction {
        StateAction::new(vec![s], a)
    }

    #[test]
    fn gaussian_diagonal_is_one() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let p = StateAction::new(vec![0.3, -1.2], 1);
        assert_eq!(k.eval(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn tabular_action_indicator() {
        let k = KernelSpec::tabular();
        assert_eq!(k.eval(&sa(3.0, 1), &sa(3.0, 2)).unwrap(), 0.0);
        assert_eq!(k.eval(&sa(3.0, 1), &sa(3.0, 1)).unwrap(), 1.0);
        assert_eq!(k.eval(&sa(2.0, 1), &sa(3.0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_unit_distance() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let v = k.eval(&sa(0.0, 0), &sa(1.0, 0)).unwrap();
        assert_relative_eq!(v, 0.367_879_441_171_442_3, epsilon = 1e-15);
        assert_eq!(k.eval(&sa(0.0, 0), &sa(1.0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn joint_kernel_sees_action_distance() {
        let k = KernelSpec::gaussian(1.0)
            .unwrap()
            .with_coupling(ActionCoupling::JointKernel);
        let v = k.eval(&sa(0.0, 0), &sa(0.0, 1)).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let a = StateAction::new(vec![0.0], 0);
        let b = StateAction::new(vec![0.0, 1.0], 0);
        assert!(matches!(
            k.eval(&a, &b),
            Err(KernelError::StateDimension { left: 1, right: 2 })
        ));
        let c = StateAction::continuous(vec![0.0], vec![1.0]);
        assert_eq!(k.eval(&a, &c), Err(KernelError::ActionMismatch));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::laplace(f64::NAN).is_err());
        assert!(KernelSpec::sobolev(1.0, -1.0).is_err());
        // m = 1 is too rough for d = 2 inputs.
        let k = KernelSpec::sobolev(1.0, 1.0).unwrap();
        let a = StateAction::new(vec![0.0, 0.0], 0);
        assert!(matches!(k.eval(&a, &a), Err(KernelError::MaternOrder { .. })));
    }

    #[test]
    fn matern_half_integers_match_quadrature() {
        for &nu in &[0.5f64, 1.5, 2.5] {
            for &r in &[0.01f64, 0.3, 1.0, 2.7, 6.0] {
                let x = (2.0 * nu).sqrt() * r;
                let quad = ((1.0 - nu) * core::f64::consts::LN_2 - libm::lgamma(nu) + nu * x.ln())
                    .exp()
                    * bessel_k(nu, x);
                assert_relative_eq!(matern(r, nu), quad, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn bessel_k_reference_values() {
        // K_0(1) and K_1(2) from standard tables.
        assert_relative_eq!(bessel_k(0.0, 1.0), 0.421_024_438_240_708_3, max_relative = 1e-12);
        assert_relative_eq!(bessel_k(1.0, 2.0), 0.139_865_881_816_522_4, max_relative = 1e-12);
    }

    #[test]
    fn single_point_gram() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = vec![sa(0.4, 0)];
        let g = gram(&k, &pts, &pts).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn tabular_gram_of_distinct_points_is_identity() {
        let pts = vec![sa(0.0, 0), sa(0.0, 1), sa(1.0, 0), sa(2.0, 1)];
        let g = gram(&KernelSpec::tabular(), &pts, &pts).unwrap();
        assert_eq!(g, DMatrix::identity(4, 4));
    }

    #[test]
    fn gaussian_gram_on_a_line() {
        let pts = vec![sa(0.0, 0), sa(1.0, 0), sa(2.0, 0)];
        let g = gram(&KernelSpec::gaussian(1.0).unwrap(), &pts, &pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = i as f64 - j as f64;
                assert_relative_eq!(g[(i, j)], (-d * d).exp(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cross_gram_shape() {
        let rows = vec![sa(0.0, 0), sa(1.0, 0)];
        let cols = vec![sa(0.5, 0), sa(1.5, 1), sa(2.0, 0)];
        let g = gram(&KernelSpec::laplace(1.0).unwrap(), &rows, &cols).unwrap();
        assert_eq!(g.shape(), (2, 3));
        assert_relative_eq!(g[(1, 0)], (-0.5f64).exp(), epsilon = 1e-15);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn parse_family_names() {
        assert_eq!("gaussian".parse::<KernelFamily>().unwrap(), KernelFamily::GaussianRbf);
        assert_eq!("ntk".parse::<KernelFamily>().unwrap(), KernelFamily::LaplaceNtk);
        assert!("polynomial".parse::<KernelFamily>().is_err());
        assert_eq!("joint".parse::<ActionCoupling>().unwrap(), ActionCoupling::JointKernel);
    }
}
