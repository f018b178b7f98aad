//! Dense solves and spectral-radius estimates used by the TD solvers.

#[allow(unused_imports)]
use crate::math::Real as _;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Condition estimates above this are rejected.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular even after diagonal jitter {jitter:e}")]
    Singular { jitter: f64 },
    #[error("matrix is ill-conditioned (condition estimate {estimate:e})")]
    IllConditioned { estimate: f64 },
}

/// Metadata reported alongside a dense solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveInfo {
    /// Diagonal shift that was added because the first factorization failed.
    pub jitter: f64,
    /// 1-norm condition estimate (a lower bound on the true value).
    pub condition_estimate: f64,
    /// `‖A x − b‖₂` for the returned solution, measured on the unshifted matrix.
    pub residual: f64,
}

/// Solves `A x = b` by LU with partial pivoting and one step of iterative
/// refinement. If the factorization is singular, retries once with
/// `1e−10 · trace/n` added to the diagonal.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, SolveInfo), LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "solve_dense needs a square matrix");
    assert_eq!(n, b.len());
    let mut info = SolveInfo::default();
    let mut lu = a.clone().lu();
    if !lu.is_invertible() {
        let jitter = 1e-10 * (a.trace().abs() / n.max(1) as f64).max(f64::MIN_POSITIVE);
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        lu = shifted.lu();
        info.jitter = jitter;
        if !lu.is_invertible() {
            return Err(LinalgError::Singular { jitter });
        }
    }
    let mut x = lu.solve(b).ok_or(LinalgError::Singular { jitter: info.jitter })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::IllConditioned {
            estimate: f64::INFINITY,
        });
    }
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        if dx.iter().all(|v| v.is_finite()) {
            x += dx;
        }
    }
    info.residual = (b - a * &x).norm();

    // ‖A⁻¹‖₁ ≥ ‖A⁻¹ v‖₁ / ‖v‖₁ for any probe v; a few sign vectors give a
    // usable lower bound without a transposed solve.
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut inv_norm: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for probe in 0..3 {
        let v = DVector::from_fn(n, |i, _| match probe {
            0 => 1.0,
            1 => if i % 2 == 0 { 1.0 } else { -1.0 },
            _ => if rng.random::<bool>() { 1.0 } else { -1.0 },
        });
        if let Some(y) = lu.solve(&v) {
            inv_norm = inv_norm.max(y.iter().map(|t| t.abs()).sum::<f64>() / n as f64);
        }
    }
    info.condition_estimate = norm1 * inv_norm;
    if !(info.condition_estimate <= MAX_CONDITION) {
        return Err(LinalgError::IllConditioned {
            estimate: info.condition_estimate,
        });
    }
    Ok((x, info))
}

/// Largest eigenvalue modulus of a square matrix, from its real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(0.0, f64::max)
}

/// Spectral radius estimate `ρ ≈ (‖Mᵏv‖/‖v‖)^{1/k}` by repeated
/// application of `apply` to a random start vector (Gelfand's formula).
///
/// Works for non-normal matrices and complex dominant pairs, where plain
/// power iteration would not settle on a single eigenvector.
pub fn power_spectral_radius<F>(dim: usize, iters: usize, seed: u64, mut apply: F) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 || iters == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut w = alloc::vec![0.0; dim];
    let burn = iters / 2;
    let mut log_growth = 0.0;
    for it in 0..iters {
        apply(&v, &mut w);
        let norm = l2(&w);
        if norm == 0.0 || !norm.is_finite() {
            return if norm == 0.0 { 0.0 } else { f64::INFINITY };
        }
        if it >= burn {
            log_growth += norm.ln();
        }
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / norm;
        }
    }
    (log_growth / (iters - burn) as f64).exp()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = l2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
