//! Small statistics used by the experiment drivers: log-log rate fits,
//! medians, trailing moving averages, Halton points, schedule verdicts.

use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Real as _;

/// Ordinary least squares of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `y = slope·x + intercept`; `None` with fewer than two distinct `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<RateFit> {
    assert_eq!(x.len(), y.len(), "ols: length mismatch");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

/// OLS on `(ln x, ln y)`, skipping non-positive entries.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Option<RateFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    ols(&lx, &ly)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Population variance.
pub fn variance(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// Trailing mean over the last `window` values (fewer at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= window {
            acc -= xs[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` Halton points in `[0, 1)^dim`, starting at index `skip + 1`.
pub fn halton(dim: usize, count: usize, skip: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton: at most {} dimensions", PRIMES.len());
    (0..count as u64)
        .map(|i| (0..dim).map(|d| radical_inverse(skip + i + 1, PRIMES[d])).collect())
        .collect()
}

/// Gap curves of one step-size exponent, one per seed, equal lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRuns {
    pub exponent: f64,
    pub curves: Vec<Vec<f64>>,
}

impl ScheduleRuns {
    pub fn final_gaps(&self) -> Vec<f64> {
        self.curves.iter().filter_map(|c| c.last().copied()).collect()
    }

    pub fn mean_curve(&self) -> Vec<f64> {
        let len = self.curves.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|k| self.curves.iter().map(|c| c[k]).sum::<f64>() / self.curves.len() as f64)
            .collect()
    }

    /// Whether the seed-averaged curve ever rises by more than `tol`.
    pub fn non_monotone(&self, tol: f64) -> bool {
        self.mean_curve().windows(2).any(|w| w[1] > w[0] + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleVerdict {
    /// Mean final gap of the recommended exponent is below the fast-decay one.
    pub recommended_beats_fast: bool,
    /// The slow-decay exponent looks unstable.
    pub slow_unstable: bool,
    pub slow_non_monotone: bool,
    pub variance_ratio: f64,
    pub slow_final: f64,
    pub recommended_final: f64,
    pub fast_final: f64,
}

/// Compares a slow (`a < 0.5`), recommended, and fast (`a > 1`) exponent.
///
/// The slow schedule counts as unstable if its mean curve is non-monotone
/// with final-gap variance at least three times the recommended one, or if
/// its mean final gap is larger.
pub fn schedule_verdict(
    slow: &ScheduleRuns,
    recommended: &ScheduleRuns,
    fast: &ScheduleRuns,
    tol: f64,
) -> ScheduleVerdict {
    let fin = |r: &ScheduleRuns| mean(&r.final_gaps()).unwrap_or(f64::NAN);
    let var = |r: &ScheduleRuns| variance(&r.final_gaps()).unwrap_or(f64::NAN);
    let (s, m, f) = (fin(slow), fin(recommended), fin(fast));
    let (vs, vm) = (var(slow), var(recommended));
    let variance_ratio = if vm > 0.0 {
        vs / vm
    } else if vs > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let slow_non_monotone = slow.non_monotone(tol);
    ScheduleVerdict {
        recommended_beats_fast: m < f,
        slow_unstable: (slow_non_monotone && variance_ratio >= 3.0) || s > m,
        slow_non_monotone,
        variance_ratio,
        slow_final: s,
        recommended_final: m,
        fast_final: f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn ols_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -0.5 * v + 2.0).collect();
        let f = ols(&x, &y).unwrap();
        assert_relative_eq!(f.slope, -0.5, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-14);
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn log_log_power_law() {
        let x = [100.0, 200.0, 400.0, 800.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert_relative_eq!(log_log_fit(&x, &y).unwrap().slope, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn moving_average_constant_and_ramp() {
        assert_eq!(moving_average(&[2.0; 5], 3), vec![2.0; 5]);
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn halton_base_two_and_three() {
        let h = halton(2, 3, 0);
        assert_eq!(h[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(h[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(h[2], vec![0.75, 1.0 / 9.0]);
    }

    #[test]
    fn verdict_flags_larger_slow_gap() {
        let runs = |e: f64, last: f64| ScheduleRuns {
            exponent: e,
            curves: vec![vec![1.0, 0.5, last]; 2],
        };
        let v = schedule_verdict(&runs(0.2, 0.4), &runs(0.5, 0.1), &runs(1.5, 0.3), 1e-12);
        assert!(v.recommended_beats_fast);
        assert!(v.slow_unstable);
        assert!(!v.slow_non_monotone);
    }
}
