use kernel_npg::env::{make_random_tabular, TabularMdp};
use kernel_npg::evaluation::{
    bellman_residuals, error_decomposition_residual, krr_td_closed_form, QEstimate, TdSolverConfig, TdSystem,
};
use kernel_npg::kernels::{KernelSpec, StateAction};
use kernel_npg::mdp::{sample_batch, SampleBatch, TransitionSample};
use kernel_npg::oracle::{exact_q, uniform_table};
use kernel_npg::policy::TablePolicy;
use nalgebra::{DMatrix, DVector};

/// Dense `(𝐊 + λnI − γ𝐂)b = 𝐫` built entry by entry.
fn brute_force(batch: &SampleBatch, k: &KernelSpec, lambda: f64, gamma: f64) -> DVector<f64> {
    let n = batch.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s = &batch.samples;
            let kij = k.eval(&s[i].omega0, &s[j].omega0).unwrap();
            let cij = if s[i].terminal { 0.0 } else { k.eval(&s[i].omega1, &s[j].omega0).unwrap() };
            m[(i, j)] = kij - gamma * cij;
        }
        m[(i, i)] += lambda * n as f64;
    }
    let r = DVector::from_iterator(n, batch.samples.iter().map(|s| s.reward));
    m.lu().solve(&r).unwrap()
}

fn two_by_two() -> TabularMdp {
    make_random_tabular(2, 2, 0.9, 0.0, 4).unwrap()
}

#[test]
fn self_loop_scalar_solve() {
    let w = StateAction::new(vec![0.0], 0);
    let batch = SampleBatch {
        samples: vec![TransitionSample {
            omega0: w.clone(),
            reward: 1.0,
            omega1: w.clone(),
            terminal: false,
        }],
        seed: 0,
        policy_id: "fixed".into(),
    };
    let (q, _) = krr_td_closed_form(&batch, &KernelSpec::tabular(), 0.0, 0.9).unwrap();
    assert!((q.coeffs()[0] - 10.0).abs() < 1e-12);
    assert!((q.eval(&w) - 10.0).abs() < 1e-12);
}

#[test]
fn closed_form_matches_dense_solve() {
    let mdp = two_by_two();
    let batch = sample_batch(&mdp, &TablePolicy::uniform(2, 2), 50, 13).unwrap();
    let k = KernelSpec::tabular();
    let (q, _) = krr_td_closed_form(&batch, &k, 0.01, 0.9).unwrap();
    let b = brute_force(&batch, &k, 0.01, 0.9);
    assert_eq!(q.len(), 50);
    for (x, y) in q.coeffs().iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn closed_form_matches_dense_solve_gaussian() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let samples = (0..80)
        .map(|_| TransitionSample {
            omega0: StateAction::new(vec![rng.random_range(-1.0..1.0)], rng.random_range(0..2)),
            reward: rng.random_range(-1.0..1.0),
            omega1: StateAction::new(vec![rng.random_range(-1.0..1.0)], rng.random_range(0..2)),
            terminal: rng.random_bool(0.1),
        })
        .collect();
    let batch = SampleBatch {
        samples,
        seed: 3,
        policy_id: "random".into(),
    };
    let k = KernelSpec::gaussian(0.5).unwrap();
    let (q, _) = krr_td_closed_form(&batch, &k, 0.05, 0.8).unwrap();
    let b = brute_force(&batch, &k, 0.05, 0.8);
    for (x, y) in q.coeffs().iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()), "{x} vs {y}");
    }
}

/// Plug-in LSTD on the visited pairs: `Q = r + γ P̂ Q_next`.
#[test]
fn unregularized_tabular_fit_is_the_empirical_model_solution() {
    let mdp = make_random_tabular(3, 2, 0.8, 0.0, 5).unwrap();
    let batch = sample_batch(&mdp, &TablePolicy::uniform(3, 2), 400, 2).unwrap();
    let idx = |w: &StateAction| w.state[0] as usize * 2 + w.action.index().unwrap();
    let mut counts = vec![0.0; 6];
    let mut rsum = vec![0.0; 6];
    let mut trans = DMatrix::<f64>::zeros(6, 6);
    for s in &batch.samples {
        let i = idx(&s.omega0);
        counts[i] += 1.0;
        rsum[i] += s.reward;
        trans[(i, idx(&s.omega1))] += 1.0;
    }
    assert!(counts.iter().all(|c| *c > 0.0));
    let mut a = DMatrix::<f64>::identity(6, 6);
    let mut rhs = DVector::zeros(6);
    for i in 0..6 {
        for j in 0..6 {
            a[(i, j)] -= 0.8 * trans[(i, j)] / counts[i];
        }
        rhs[i] = rsum[i] / counts[i];
    }
    let q_lstd = a.lu().solve(&rhs).unwrap();
    let (q, _) = krr_td_closed_form(&batch, &KernelSpec::tabular(), 0.0, 0.8).unwrap();
    for s in 0..3 {
        for act in 0..2 {
            let v = q.eval(&StateAction::new(vec![s as f64], act));
            assert!((v - q_lstd[s * 2 + act]).abs() < 1e-9);
        }
    }
}

#[test]
fn iteration_agrees_with_closed_form() {
    let mdp = make_random_tabular(4, 2, 0.9, 0.0, 8).unwrap();
    let batch = sample_batch(&mdp, &TablePolicy::uniform(4, 2), 300, 1).unwrap();
    let k = KernelSpec::tabular();
    let sys = TdSystem::new(&batch, &k, 0.9).unwrap();
    let lambda = 0.01;
    let (exact, _) = sys.closed_form(lambda).unwrap();
    let target = sys.values_at_anchors(&exact);
    let cfg = TdSolverConfig {
        lambda,
        tol: 1e-12,
        ..Default::default()
    };
    let (f, trace) = sys.iterate(&cfg, None, Some(&target)).unwrap();
    assert!(trace.converged);
    assert!(sys.distance(&f, &exact) <= 1e-8);
    let rho = sys.spectral_radius(trace.eta, trace.alpha);
    assert!(rho < 1.0);
    // Late error ratios never exceed the spectral radius by more than roundoff.
    let e = &trace.errors;
    let late = &e[e.len() / 2..];
    for w in late.windows(2).filter(|w| w[0] > 1e-10) {
        assert!(w[1] / w[0] <= rho + 1e-3, "{} > {rho}", w[1] / w[0]);
    }
}

#[test]
fn warm_start_reaches_the_same_fixed_point() {
    let mdp = make_random_tabular(3, 3, 0.8, 0.0, 9).unwrap();
    let batch = sample_batch(&mdp, &TablePolicy::uniform(3, 3), 200, 4).unwrap();
    let k = KernelSpec::tabular();
    let sys = TdSystem::new(&batch, &k, 0.8).unwrap();
    let (exact, _) = sys.closed_form(0.02).unwrap();
    let init = QEstimate::new(vec![StateAction::new(vec![1.0], 2)], vec![5.0], k).unwrap();
    let cfg = TdSolverConfig {
        lambda: 0.02,
        tol: 1e-12,
        ..Default::default()
    };
    let (f, _) = sys.iterate(&cfg, Some(&init), None).unwrap();
    assert!(sys.distance(&f, &exact) <= 1e-8);
}

#[test]
fn exact_q_residuals_are_centered() {
    let mdp = make_random_tabular(4, 2, 0.9, 0.0, 12).unwrap();
    let q = exact_q(&mdp, &uniform_table(&mdp));
    let batch = sample_batch(&mdp, &TablePolicy::uniform(4, 2), 10_000, 6).unwrap();
    let eps = bellman_residuals(&batch, &q, 0.9);
    let n = eps.len() as f64;
    let mean = eps.iter().sum::<f64>() / n;
    let sd = (eps.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(sd > 0.0);
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}, sd {sd}");
}

#[test]
fn decomposition_identity_and_sensitivity() {
    let mdp = make_random_tabular(3, 2, 0.9, 0.0, 17).unwrap();
    let q = exact_q(&mdp, &uniform_table(&mdp));
    let batch = sample_batch(&mdp, &TablePolicy::uniform(3, 2), 500, 3).unwrap();
    let k = KernelSpec::tabular();
    let (q_hat, _) = krr_td_closed_form(&batch, &k, 0.1, 0.9).unwrap();
    let ok = error_decomposition_residual(&batch, &q_hat, &q, 0.1, 0.9).unwrap();
    assert!(ok.residual < 1e-8, "{ok:?}");

    let compact = q_hat.compact();
    let mut c = compact.coeffs().to_vec();
    c[0] += 0.1;
    let bad = QEstimate::new(compact.anchors().to_vec(), c, k).unwrap();
    let off = error_decomposition_residual(&batch, &bad, &q, 0.1, 0.9).unwrap();
    assert!(off.residual > 1e-4, "{off:?}");
}
