use kernel_npg::env::make_random_tabular;
use kernel_npg::oracle::{
    exact_q, expected_total_reward, optimal_policy, performance_difference, state_transition_matrix, uniform_table,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_policy(s: usize, a: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t = Vec::with_capacity(s * a);
    for _ in 0..s {
        let row: Vec<f64> = (0..a).map(|_| rng.random_range(0.01..1.0)).collect();
        let z: f64 = row.iter().sum();
        t.extend(row.into_iter().map(|x| x / z));
    }
    t
}

#[test]
fn exact_q_matches_evaluation_iteration() {
    let mdp = make_random_tabular(4, 2, 0.9, 0.0, 31).unwrap();
    let pi = uniform_table(&mdp);
    let q = exact_q(&mdp, &pi);
    let mut it = vec![0.0; 8];
    for _ in 0..2000 {
        let next: Vec<f64> = (0..8)
            .map(|sa| {
                let (s, a) = (sa / 2, sa % 2);
                let ev: f64 = (0..4)
                    .map(|t| mdp.p(s, a, t) * (0..2).map(|b| pi[t * 2 + b] * it[t * 2 + b]).sum::<f64>())
                    .sum();
                mdp.r(s, a) + 0.9 * ev
            })
            .collect();
        it = next;
    }
    for sa in 0..8 {
        assert!((q.get(sa / 2, sa % 2) - it[sa]).abs() < 1e-12);
    }
}

#[test]
fn optimal_distribution_is_stationary() {
    let mdp = make_random_tabular(5, 3, 0.9, 0.2, 2).unwrap();
    let opt = optimal_policy(&mdp);
    let p = state_transition_matrix(&mdp, &opt.policy);
    for t in 0..5 {
        let v: f64 = (0..5).map(|s| opt.nu[s] * p[(s, t)]).sum();
        assert!((v - opt.nu[t]).abs() < 1e-10);
    }
    assert!((opt.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn optimal_policy_dominates_random_policies() {
    let mdp = make_random_tabular(5, 3, 0.9, 0.0, 7).unwrap();
    let opt = optimal_policy(&mdp);
    let best = expected_total_reward(&mdp, &opt.policy, &opt.nu);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let pi = random_policy(5, 3, &mut rng);
        assert!(best >= expected_total_reward(&mdp, &pi, &opt.nu) - 1e-12);
    }
}

#[test]
fn performance_difference_both_sides_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..100 {
        let mdp = make_random_tabular(4, 3, 0.85, 0.0, seed).unwrap();
        let opt = optimal_policy(&mdp);
        let pi = random_policy(4, 3, &mut rng);
        let (gap, rhs) = performance_difference(&mdp, &pi, &opt);
        assert!((gap - rhs).abs() < 1e-10, "seed {seed}: {gap} vs {rhs}");
    }
}
