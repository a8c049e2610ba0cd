use ccpr::models::{induced_success_from_phi, induced_truncation, DegreeDistribution, PhiReceiver, SuccessModel};
use proptest::prelude::*;

fn poisson_pmf(n: u32, x: f64) -> f64 {
    let mut p = (-x).exp();
    for i in 1..=n {
        p *= x / i as f64;
    }
    p
}

/// `P(N <= D-1)` summed term by term, independent of the library helpers.
fn dfold_oracle(fold: u32, x: f64) -> f64 {
    (0..fold).map(|n| poisson_pmf(n, x)).sum()
}

fn degree_strategy() -> impl Strategy<Value = DegreeDistribution> {
    prop::collection::vec(0.0f64..1.0, 2..7).prop_filter_map("needs mass above degree 1", |raw| {
        let mut coeffs = vec![0.0, 0.0];
        coeffs.extend(raw);
        let total: f64 = coeffs.iter().sum();
        if total < 1e-3 {
            return None;
        }
        DegreeDistribution::new(coeffs.iter().map(|c| c / total).collect()).ok()
    })
}

proptest! {
    #[test]
    fn success_is_monotone_in_load(fold in 1u32..5, x in 0.0f64..8.0, dx in 0.0f64..2.0) {
        let model = if fold == 1 { SuccessModel::SlottedAloha } else { SuccessModel::DFold { fold } };
        let a = model.success_prob(0, &[x]).unwrap();
        let b = model.success_prob(0, &[x + dx]).unwrap();
        prop_assert!(b <= a + 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn dfold_matches_poisson_sum(fold in 1u32..6, x in 0.0f64..10.0) {
        let s = SuccessModel::DFold { fold }.success_prob(0, &[x]).unwrap();
        prop_assert!((s - dfold_oracle(fold, x)).abs() < 1e-12);
    }

    #[test]
    fn induced_dfold_matches_closed_form(fold in 1u32..5, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let receiver = PhiReceiver::DFold { fold };
        let rho = [a, b];
        let got = induced_success_from_phi(&receiver, 0, &rho, induced_truncation(&rho)).unwrap();
        prop_assert!((got - dfold_oracle(fold, a + b)).abs() < 1e-10, "{} vs {}", got, dfold_oracle(fold, a + b));
    }

    #[test]
    fn nearfar_matches_closed_forms(r1 in 0.0f64..4.0, r2 in 0.0f64..4.0) {
        let model = SuccessModel::NearFar;
        let base = (-r1 - r2).exp();
        prop_assert!((model.success_prob(0, &[r1, r2]).unwrap() - base * (1.0 + r2)).abs() < 1e-10);
        prop_assert!((model.success_prob(1, &[r1, r2]).unwrap() - base * (1.0 + r1)).abs() < 1e-10);
    }

    #[test]
    fn phi_receivers_are_all_or_nothing(fold in 1u32..4, n in prop::collection::vec(0u32..5, 2)) {
        for receiver in [PhiReceiver::DFold { fold }, PhiReceiver::NearFar] {
            let y = receiver.decode(&n);
            let fail = receiver.failure(&n);
            prop_assert!(y.iter().zip(&n).all(|(a, b)| a <= b));
            prop_assert!(y == n || y.iter().all(|&c| c == 0));
            // Closure: a decoded vector is itself decodable.
            prop_assert_eq!(receiver.decode(&y), y.clone());
            prop_assert!(fail.iter().zip(&y).zip(&n).all(|((f, d), m)| f + d == *m));
        }
    }

    #[test]
    fn phi_failure_is_monotone(fold in 1u32..4, n in prop::collection::vec(0u32..4, 2), extra in 0usize..2) {
        // Adding a packet never turns a failure into a success.
        for receiver in [PhiReceiver::DFold { fold }, PhiReceiver::NearFar] {
            let mut more = n.clone();
            more[extra] += 1;
            if !receiver.decodes_all(&n) {
                prop_assert!(!receiver.decodes_all(&more));
            }
        }
    }

    #[test]
    fn edge_function_is_monotone(degree in degree_strategy(), x in 0.0f64..1.0, dx in 0.0f64..0.5) {
        let y = (x + dx).min(1.0);
        prop_assert!(degree.edge(x) <= degree.edge(y) + 1e-15);
        prop_assert!((degree.edge(1.0) - 1.0).abs() < 1e-12);
        prop_assert!(degree.edge(0.0).abs() < 1e-15);
    }

    #[test]
    fn edge_inverse_round_trips(degree in degree_strategy(), x in 0.01f64..1.0) {
        let back = degree.edge_inverse(degree.edge(x)).unwrap();
        prop_assert!((degree.edge(back) - degree.edge(x)).abs() < 1e-10);
    }
}

#[test]
fn edge_function_is_node_derivative_over_mean() {
    let degree = DegreeDistribution::from_pairs(&[(2, 0.5102), (4, 0.4898)]).unwrap();
    for i in 1..20 {
        let x = i as f64 / 20.0;
        let h = 1e-6;
        let fd = (degree.node(x + h) - degree.node(x - h)) / (2.0 * h);
        assert!((degree.edge(x) - fd / degree.mean()).abs() < 1e-8);
    }
}

#[test]
fn mixture_success_is_weighted_sum() {
    let weights = vec![0.2, 0.3, 0.5];
    let model = SuccessModel::DFoldMixture {
        weights: weights.clone(),
    };
    for i in 0..30 {
        let x = i as f64 * 0.2;
        let want: f64 = weights
            .iter()
            .enumerate()
            .map(|(d, w)| w * dfold_oracle(d as u32 + 1, x))
            .sum();
        assert!((model.success_prob(0, &[x]).unwrap() - want).abs() < 1e-12);
    }
}
