use ccpr::models::{DegreeDistribution, SuccessModel};
use ccpr::potential::{
    balance_value, energy_gap, k_fh_constant, k_fh_constant_grid, minimum_unstable_fixed_point, potential_threshold,
    potential_upper_bound, potential_value, saturation_window_bound, single_system_threshold, IntegralMethod,
    ScalarSystem,
};
use proptest::prelude::*;

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `D - e^{-x} Σ_{τ<D} (D-τ) x^τ/τ!`, written out literally.
fn dfold_integral_literal(fold: u32, x: f64) -> f64 {
    let sum: f64 = (0..fold)
        .map(|t| (fold - t) as f64 * x.powi(t as i32) / factorial(t))
        .sum();
    fold as f64 - (-x).exp() * sum
}

/// `U(p;G)` for `Λ(x) = x^d` and a D-fold receiver, from the literal
/// integral above.
fn potential_oracle(d: usize, fold: u32, p: f64, g: f64) -> f64 {
    let lam = p.powi(d as i32 - 1);
    let m = d as f64;
    lam * (p - 1.0) - p.powi(d as i32) / m + dfold_integral_literal(fold, g * m * lam) / (g * m)
}

fn model(fold: u32) -> SuccessModel {
    if fold == 1 {
        SuccessModel::SlottedAloha
    } else {
        SuccessModel::DFold { fold }
    }
}

fn system(d: usize, fold: u32) -> ScalarSystem {
    ScalarSystem::new(DegreeDistribution::regular(d).unwrap(), model(fold)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn potential_decreases_in_load(d in 2usize..7, fold in 1u32..4, p in 0.0f64..=1.0, g in 0.01f64..3.0, dg in 0.0f64..1.0) {
        let sys = system(d, fold);
        let a = potential_value(&sys, p, g).unwrap();
        let b = potential_value(&sys, p, g + dg).unwrap();
        prop_assert!(b <= a + 1e-14);
    }

    #[test]
    fn balance_is_the_p_derivative(d in 2usize..7, fold in 1u32..4, p in 0.01f64..0.99, g in 0.05f64..3.0) {
        let sys = system(d, fold);
        let h = 1e-6;
        let fd = (potential_value(&sys, p + h, g).unwrap() - potential_value(&sys, p - h, g).unwrap()) / (2.0 * h);
        prop_assert!((fd - balance_value(&sys, p, g).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn closed_form_matches_literal_and_quadrature(d in 2usize..7, fold in 1u32..5, p in 0.0f64..=1.0, g in 0.05f64..4.0) {
        let closed = system(d, fold);
        let quad = closed.clone().with_method(IntegralMethod::Quadrature);
        let u = potential_value(&closed, p, g).unwrap();
        prop_assert!((u - potential_value(&quad, p, g).unwrap()).abs() < 1e-10);
        if p > 0.0 {
            prop_assert!((u - potential_oracle(d, fold, p, g)).abs() < 1e-10);
        }
    }

    #[test]
    fn potential_vanishes_at_the_origin(d in 2usize..7, fold in 1u32..4, g in 0.0f64..4.0) {
        prop_assert_eq!(potential_value(&system(d, fold), 0.0, g).unwrap(), 0.0);
    }
}

#[test]
fn thresholds_are_strictly_ordered() {
    for fold in 1..=3 {
        for d in 3..=8 {
            let sys = system(d, fold);
            let gs = single_system_threshold(&sys).unwrap();
            let gc = potential_threshold(&sys).unwrap();
            let gu = potential_upper_bound(&sys).unwrap();
            assert!(gs < gc && gc < gu, "D={fold} d={d}: {gs} {gc} {gu}");
            assert!(gu <= fold as f64);
        }
    }
}

#[test]
fn irregular_thresholds_are_ordered() {
    let degree = DegreeDistribution::from_pairs(&[(2, 0.5102), (4, 0.4898)]).unwrap();
    let sys = ScalarSystem::new(degree, SuccessModel::SlottedAloha).unwrap();
    let gs = single_system_threshold(&sys).unwrap();
    let gc = potential_threshold(&sys).unwrap();
    let gu = potential_upper_bound(&sys).unwrap();
    assert!(gs < gc && gc < gu, "{gs} {gc} {gu}");
    // The single-system threshold of this distribution is close to 0.868.
    assert!((gs - 0.868).abs() < 1e-3, "{gs}");
}

#[test]
fn unstable_point_and_gap_shrink_with_load() {
    let sys = ScalarSystem::irsa(3).unwrap();
    let gs = single_system_threshold(&sys).unwrap();
    let gc = potential_threshold(&sys).unwrap();
    let loads: Vec<f64> = (1..10).map(|i| gs + (gc - gs) * i as f64 / 10.0).collect();
    let u: Vec<f64> = loads
        .iter()
        .map(|&g| minimum_unstable_fixed_point(&sys, g).unwrap())
        .collect();
    let gap: Vec<f64> = loads.iter().map(|&g| energy_gap(&sys, g).unwrap()).collect();
    let window: Vec<f64> = loads
        .iter()
        .map(|&g| saturation_window_bound(&sys, g).unwrap())
        .collect();
    assert!(u.windows(2).all(|w| w[1] < w[0]), "{u:?}");
    assert!(gap.windows(2).all(|w| w[1] < w[0]), "{gap:?}");
    assert!(gap.iter().all(|&e| e > 0.0));
    assert!(window.windows(2).all(|w| w[1] > w[0]), "{window:?}");
}

#[test]
fn analytic_constant_matches_dense_grid() {
    for fold in 1..=3 {
        for d in 3..=6 {
            let sys = system(d, fold);
            for g in [0.3, 0.8, 1.5] {
                let exact = k_fh_constant(&sys, g).unwrap();
                let grid = k_fh_constant_grid(&sys, g, 100_001).unwrap();
                assert!(
                    grid <= exact + 1e-9 && exact - grid < 1e-3 * exact,
                    "D={fold} d={d} G={g}: {exact} vs {grid}"
                );
            }
        }
    }
}

#[test]
fn upper_bound_zeroes_the_potential_at_one() {
    for fold in 1..=3 {
        for d in 3..=6 {
            let sys = system(d, fold);
            let gu = potential_upper_bound(&sys).unwrap();
            assert!(potential_value(&sys, 1.0, gu).unwrap().abs() < 1e-10);
            assert!(potential_value(&sys, 1.0, gu * 0.99).unwrap() > 0.0);
        }
    }
}
