use ccpr::evolution::{
    ccpr_evolve, cpr_evolve, one_sided_evolve, punctured_scalar_evolve, CcprSystem, Classification, EvolveOptions,
};
use ccpr::explore::{CoupledSetup, ScanMode, ScanSpec, THRESHOLD_STEP};
use ccpr::models::{CprSystem, DegreeDistribution, SlicingPolicy, SuccessModel};
use ccpr::potential::{single_system_threshold, ScalarSystem};
use proptest::prelude::*;

fn irsa(load: f64, d: usize) -> CprSystem {
    CprSystem::single_class(
        load,
        DegreeDistribution::regular(d).unwrap(),
        SuccessModel::SlottedAloha,
    )
    .unwrap()
}

fn history_opts() -> EvolveOptions {
    EvolveOptions::default().with_max_iter(5_000).with_history()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterates_decrease_and_q_tracks_p(g in 0.05f64..1.0, d in 2usize..6, w in 1usize..4, extra in 0usize..10) {
        let stages = w + extra;
        let sys = CcprSystem::punctured(irsa(g, d), stages, w).unwrap();
        let trace = ccpr_evolve(&sys, &history_opts()).unwrap();
        let degree = DegreeDistribution::regular(d).unwrap();
        for pair in trace.history.windows(2) {
            for (a, b) in pair[0].p.iter().zip(&pair[1].p) {
                prop_assert!(*b <= a + 1e-13);
            }
        }
        for it in trace.history.iter().skip(1) {
            for (p, q) in it.p.iter().zip(&it.q) {
                prop_assert!((degree.edge(*p) - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn window_one_collapses_to_base(g in 0.05f64..1.0, d in 2usize..6, stages in 1usize..8) {
        let base = cpr_evolve(&irsa(g, d), &history_opts()).unwrap();
        let coupled = ccpr_evolve(&CcprSystem::punctured(irsa(g, d), stages, 1).unwrap(), &history_opts()).unwrap();
        prop_assert_eq!(base.history.len(), coupled.history.len());
        for (b, c) in base.history.iter().zip(&coupled.history) {
            prop_assert!(c.p.iter().all(|&v| (v - b.p[0]).abs() < 1e-12));
        }
    }

    // Near a bifurcation the recursion amplifies rounding differences in the
    // load sums, so the comparison is looser than at generic loads.
    #[test]
    fn circular_uniform_equals_base(g in 0.05f64..1.2, d in 2usize..6, w in 1usize..5, extra in 0usize..8) {
        let stages = w + extra;
        let base = cpr_evolve(&irsa(g, d), &history_opts()).unwrap();
        let coupled = ccpr_evolve(&CcprSystem::circular(irsa(g, d), stages, w).unwrap(), &history_opts()).unwrap();
        prop_assert_eq!(base.history.len(), coupled.history.len());
        for (b, c) in base.history.iter().zip(&coupled.history) {
            prop_assert!(c.p.iter().all(|&v| (v - b.p[0]).abs() < 1e-10));
            prop_assert!(c.q.iter().all(|&v| (v - b.q[0]).abs() < 1e-10));
        }
    }

    #[test]
    fn one_sided_fixed_point_dominates(g in 0.5f64..1.0, d in 3usize..6, w in 2usize..4, extra in 1usize..12) {
        let stages = w + extra;
        let sys = CcprSystem::punctured(irsa(g, d), stages, w).unwrap();
        let opts = EvolveOptions::default().with_max_iter(200_000);
        let coupled = ccpr_evolve(&sys, &opts).unwrap();
        let bound = one_sided_evolve(&sys, &opts).unwrap();
        // Stage m of the punctured system sits under stage L-1-m of the
        // one-sided system. Both runs stop on a step criterion, which leaves
        // a small slack in the fixed points.
        for m in 0..stages - w + 1 {
            prop_assert!(coupled.p[m] <= bound.p[stages - 1 - m] + 1e-6);
        }
    }

    #[test]
    fn one_sided_iterates_are_ordered(g in 0.3f64..1.0, d in 3usize..6, w in 2usize..4, extra in 1usize..12) {
        let sys = CcprSystem::punctured(irsa(g, d), w + extra, w).unwrap();
        let trace = one_sided_evolve(&sys, &history_opts()).unwrap();
        for it in &trace.history {
            prop_assert!(it.p.windows(2).all(|s| s[0] <= s[1] + 1e-15));
        }
        for pair in trace.history.windows(2) {
            prop_assert!(pair[0].p.iter().zip(&pair[1].p).all(|(a, b)| *b <= a + 1e-15));
        }
    }

    #[test]
    fn final_failure_grows_with_load(g in 0.05f64..1.0, dg in 0.0f64..0.3, d in 2usize..6) {
        let opts = EvolveOptions::default().with_max_iter(20_000);
        let a = cpr_evolve(&irsa(g, d), &opts).unwrap();
        let b = cpr_evolve(&irsa(g + dg, d), &opts).unwrap();
        prop_assert!(a.p[0] <= b.p[0] + 1e-7);
    }

    #[test]
    fn specialised_punctured_path_matches_general(g in 0.1f64..1.0, d in 2usize..6, w in 1usize..4, extra in 0usize..8) {
        let stages = w + extra;
        let opts = EvolveOptions::default().with_max_iter(5_000);
        let degree = DegreeDistribution::regular(d).unwrap();
        let fast = punctured_scalar_evolve(g, &degree, &SuccessModel::SlottedAloha, w, stages, &opts).unwrap();
        let general = ccpr_evolve(&CcprSystem::punctured(irsa(g, d), stages, w).unwrap(), &opts).unwrap();
        prop_assert_eq!(fast.iterations, general.iterations);
        for (a, b) in fast.p.iter().zip(&general.p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn punctured_threshold_is_non_increasing_in_length() {
    let scan = ScanSpec::new(0.0, 1.0, THRESHOLD_STEP, ScanMode::Refining);
    for (d, w) in [(3, 2), (4, 3)] {
        let thresholds: Vec<f64> = [10, 20, 30]
            .iter()
            .map(|&stages| {
                CoupledSetup {
                    degree: DegreeDistribution::regular(d).unwrap(),
                    model: SuccessModel::SlottedAloha,
                    window: w,
                    stages,
                    options: EvolveOptions::default(),
                }
                .threshold(&scan)
                .unwrap()
                .g_star
            })
            .collect();
        for t in thresholds.windows(2) {
            assert!(t[1] <= t[0] + THRESHOLD_STEP + 1e-12, "d={d} w={w}: {thresholds:?}");
        }
    }
}

#[test]
fn coupling_raises_the_threshold_above_the_single_system() {
    let scan = ScanSpec::new(0.0, 1.0, THRESHOLD_STEP, ScanMode::Refining);
    for d in 3..=5 {
        let gs = single_system_threshold(&ScalarSystem::irsa(d).unwrap()).unwrap();
        let setup = |w| CoupledSetup {
            degree: DegreeDistribution::regular(d).unwrap(),
            model: SuccessModel::SlottedAloha,
            window: w,
            stages: 40,
            options: EvolveOptions::default(),
        };
        let one = setup(1).threshold(&scan).unwrap().g_star;
        let two = setup(2).threshold(&scan).unwrap().g_star;
        // The uncoupled scan lands on the grid point just below G_s*.
        assert!(one <= gs && gs - one < THRESHOLD_STEP, "d={d}: {one} vs {gs}");
        assert!(two > one);
    }
}

#[test]
fn two_class_probe_stage_agrees_with_all_stages_below_threshold() {
    let base = CprSystem::two_class(
        SlicingPolicy::CompleteSharing,
        [0.2, 0.3],
        [
            DegreeDistribution::regular(5).unwrap(),
            DegreeDistribution::from_pairs(&[(2, 0.5102), (4, 0.4898)]).unwrap(),
        ],
    )
    .unwrap();
    let trace = ccpr_evolve(&CcprSystem::punctured(base, 40, 2).unwrap(), &EvolveOptions::sweep()).unwrap();
    assert!(trace.is_stable(Classification::AllStages));
    assert!(trace.is_stable(Classification::ProbeStage(19)));
}
