//! Outer bounds on stability regions from affine capacity envelopes.
//!
//! An envelope `(b, B)` of a φ-receiver promises `Σ b_k n_k <= B` for every
//! decodable count vector `n`. Since every stable class-`k` load must leave
//! as decoded packets, `Σ b_k G_k` cannot exceed the expected value of
//! `min(Σ b_k X_k, B)` at a receiver, with `Σ b_k X_k ~ Poisson(μ_j)`.

use serde::Serialize;

use crate::error::{check_non_negative, Error, Result};
use crate::models::{CprSystem, DegreeDistribution, PhiReceiver, SlicingPolicy, SuccessModel, SUM_TOLERANCE};
use crate::numeric::{bisect, golden_section_min, poisson_upper_tail};

/// Binary weights `b` and bound `B` of an affine capacity envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CapacityEnvelope {
    weights: Vec<u32>,
    bound: u32,
}

impl CapacityEnvelope {
    pub fn new(weights: Vec<u32>, bound: u32) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidEnvelope("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|&&w| w > 1) {
            return Err(Error::InvalidEnvelope(format!("weight {w} is not binary")));
        }
        if bound == 0 {
            return Err(Error::InvalidEnvelope("bound must be positive".into()));
        }
        Ok(Self { weights, bound })
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    /// Label such as `(1,0)/1`.
    pub fn label(&self) -> String {
        let w: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        format!("({})/{}", w.join(","), self.bound)
    }

    /// Brute-force check of `Σ b_k n_k <= B` over every decodable
    /// `n ∈ {0..=max_count}^K`.
    pub fn is_valid_for(&self, receiver: &PhiReceiver, max_count: u32) -> bool {
        let k = self.weights.len();
        let mut n = vec![0u32; k];
        loop {
            if receiver.decodes_all(&n) {
                let weighted: u32 = n.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
                if weighted > self.bound {
                    return false;
                }
            }
            let mut c = 0;
            loop {
                if c == k {
                    return true;
                }
                n[c] += 1;
                if n[c] > max_count {
                    n[c] = 0;
                    c += 1;
                } else {
                    break;
                }
            }
        }
    }
}

/// Outcome of one outer-bound constraint `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundVerdict {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; non-negative iff the constraint holds.
    pub slack: f64,
}

impl BoundVerdict {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}

/// `E[min(N, B)]` for `N ~ Poisson(μ)`, i.e.
/// `Σ_{τ<B} τ e^{-μ}μ^τ/τ! + B(1 - Σ_{τ<B} e^{-μ}μ^τ/τ!)`, summed as
/// `Σ_{t<B} P(N > t)` to avoid cancellation at small `μ`.
pub fn truncated_poisson_mean(mu: f64, bound: u32) -> f64 {
    (0..bound).map(|t| poisson_upper_tail(t, mu)).sum()
}

/// φ-receiver behind a success model, where there is one.
pub fn phi_receiver_of(model: &SuccessModel) -> Option<PhiReceiver> {
    match model {
        SuccessModel::SlottedAloha => Some(PhiReceiver::DFold { fold: 1 }),
        SuccessModel::DFold { fold } => Some(PhiReceiver::DFold { fold: *fold }),
        SuccessModel::NearFar => Some(PhiReceiver::NearFar),
        SuccessModel::DFoldMixture { .. } => None,
    }
}

/// Count range over which envelopes are brute-force validated.
const ENVELOPE_CHECK_RANGE: u32 = 6;

/// Evaluates `Σ b_k G_k <= Σ_j F_j E[min(Poisson(μ_j), B)]` with
/// `μ_j = Σ_k b_k G_k Λ'_k(1) r_{k,j} / F_j`.
///
/// The envelope is validated against every receiver class first.
pub fn outer_bound_satisfied(system: &CprSystem, envelope: &CapacityEnvelope) -> Result<BoundVerdict> {
    let kk = system.user_classes();
    if envelope.weights.len() != kk {
        return Err(Error::InvalidEnvelope(format!(
            "{} weights for {kk} user classes",
            envelope.weights.len()
        )));
    }
    for model in system.receivers() {
        let receiver = phi_receiver_of(model)
            .ok_or_else(|| Error::InvalidEnvelope(format!("{model:?} is not induced from a φ-receiver")))?;
        if !envelope.is_valid_for(&receiver, ENVELOPE_CHECK_RANGE) {
            return Err(Error::InvalidEnvelope(format!(
                "{} is not a capacity envelope of {receiver:?}",
                envelope.label()
            )));
        }
    }
    let b = |k: usize| envelope.weights[k] as f64;
    let lhs: f64 = (0..kk).map(|k| b(k) * system.loads()[k]).sum();
    let rhs: f64 = (0..system.receiver_classes())
        .map(|j| {
            let f = system.partition()[j];
            let mu: f64 = (0..kk)
                .map(|k| b(k) * system.loads()[k] * system.degrees()[k].mean() * system.routing()[k][j] / f)
                .sum();
            f * truncated_poisson_mean(mu, envelope.bound)
        })
        .sum();
    Ok(BoundVerdict::new(lhs, rhs))
}

fn check_weights(weights: &[f64]) -> Result<()> {
    SuccessModel::DFoldMixture {
        weights: weights.to_vec(),
    }
    .validate()
    .map_err(|_| {
        let total: f64 = weights.iter().sum();
        Error::InvalidModel(format!(
            "mixture weights must lie in [0, 1] and sum to 1 within {SUM_TOLERANCE}, got sum {total}"
        ))
    })
}

fn mixture_rhs(load: f64, mean: f64, weights: &[f64]) -> f64 {
    let x = load * mean;
    weights
        .iter()
        .enumerate()
        .map(|(i, pi)| pi * truncated_poisson_mean(x, i as u32 + 1))
        .sum()
}

/// `G <= Σ_D π_D (D - Σ_{τ<D} (D-τ) e^{-x} x^τ/τ!)` with `x = GΛ'(1)`;
/// `weights[i]` is `π_{i+1}`.
pub fn dfold_mixture_bound(load: f64, degree: &DegreeDistribution, weights: &[f64]) -> Result<BoundVerdict> {
    check_non_negative("G", load)?;
    check_weights(weights)?;
    Ok(BoundVerdict::new(load, mixture_rhs(load, degree.mean(), weights)))
}

/// Largest load satisfying [`dfold_mixture_bound`], to 1e-12.
pub fn dfold_mixture_bound_root(degree: &DegreeDistribution, weights: &[f64]) -> Result<f64> {
    check_weights(weights)?;
    let slack = |g: f64| mixture_rhs(g, degree.mean(), weights) - g;
    let mut hi = 1.0;
    while slack(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NotBracketed {
                what: "D-fold mixture bound",
                lo: 0.0,
                hi,
            });
        }
    }
    bisect(slack, 1e-6, hi, 1e-12, "D-fold mixture bound")
}

/// The three near-far envelope bounds for one receiver class:
/// `(1,0)/1`, `(0,1)/1` and `(1,1)/2`, in that order.
pub fn nearfar_bounds(
    g1: f64,
    g2: f64,
    degree1: &DegreeDistribution,
    degree2: &DegreeDistribution,
) -> Result<[BoundVerdict; 3]> {
    check_non_negative("G1", g1)?;
    check_non_negative("G2", g2)?;
    let x1 = g1 * degree1.mean();
    let x2 = g2 * degree2.mean();
    let x = x1 + x2;
    let first = BoundVerdict::new(g1, -(-x1).exp_m1());
    let second = BoundVerdict::new(g2, -(-x2).exp_m1());
    let third = BoundVerdict::new(g1 + g2, (-x).exp() * x + 2.0 * (1.0 - (-x).exp() * (1.0 + x)));
    Ok([first, second, third])
}

/// One named outer-bound constraint of a two-class slicing policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyVerdict {
    pub envelope: &'static str,
    pub verdict: BoundVerdict,
}

/// Outer bounds of the two-class slotted-ALOHA system: complete sharing
/// gives `G1 + G2 <= 1 - e^{-G1Λ'_1(1) - G2Λ'_2(1)}`; receiver reservation
/// gives `G1 + G2 <= 1 - ½e^{-G1Λ'_1(1)} - ½e^{-G1Λ'_1(1) - 2G2Λ'_2(1)}` and
/// `G2 <= ½ - ½e^{-2G2Λ'_2(1)}`.
pub fn two_class_policy_bounds(
    policy: SlicingPolicy,
    g1: f64,
    g2: f64,
    degree1: &DegreeDistribution,
    degree2: &DegreeDistribution,
) -> Result<Vec<PolicyVerdict>> {
    check_non_negative("G1", g1)?;
    check_non_negative("G2", g2)?;
    let x1 = g1 * degree1.mean();
    let x2 = g2 * degree2.mean();
    Ok(match policy {
        SlicingPolicy::CompleteSharing => vec![PolicyVerdict {
            envelope: "(1,1)/1",
            verdict: BoundVerdict::new(g1 + g2, -(-x1 - x2).exp_m1()),
        }],
        SlicingPolicy::ReceiverReservation => vec![
            PolicyVerdict {
                envelope: "(1,1)/1",
                verdict: BoundVerdict::new(g1 + g2, 1.0 - 0.5 * (-x1).exp() - 0.5 * (-x1 - 2.0 * x2).exp()),
            },
            PolicyVerdict {
                envelope: "(0,1)/1",
                verdict: BoundVerdict::new(g2, -0.5 * (-2.0 * x2).exp_m1()),
            },
        ],
    })
}

/// Largest `G2` at which every policy constraint holds for the given `G1`,
/// or `None` when no `G2 >= 0` works. Located by bisection to 1e-9.
pub fn policy_max_g2(
    policy: SlicingPolicy,
    g1: f64,
    degree1: &DegreeDistribution,
    degree2: &DegreeDistribution,
) -> Result<Option<f64>> {
    let slack = |g2: f64| -> f64 {
        two_class_policy_bounds(policy, g1, g2, degree1, degree2)
            .map(|v| v.iter().map(|c| c.verdict.slack).fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NEG_INFINITY)
    };
    // Each slack is concave in G2, so their minimum is too.
    let hi = 2.0;
    let (peak, best) = golden_section_min(|g2| -slack(g2), 0.0, hi, 1e-12);
    if -best < 0.0 {
        return Ok(None);
    }
    if slack(hi) >= 0.0 {
        return Err(Error::NotBracketed {
            what: "policy outer-bound curve",
            lo: peak,
            hi,
        });
    }
    bisect(slack, peak, hi, 1e-9, "policy outer-bound curve").map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn literal_envelope(mu: f64, bound: u32) -> f64 {
        let mut pmf = (-mu).exp();
        let (mut weighted, mut mass) = (0.0, 0.0);
        for tau in 0..bound {
            if tau > 0 {
                pmf *= mu / tau as f64;
            }
            weighted += tau as f64 * pmf;
            mass += pmf;
        }
        weighted + bound as f64 * (1.0 - mass)
    }

    #[test]
    fn truncated_mean_matches_literal_sum() {
        for &mu in &[0.1, 0.9, 2.5, 7.0] {
            for b in 1..5 {
                assert!((truncated_poisson_mean(mu, b) - literal_envelope(mu, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn envelope_validation() {
        assert!(CapacityEnvelope::new(vec![1, 2], 1).is_err());
        let one_one = CapacityEnvelope::new(vec![1, 1], 2).unwrap();
        assert!(one_one.is_valid_for(&PhiReceiver::NearFar, 6));
        assert!(!CapacityEnvelope::new(vec![1, 1], 1)
            .unwrap()
            .is_valid_for(&PhiReceiver::NearFar, 6));
        for d in 1..=3 {
            let rx = PhiReceiver::DFold { fold: d };
            assert!(CapacityEnvelope::new(vec![1], d).unwrap().is_valid_for(&rx, 6));
            if d > 1 {
                assert!(!CapacityEnvelope::new(vec![1], d - 1).unwrap().is_valid_for(&rx, 6));
            }
        }
    }

    #[test]
    fn single_class_aloha_reduces() {
        let d3 = DegreeDistribution::regular(3).unwrap();
        let env = CapacityEnvelope::new(vec![1], 1).unwrap();
        for &g in &[0.0, 0.5, 0.94, 0.95] {
            let sys = CprSystem::single_class(g, d3.clone(), SuccessModel::SlottedAloha).unwrap();
            let v = outer_bound_satisfied(&sys, &env).unwrap();
            assert!((v.rhs - (1.0 - (-3.0 * g).exp())).abs() < 1e-15);
            if g == 0.0 {
                assert_eq!(v.slack, 0.0);
                assert!(v.holds());
            }
        }
    }

    #[test]
    fn generic_matches_two_class_formulas() {
        let d1 = DegreeDistribution::regular(5).unwrap();
        let d2 = DegreeDistribution::from_pairs(&[(2, 0.5102), (4, 0.4898)]).unwrap();
        let env11 = CapacityEnvelope::new(vec![1, 1], 1).unwrap();
        let env01 = CapacityEnvelope::new(vec![0, 1], 1).unwrap();
        for &(g1, g2) in &[(0.0, 0.0), (0.3, 0.2), (0.6, 0.35)] {
            for policy in [SlicingPolicy::CompleteSharing, SlicingPolicy::ReceiverReservation] {
                let sys = CprSystem::two_class(policy, [g1, g2], [d1.clone(), d2.clone()]).unwrap();
                let hand = two_class_policy_bounds(policy, g1, g2, &d1, &d2).unwrap();
                let generic = outer_bound_satisfied(&sys, &env11).unwrap();
                assert!((generic.rhs - hand[0].verdict.rhs).abs() < 1e-12);
                if policy == SlicingPolicy::ReceiverReservation {
                    let generic = outer_bound_satisfied(&sys, &env01).unwrap();
                    assert!((generic.rhs - hand[1].verdict.rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nearfar_cross_checks() {
        let d1 = DegreeDistribution::regular(3).unwrap();
        let d2 = DegreeDistribution::regular(4).unwrap();
        assert!(nearfar_bounds(0.0, 0.0, &d1, &d2).unwrap().iter().all(|v| v.holds()));
        let (g1, g2) = (0.4, 0.3);
        let sys = CprSystem::new(
            vec![g1, g2],
            vec![d1.clone(), d2.clone()],
            vec![vec![1.0], vec![1.0]],
            vec![1.0],
            vec![SuccessModel::NearFar],
        )
        .unwrap();
        let hand = nearfar_bounds(g1, g2, &d1, &d2).unwrap();
        let envs = [
            CapacityEnvelope::new(vec![1, 0], 1).unwrap(),
            CapacityEnvelope::new(vec![0, 1], 1).unwrap(),
            CapacityEnvelope::new(vec![1, 1], 2).unwrap(),
        ];
        for (env, h) in envs.iter().zip(&hand) {
            assert!((outer_bound_satisfied(&sys, env).unwrap().rhs - h.rhs).abs() < 1e-12);
        }
        // G2 = 0: the (1,1)/2 bound is the single-class D = 2 bound.
        let third = nearfar_bounds(0.7, 0.0, &d1, &d2).unwrap()[2];
        let d2_form = dfold_mixture_bound(0.7, &d1, &[0.0, 1.0]).unwrap();
        assert!((third.rhs - d2_form.rhs).abs() < 1e-12);
    }

    #[test]
    fn mixture_roots() {
        let d3 = DegreeDistribution::regular(3).unwrap();
        assert!((dfold_mixture_bound_root(&d3, &[1.0]).unwrap() - 0.9405).abs() < 1e-4);
        assert!((dfold_mixture_bound_root(&d3, &[0.0, 1.0]).unwrap() - 1.9790).abs() < 1e-4);
        assert!(dfold_mixture_bound(0.0, &d3, &[1.0]).unwrap().holds());
        assert!(dfold_mixture_bound(0.5, &d3, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn policy_examples() {
        let d5 = DegreeDistribution::regular(5).unwrap();
        let d2 = DegreeDistribution::from_pairs(&[(2, 0.5102), (4, 0.4898)]).unwrap();
        for policy in [SlicingPolicy::CompleteSharing, SlicingPolicy::ReceiverReservation] {
            assert!(two_class_policy_bounds(policy, 0.0, 0.0, &d5, &d2)
                .unwrap()
                .iter()
                .all(|v| v.verdict.holds()));
        }
        // Sharing with G2 = 0: G1 = 1 - e^{-5 G1}.
        let g1 = bisect(|g| 1.0 - (-5.0 * g).exp() - g, 0.5, 1.0, 1e-12, "t").unwrap();
        assert!((g1 - 0.9930).abs() < 1e-4);
        let top = policy_max_g2(SlicingPolicy::CompleteSharing, 0.0, &d5, &d2)
            .unwrap()
            .unwrap();
        let m2 = d2.mean();
        assert!((1.0 - (-m2 * top).exp() - top).abs() < 1e-8);
        // Reservation: G1 = 0 leaves the (0,1) cap.
        let cap = policy_max_g2(SlicingPolicy::ReceiverReservation, 0.0, &d5, &d2)
            .unwrap()
            .unwrap();
        assert!((0.5 - 0.5 * (-2.0 * m2 * cap).exp() - cap).abs() < 1e-8);
        assert!(policy_max_g2(SlicingPolicy::CompleteSharing, 1.2, &d5, &d2)
            .unwrap()
            .is_none());
    }
}
