//! Potential function of a single-class CPR and the thresholds derived from
//! it: the single-system threshold `G_s*`, the potential threshold
//! `G_conv*` and the area bound `G_up*`, together with the energy gap and
//! the window-size bound of threshold saturation.
//!
//! With `f(p;G) = 1 - P_suc(pGΛ'(1))` and `h(p) = λ(p)` the potential is
//!
//! `U(p;G) = λ(p)(p-1) - Λ(p)/Λ'(1) + (1/(GΛ'(1))) ∫_0^{GΛ'(1)λ(p)} P_suc(ρ) dρ`.

use serde::Serialize;

use crate::error::{check_non_negative, check_unit_interval, Error, Result};
use crate::models::{CprSystem, DegreeDistribution, ScalarSuccess, SuccessModel};
use crate::numeric::{adaptive_simpson, bisect, golden_section_min, grid_min};

/// Grid size for the `G_s*` infimum and the inner minimisations.
pub const SEARCH_GRID: usize = 10_000;

/// Grid size of the balance-function scan locating `u(G)`.
pub const BALANCE_GRID: usize = 100_000;

/// Slack below zero still accepted as "non-negative" for a minimum of `U`;
/// absorbs rounding in the cancellation near `p = 0`.
const POTENTIAL_FLOOR: f64 = -1e-13;

/// How `∫_0^x P_suc` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntegralMethod {
    /// Closed form (all built-in scalar models have one).
    #[default]
    ClosedForm,
    /// Adaptive Simpson quadrature; used as a cross-check.
    Quadrature,
}

/// Single-class, single-receiver-class system seen as a scalar recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSystem {
    degree: DegreeDistribution,
    model: SuccessModel,
    method: IntegralMethod,
}

impl ScalarSystem {
    pub fn new(degree: DegreeDistribution, model: SuccessModel) -> Result<Self> {
        model.validate()?;
        if model.scalar().is_none() {
            return Err(Error::InvalidModel(
                "the potential function needs a total-load success model".into(),
            ));
        }
        Ok(Self {
            degree,
            model,
            method: IntegralMethod::ClosedForm,
        })
    }

    /// Regular-degree IRSA with slotted-ALOHA receivers.
    pub fn irsa(d: usize) -> Result<Self> {
        Self::new(DegreeDistribution::regular(d)?, SuccessModel::SlottedAloha)
    }

    pub fn from_cpr(system: &CprSystem) -> Result<Self> {
        if system.user_classes() != 1 || system.receiver_classes() != 1 {
            return Err(Error::InvalidSystem(
                "the potential function is defined for a single class".into(),
            ));
        }
        Self::new(system.degrees()[0].clone(), system.receivers()[0].clone())
    }

    pub fn with_method(mut self, method: IntegralMethod) -> Self {
        self.method = method;
        self
    }

    pub fn degree(&self) -> &DegreeDistribution {
        &self.degree
    }

    pub fn model(&self) -> &SuccessModel {
        &self.model
    }

    fn scalar(&self) -> ScalarSuccess<'_> {
        self.model.scalar().expect("checked at construction")
    }

    /// `f(p;G) = 1 - P_suc(pGΛ'(1))`.
    pub fn f(&self, p: f64, load: f64) -> f64 {
        1.0 - self.scalar().success(p * load * self.degree.mean())
    }

    /// `h(p) = λ(p)`.
    pub fn h(&self, p: f64) -> f64 {
        self.degree.edge(p)
    }

    fn integral(&self, x: f64) -> f64 {
        let s = self.scalar();
        match self.method {
            IntegralMethod::ClosedForm => s.integral(x),
            IntegralMethod::Quadrature => adaptive_simpson(&|r| s.success(r), 0.0, x, 1e-14),
        }
    }

    fn potential_raw(&self, p: f64, load: f64) -> f64 {
        let lam = self.degree.edge(p);
        let m = self.degree.mean();
        let head = lam * (p - 1.0) - self.degree.node(p) / m;
        if load == 0.0 {
            // I(x)/x -> P_suc(0) = 1 as x -> 0.
            return head + lam;
        }
        let x = load * m * lam;
        head + self.integral(x) / (load * m)
    }

    fn balance_bracket(&self, p: f64, load: f64) -> f64 {
        p - 1.0 + self.scalar().success(load * self.degree.mean() * self.degree.edge(p))
    }
}

fn check_args(p: f64, load: f64) -> Result<()> {
    check_unit_interval("p", p)?;
    check_non_negative("G", load)
}

/// `U(p;G)`. At `G = 0` the `G → 0` limit `pλ(p) - Λ(p)/Λ'(1)` is returned.
pub fn potential_value(sys: &ScalarSystem, p: f64, load: f64) -> Result<f64> {
    check_args(p, load)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(sys.potential_raw(p, load))
}

/// Balance function `U'(p;G) = λ'(p)(p - 1 + P_suc(GΛ'(1)λ(p)))`.
pub fn balance_value(sys: &ScalarSystem, p: f64, load: f64) -> Result<f64> {
    check_args(p, load)?;
    Ok(sys.degree.edge_prime(p) * sys.balance_bracket(p, load))
}

/// `G_s* = inf_{p∈(0,1)} P_suc⁻¹(1-p) / Λ'(p)`.
pub fn single_system_threshold(sys: &ScalarSystem) -> Result<f64> {
    let s = sys.scalar();
    let ratio = |p: f64| -> f64 {
        match s.inverse(1.0 - p) {
            Ok(x) => x / sys.degree.node_prime(p),
            Err(_) => f64::INFINITY,
        }
    };
    let n = SEARCH_GRID;
    let h = 1.0 / n as f64;
    let mut best = (1, ratio(h));
    for i in 2..n {
        let v = ratio(i as f64 * h);
        if v < best.1 {
            best = (i, v);
        }
    }
    if best.0 == 1 || best.0 == n - 1 {
        return Err(Error::NotBracketed {
            what: "single-system threshold (infimum at the end of (0, 1))",
            lo: h,
            hi: 1.0 - h,
        });
    }
    let centre = best.0 as f64 * h;
    let (_, v) = golden_section_min(ratio, centre - h, centre + h, 1e-9);
    Ok(v.min(best.1))
}

fn min_potential(sys: &ScalarSystem, load: f64, from: f64) -> (f64, f64) {
    grid_min(|p| sys.potential_raw(p, load), from, 1.0, SEARCH_GRID, 1e-10)
}

/// `G_conv* = sup{G : min_{p∈[0,1]} U(p;G) >= 0}`.
pub fn potential_threshold(sys: &ScalarSystem) -> Result<f64> {
    let feasible = |g: f64| min_potential(sys, g, 1.0 / SEARCH_GRID as f64).1 >= POTENTIAL_FLOOR;
    let mut hi = 1.0;
    while feasible(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NotBracketed {
                what: "potential threshold",
                lo: 0.0,
                hi,
            });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `G_up*`: the positive root of `G = ∫_0^{GΛ'(1)} P_suc(ρ) dρ`, i.e. `U(1;G) = 0`.
pub fn potential_upper_bound(sys: &ScalarSystem) -> Result<f64> {
    let m = sys.degree.mean();
    let gap = |g: f64| sys.integral(g * m) - g;
    let lo = 1e-6;
    let mut hi = 1.0;
    while gap(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NotBracketed {
                what: "area upper bound",
                lo,
                hi,
            });
        }
    }
    bisect(gap, lo, hi, 1e-12, "area upper bound")
}

/// `u(G)`: the end of the first interval `[0, p̃]` on which `U' >= 0`.
pub fn minimum_unstable_fixed_point(sys: &ScalarSystem, load: f64) -> Result<f64> {
    check_non_negative("G", load)?;
    let n = BALANCE_GRID;
    let h = 1.0 / n as f64;
    // λ' > 0 on (0, 1], so the sign of U' is the sign of the bracket.
    let bracket = |p: f64| sys.balance_bracket(p, load);
    let mut prev = h;
    if bracket(prev) < 0.0 {
        return Ok(0.0);
    }
    for i in 2..=n {
        let p = i as f64 * h;
        if bracket(p) < 0.0 {
            return bisect(bracket, prev, p, 1e-12, "minimum unstable fixed point");
        }
        prev = p;
    }
    Err(Error::Undefined {
        what: "minimum unstable fixed point",
        load,
        reason: "the balance function never turns negative (load at or below G_s*)".into(),
    })
}

/// `ΔE(G) = min_{p∈[u(G),1]} U(p;G)`.
pub fn energy_gap(sys: &ScalarSystem, load: f64) -> Result<f64> {
    let u = minimum_unstable_fixed_point(sys, load)?;
    Ok(min_potential(sys, load, u).1)
}

/// `K_{f,h} = ‖h'‖ + ‖h'‖²‖f'‖ + ‖h''‖` with sups over `[0,1]` at load `G`.
///
/// `λ` has non-negative coefficients, so `h'` and `h''` peak at `p = 1`;
/// `‖f'‖ = GΛ'(1) sup_{x∈[0,GΛ'(1)]} |P_suc'(x)|`.
pub fn k_fh_constant(sys: &ScalarSystem, load: f64) -> Result<f64> {
    check_non_negative("G", load)?;
    let h1 = sys.degree.edge_prime(1.0);
    let h2 = sys.degree.edge_second(1.0);
    let gm = load * sys.degree.mean();
    let f1 = match sys.scalar().max_abs_derivative(gm) {
        Some(d) => gm * d,
        None => {
            let s = sys.scalar();
            grid_sup(|p| gm * -s.derivative(p * gm), SEARCH_GRID)
        }
    };
    Ok(h1 + h1 * h1 * f1 + h2)
}

/// `K_{f,h}` from dense grid sups of `|h'|`, `|h''|` and `|f'|`.
pub fn k_fh_constant_grid(sys: &ScalarSystem, load: f64, points: usize) -> Result<f64> {
    check_non_negative("G", load)?;
    let gm = load * sys.degree.mean();
    let s = sys.scalar();
    let h1 = grid_sup(|p| sys.degree.edge_prime(p).abs(), points);
    let h2 = grid_sup(|p| sys.degree.edge_second(p).abs(), points);
    let f1 = grid_sup(|p| (gm * s.derivative(p * gm)).abs(), points);
    Ok(h1 + h1 * h1 * f1 + h2)
}

fn grid_sup<F: Fn(f64) -> f64>(f: F, points: usize) -> f64 {
    (0..points)
        .map(|i| f(i as f64 / (points - 1) as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `K_{f,h} / ΔE(G)`: any window strictly wider certifies stability of the
/// coupled system at load `G`. Defined for `G_s* < G < G_conv*`.
pub fn saturation_window_bound(sys: &ScalarSystem, load: f64) -> Result<f64> {
    let gap = energy_gap(sys, load)?;
    if !(gap > 0.0) {
        return Err(Error::Undefined {
            what: "saturation window bound",
            load,
            reason: format!("energy gap {gap:e} is not positive (load at or above G_conv*)"),
        });
    }
    Ok(k_fh_constant(sys, load)? / gap)
}

/// Energy-gap quantities at one load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSample {
    pub load: f64,
    pub u: f64,
    pub delta_e: f64,
    pub k_fh: f64,
    pub window_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialReport {
    pub g_s_star: f64,
    pub g_conv_star: f64,
    pub g_up_star: f64,
    /// Samples at evenly spaced loads strictly inside `(G_s*, G_conv*)`.
    pub samples: Vec<GapSample>,
}

pub fn potential_report(sys: &ScalarSystem, samples: usize) -> Result<PotentialReport> {
    let g_s_star = single_system_threshold(sys)?;
    let g_conv_star = potential_threshold(sys)?;
    let g_up_star = potential_upper_bound(sys)?;
    let loads: Vec<f64> = (1..=samples)
        .map(|i| g_s_star + (g_conv_star - g_s_star) * i as f64 / (samples + 1) as f64)
        .collect();
    let samples = crate::par::map(&loads, |&load| -> Result<GapSample> {
        let u = minimum_unstable_fixed_point(sys, load)?;
        let delta_e = min_potential(sys, load, u).1;
        let k_fh = k_fh_constant(sys, load)?;
        Ok(GapSample {
            load,
            u,
            delta_e,
            k_fh,
            window_bound: if delta_e > 0.0 { k_fh / delta_e } else { f64::INFINITY },
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(PotentialReport {
        g_s_star,
        g_conv_star,
        g_up_star,
        samples,
    })
}

/// One point of a potential profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileSample {
    pub p: f64,
    pub potential: f64,
    pub balance: f64,
}

/// `U` and `U'` on the grid `p = i/points`, `i = 0..=points`.
pub fn potential_profile(sys: &ScalarSystem, load: f64, points: usize) -> Result<Vec<ProfileSample>> {
    check_non_negative("G", load)?;
    if points == 0 {
        return Err(Error::Domain {
            name: "points",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    (0..=points)
        .map(|i| {
            let p = i as f64 / points as f64;
            Ok(ProfileSample {
                p,
                potential: potential_value(sys, p, load)?,
                balance: balance_value(sys, p, load)?,
            })
        })
        .collect()
}

/// Interior points where a sampled profile's potential changes sign,
/// located by linear interpolation between neighbouring samples.
pub fn zero_crossings(profile: &[ProfileSample]) -> Vec<f64> {
    profile
        .windows(2)
        .skip(1)
        .filter(|w| (w[0].potential < 0.0) != (w[1].potential < 0.0))
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            a.p + (b.p - a.p) * a.potential / (a.potential - b.potential)
        })
        .collect()
}
