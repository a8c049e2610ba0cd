//! Degree distributions, receiver success models and the multi-class
//! coded Poisson receiver description consumed by every other module.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_unit_interval, Error, Result};
use crate::numeric::{self, bisect, poisson_cdf, poisson_truncation, poisson_upper_tail};

/// Tolerance on probability vectors that must sum to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Poisson tail mass discarded when truncating induced-receiver expectations.
pub const INDUCED_TAIL: f64 = 1e-12;

/// Repetition-degree distribution of one user class.
///
/// Coefficients are stored densely, index = degree. Every user transmits at
/// least two copies, so the coefficients of degree 0 and 1 are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DegreeDistribution {
    coeffs: Vec<f64>,
    mean: f64,
}

/// Which generating function [`DegreeDistribution::eval`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeFunction {
    /// Node-perspective generating function `Λ(x)`.
    Lambda,
    /// Its derivative `Λ'(x)`.
    LambdaPrime,
    /// Edge-perspective generating function `λ(x) = Λ'(x) / Λ'(1)`.
    EdgeLambda,
}

impl DegreeDistribution {
    /// Builds a distribution from dense coefficients (`coeffs[d]` is the
    /// probability of degree `d`).
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidDistribution("no coefficients".into()));
        }
        for (d, &c) in coeffs.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidDistribution(format!(
                    "coefficient of degree {d} is {c}, outside [0, 1]"
                )));
            }
        }
        let total: f64 = coeffs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "coefficients sum to {total}, not 1"
            )));
        }
        if coeffs.first().copied().unwrap_or(0.0) != 0.0 || coeffs.get(1).copied().unwrap_or(0.0) != 0.0 {
            return Err(Error::InvalidDistribution(
                "every packet must be transmitted at least twice (degrees 0 and 1 must have zero mass)".into(),
            ));
        }
        let mean: f64 = coeffs.iter().enumerate().map(|(d, c)| d as f64 * c).sum();
        Ok(Self { coeffs, mean })
    }

    /// Builds a distribution from `(degree, probability)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let max = pairs.iter().map(|&(d, _)| d).max().unwrap_or(0);
        let mut coeffs = vec![0.0; max + 1];
        for &(d, c) in pairs {
            coeffs[d] += c;
        }
        Self::new(coeffs)
    }

    /// Every user transmits exactly `degree` copies.
    pub fn regular(degree: usize) -> Result<Self> {
        Self::from_pairs(&[(degree, 1.0)])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `Some(d)` when all mass sits on a single degree.
    pub fn regular_degree(&self) -> Option<usize> {
        let mut support = self.coeffs.iter().enumerate().filter(|(_, &c)| c > 0.0);
        match (support.next(), support.next()) {
            (Some((d, _)), None) => Some(d),
            _ => None,
        }
    }

    /// Mean degree `Λ'(1)`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Checked evaluation of one of the generating functions on [0, 1].
    pub fn eval(&self, which: DegreeFunction, x: f64) -> Result<f64> {
        check_unit_interval("x", x)?;
        Ok(match which {
            DegreeFunction::Lambda => self.node(x),
            DegreeFunction::LambdaPrime => self.node_prime(x),
            DegreeFunction::EdgeLambda => self.edge(x),
        })
    }

    /// `Λ(x)`.
    pub fn node(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `Λ'(x)`.
    pub fn node_prime(&self, x: f64) -> f64 {
        self.derivative(1, x)
    }

    /// `λ(x) = Λ'(x) / Λ'(1)`.
    pub fn edge(&self, x: f64) -> f64 {
        self.derivative(1, x) / self.mean
    }

    /// `λ'(x)`.
    pub fn edge_prime(&self, x: f64) -> f64 {
        self.derivative(2, x) / self.mean
    }

    /// `λ''(x)`.
    pub fn edge_second(&self, x: f64) -> f64 {
        self.derivative(3, x) / self.mean
    }

    /// `order`-th derivative of `Λ` by Horner's scheme on the falling-factorial
    /// scaled coefficients.
    fn derivative(&self, order: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for d in (order..self.coeffs.len()).rev() {
            let falling: f64 = (0..order).map(|i| (d - i) as f64).product();
            acc = acc * x + falling * self.coeffs[d];
        }
        acc
    }

    /// Inverse of the strictly increasing `λ` on [0, 1], by bisection to 1e-12.
    pub fn edge_inverse(&self, y: f64) -> Result<f64> {
        check_unit_interval("y", y)?;
        if y == 0.0 || y == 1.0 {
            return Ok(y);
        }
        bisect(
            |x| self.edge(x) - y,
            0.0,
            1.0,
            1e-12,
            "inverse of the edge-degree function",
        )
    }
}

impl TryFrom<Vec<f64>> for DegreeDistribution {
    type Error = Error;

    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs)
    }
}

impl From<DegreeDistribution> for Vec<f64> {
    fn from(dist: DegreeDistribution) -> Self {
        dist.coeffs
    }
}

/// Success-probability function of a receiver class under Poisson offered load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SuccessModel {
    /// Classic slotted ALOHA: `e^{-ρ}` on the total load.
    SlottedAloha,
    /// All packets decoded iff at most `fold` arrive.
    DFold { fold: u32 },
    /// With probability `weights[i]` the receiver is a `(i+1)`-fold receiver.
    DFoldMixture { weights: Vec<f64> },
    /// Two-class near-far SIC receiver; induced from [`PhiReceiver::NearFar`].
    NearFar,
}

impl SuccessModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SuccessModel::DFold { fold } if *fold == 0 => {
                Err(Error::InvalidModel("D-fold receiver needs D >= 1".into()))
            }
            SuccessModel::DFoldMixture { weights } => {
                if weights.is_empty() {
                    return Err(Error::InvalidModel("mixture without weights".into()));
                }
                if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
                    return Err(Error::InvalidModel("mixture weight outside [0, 1]".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::InvalidModel(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Number of input classes the model requires, if it is fixed.
    pub fn required_classes(&self) -> Option<usize> {
        match self {
            SuccessModel::NearFar => Some(2),
            _ => None,
        }
    }

    /// View of a model that depends only on the total load.
    pub fn scalar(&self) -> Option<ScalarSuccess<'_>> {
        match self {
            SuccessModel::NearFar => None,
            model => Some(ScalarSuccess(model)),
        }
    }

    /// Checked success probability of a tagged class-`k` packet under load `rho`.
    pub fn success_prob(&self, k: usize, rho: &[f64]) -> Result<f64> {
        for &r in rho {
            check_non_negative("rho", r)?;
        }
        if let Some(classes) = self.required_classes() {
            if rho.len() != classes || k >= classes {
                return Err(Error::InvalidModel(format!(
                    "model needs {classes} input classes, got load of length {} and class {k}",
                    rho.len()
                )));
            }
        } else if k >= rho.len() {
            return Err(Error::InvalidModel(format!("class {k} out of range")));
        }
        numeric::clamp_probability(self.success_unchecked(k, rho), "success probability")
    }

    /// Success probability without argument validation.
    pub fn success_unchecked(&self, k: usize, rho: &[f64]) -> f64 {
        match self.scalar() {
            Some(s) => s.success(rho.iter().sum()),
            None => {
                let trunc = induced_truncation(rho);
                induced_expectation(&PhiReceiver::NearFar, k, rho, trunc)
            }
        }
    }
}

/// Borrowed view of a total-load success model (slotted ALOHA, D-fold or a
/// D-fold mixture).
#[derive(Debug, Clone, Copy)]
pub struct ScalarSuccess<'a>(&'a SuccessModel);

impl ScalarSuccess<'_> {
    pub fn model(&self) -> &SuccessModel {
        self.0
    }

    /// `P_suc(x)`.
    pub fn success(&self, x: f64) -> f64 {
        match self.0 {
            SuccessModel::SlottedAloha => (-x).exp(),
            SuccessModel::DFold { fold } => poisson_cdf(fold - 1, x),
            SuccessModel::DFoldMixture { weights } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * poisson_cdf(i as u32, x))
                .sum(),
            SuccessModel::NearFar => unreachable!("near-far is not a scalar model"),
        }
    }

    /// `dP_suc/dx`, which is `-e^{-x} x^{D-1} / (D-1)!` per D-fold component.
    pub fn derivative(&self, x: f64) -> f64 {
        let fold_term = |fold: u32| -> f64 {
            let mut term = (-x).exp();
            for s in 1..fold {
                term *= x / s as f64;
            }
            -term
        };
        match self.0 {
            SuccessModel::SlottedAloha => fold_term(1),
            SuccessModel::DFold { fold } => fold_term(*fold),
            SuccessModel::DFoldMixture { weights } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * fold_term(i as u32 + 1))
                .sum(),
            SuccessModel::NearFar => unreachable!("near-far is not a scalar model"),
        }
    }

    /// `∫_0^x P_suc(ρ) dρ` in closed form. For a `D`-fold component this is
    /// `Σ_{t<D} P(N > t)` with `N ~ Poisson(x)`, i.e.
    /// `D - e^{-x} Σ_{τ<D} (D-τ) x^τ/τ!`.
    pub fn integral(&self, x: f64) -> f64 {
        let fold_integral = |fold: u32| -> f64 { (0..fold).map(|t| poisson_upper_tail(t, x)).sum() };
        match self.0 {
            SuccessModel::SlottedAloha => fold_integral(1),
            SuccessModel::DFold { fold } => fold_integral(*fold),
            SuccessModel::DFoldMixture { weights } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * fold_integral(i as u32 + 1))
                .sum(),
            SuccessModel::NearFar => unreachable!("near-far is not a scalar model"),
        }
    }

    /// Sup of `|P_suc'|` over `[0, x_max]`, when known analytically.
    ///
    /// A `D`-fold density `e^{-x} x^{D-1}/(D-1)!` peaks at `x = D - 1`.
    pub fn max_abs_derivative(&self, x_max: f64) -> Option<f64> {
        match self.0 {
            SuccessModel::SlottedAloha => Some(1.0),
            SuccessModel::DFold { fold } => {
                let at = (*fold as f64 - 1.0).min(x_max);
                Some(-self.derivative(at))
            }
            _ => None,
        }
    }

    /// `P_suc^{-1}(y)` for `y ∈ (0, 1]`, by bisection to 1e-12 (closed form
    /// for slotted ALOHA).
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Domain {
                name: "y",
                value: y,
                domain: "(0, 1]",
            });
        }
        if y == 1.0 {
            return Ok(0.0);
        }
        if let SuccessModel::SlottedAloha = self.0 {
            return Ok(-y.ln());
        }
        let mut hi = 1.0;
        while self.success(hi) > y {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NotBracketed {
                    what: "inverse success probability",
                    lo: 0.0,
                    hi,
                });
            }
        }
        bisect(|x| self.success(x) - y, 0.0, hi, 1e-12, "inverse success probability")
    }
}

/// Deterministic multi-class receiver: maps packet counts to decoded counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiReceiver {
    /// Decodes everything iff the total count is at most `fold`.
    DFold { fold: u32 },
    /// Two classes; decodes everything iff `(n1, n2) <= (1, 1)`.
    NearFar,
}

impl PhiReceiver {
    pub fn required_classes(&self) -> Option<usize> {
        match self {
            PhiReceiver::NearFar => Some(2),
            PhiReceiver::DFold { .. } => None,
        }
    }

    /// Whether `φ(n) = n`, i.e. `n` lies in the capacity region.
    pub fn decodes_all(&self, n: &[u32]) -> bool {
        match self {
            PhiReceiver::DFold { fold } => n.iter().map(|&c| c as u64).sum::<u64>() <= *fold as u64,
            PhiReceiver::NearFar => n.iter().all(|&c| c <= 1),
        }
    }

    /// `φ(n)`. Both receivers are all-or-nothing across all classes.
    pub fn decode(&self, n: &[u32]) -> Vec<u32> {
        if self.decodes_all(n) {
            n.to_vec()
        } else {
            vec![0; n.len()]
        }
    }

    /// Failure function `φᶜ(n) = n - φ(n)`.
    pub fn failure(&self, n: &[u32]) -> Vec<u32> {
        let decoded = self.decode(n);
        n.iter().zip(decoded).map(|(a, b)| a - b).collect()
    }

    /// The success model this receiver induces under Poisson load.
    pub fn induced_model(&self) -> SuccessModel {
        match *self {
            PhiReceiver::DFold { fold: 1 } => SuccessModel::SlottedAloha,
            PhiReceiver::DFold { fold } => SuccessModel::DFold { fold },
            PhiReceiver::NearFar => SuccessModel::NearFar,
        }
    }
}

/// Truncation point that keeps the discarded Poisson mass of every class
/// below [`INDUCED_TAIL`].
pub fn induced_truncation(rho: &[f64]) -> u32 {
    rho.iter()
        .map(|&r| poisson_truncation(r, INDUCED_TAIL))
        .max()
        .unwrap_or(0)
}

/// Success probability of the Poisson receiver induced by `receiver`, for a
/// tagged class-`k` packet.
///
/// Evaluates `E[φ_k(N + e_k) / (N_k + 1)]` over independent Poisson counts
/// truncated at `truncation`; this equals the throughput `E[φ_k(N)]` divided
/// by `ρ_k` and stays well defined at `ρ_k = 0`.
pub fn induced_success_from_phi(receiver: &PhiReceiver, k: usize, rho: &[f64], truncation: u32) -> Result<f64> {
    for &r in rho {
        check_non_negative("rho", r)?;
    }
    if k >= rho.len() || receiver.required_classes().is_some_and(|c| c != rho.len()) {
        return Err(Error::InvalidModel(format!(
            "class {k} with load vector of length {} does not fit the receiver",
            rho.len()
        )));
    }
    numeric::clamp_probability(
        induced_expectation(receiver, k, rho, truncation),
        "induced success probability",
    )
}

fn induced_expectation(receiver: &PhiReceiver, k: usize, rho: &[f64], truncation: u32) -> f64 {
    let classes = rho.len();
    let width = truncation as usize + 1;
    // pmf[c][n] for each class.
    let pmf: Vec<Vec<f64>> = rho
        .iter()
        .map(|&r| {
            let mut row = Vec::with_capacity(width);
            let mut term = (-r).exp();
            row.push(term);
            for n in 1..width {
                term *= r / n as f64;
                row.push(term);
            }
            row
        })
        .collect();
    let mut counts = vec![0u32; classes];
    let mut tagged = vec![0u32; classes];
    let mut total = 0.0;
    loop {
        let weight: f64 = counts.iter().enumerate().map(|(c, &n)| pmf[c][n as usize]).product();
        if weight > 0.0 {
            tagged.copy_from_slice(&counts);
            tagged[k] += 1;
            if receiver.decodes_all(&tagged) {
                // All-or-nothing: φ_k(N + e_k) = N_k + 1.
                total += weight;
            } else {
                let decoded = receiver.decode(&tagged)[k] as f64;
                total += weight * decoded / tagged[k] as f64;
            }
        }
        // Odometer increment over {0..=truncation}^K.
        let mut c = 0;
        loop {
            if c == classes {
                return total;
            }
            counts[c] += 1;
            if counts[c] as usize == width {
                counts[c] = 0;
                c += 1;
            } else {
                break;
            }
        }
    }
}

/// Two-class slicing policies over two equally sized receiver classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlicingPolicy {
    /// Both classes route every copy to either receiver class with probability 1/2.
    CompleteSharing,
    /// Class 1 routes evenly; class 2 uses only the second receiver class.
    ReceiverReservation,
}

impl SlicingPolicy {
    /// Row-major 2×2 routing matrix.
    pub fn routing(&self) -> [[f64; 2]; 2] {
        match self {
            SlicingPolicy::CompleteSharing => [[0.5, 0.5], [0.5, 0.5]],
            SlicingPolicy::ReceiverReservation => [[0.5, 0.5], [0.0, 1.0]],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SlicingPolicy::CompleteSharing => "complete-sharing",
            SlicingPolicy::ReceiverReservation => "receiver-reservation",
        }
    }
}

/// A coded Poisson receiver system with `K` user classes and `J` receiver
/// classes: loads `G`, degree distributions, routing matrix `R` and receiver
/// partition `F`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CprSystem {
    loads: Vec<f64>,
    degrees: Vec<DegreeDistribution>,
    routing: Vec<Vec<f64>>,
    partition: Vec<f64>,
    receivers: Vec<SuccessModel>,
}

impl CprSystem {
    pub fn new(
        loads: Vec<f64>,
        degrees: Vec<DegreeDistribution>,
        routing: Vec<Vec<f64>>,
        partition: Vec<f64>,
        receivers: Vec<SuccessModel>,
    ) -> Result<Self> {
        let k = loads.len();
        let j = partition.len();
        if k == 0 {
            return Err(Error::InvalidSystem("at least one user class is required".into()));
        }
        if j == 0 {
            return Err(Error::InvalidSystem("at least one receiver class is required".into()));
        }
        if degrees.len() != k {
            return Err(Error::InvalidSystem(format!(
                "{} degree distributions for {k} user classes",
                degrees.len()
            )));
        }
        if receivers.len() != j {
            return Err(Error::InvalidSystem(format!(
                "{} success models for {j} receiver classes",
                receivers.len()
            )));
        }
        for (c, &g) in loads.iter().enumerate() {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidSystem(format!("load of class {} is {g}", c + 1)));
            }
        }
        if routing.len() != k || routing.iter().any(|row| row.len() != j) {
            return Err(Error::InvalidSystem(format!("routing matrix must be {k}x{j}")));
        }
        for (c, row) in routing.iter().enumerate() {
            if row.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
                return Err(Error::InvalidSystem(format!(
                    "routing row {} has an entry outside [0, 1]",
                    c + 1
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidSystem(format!("routing row {} sums to {total}", c + 1)));
            }
        }
        if partition.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidSystem("receiver fractions must be positive".into()));
        }
        let total: f64 = partition.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidSystem(format!("receiver fractions sum to {total}")));
        }
        for model in &receivers {
            model.validate()?;
            if let Some(req) = model.required_classes() {
                if req != k {
                    return Err(Error::InvalidSystem(format!(
                        "receiver model needs {req} user classes, system has {k}"
                    )));
                }
            }
        }
        Ok(Self {
            loads,
            degrees,
            routing,
            partition,
            receivers,
        })
    }

    /// One user class, one receiver class.
    pub fn single_class(load: f64, degree: DegreeDistribution, model: SuccessModel) -> Result<Self> {
        Self::new(vec![load], vec![degree], vec![vec![1.0]], vec![1.0], vec![model])
    }

    /// Two user classes over two half-sized slotted-ALOHA receiver classes.
    pub fn two_class(policy: SlicingPolicy, loads: [f64; 2], degrees: [DegreeDistribution; 2]) -> Result<Self> {
        let r = policy.routing();
        Self::new(
            loads.to_vec(),
            degrees.to_vec(),
            vec![r[0].to_vec(), r[1].to_vec()],
            vec![0.5, 0.5],
            vec![SuccessModel::SlottedAloha, SuccessModel::SlottedAloha],
        )
    }

    /// Same system at a different load vector.
    pub fn with_loads(&self, loads: Vec<f64>) -> Result<Self> {
        Self::new(
            loads,
            self.degrees.clone(),
            self.routing.clone(),
            self.partition.clone(),
            self.receivers.clone(),
        )
    }

    pub fn user_classes(&self) -> usize {
        self.loads.len()
    }

    pub fn receiver_classes(&self) -> usize {
        self.partition.len()
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn degrees(&self) -> &[DegreeDistribution] {
        &self.degrees
    }

    pub fn routing(&self) -> &[Vec<f64>] {
        &self.routing
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn receivers(&self) -> &[SuccessModel] {
        &self.receivers
    }

    /// Initial per-receiver load vector `ρ̃_j = G ∘ Λ'(1) ∘ R_j`.
    pub fn receiver_load(&self, j: usize) -> Vec<f64> {
        (0..self.user_classes())
            .map(|k| self.loads[k] * self.degrees[k].mean() * self.routing[k][j] / self.partition[j])
            .collect()
    }
}
