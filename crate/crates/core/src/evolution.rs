//! Density evolution for coded Poisson receivers, their circular and
//! punctured convolutional (spatially coupled) versions, and the one-sided
//! boundary-clamped system used to bound the punctured fixed point.
//!
//! All recursions run in `q`-space starting from `q = 1`. The intermediate
//! `p = 1 - Σ r P_suc(·)` is kept alongside, so `q = λ(p)` holds exactly for
//! every stored iterate and no inverse is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CprSystem, DegreeDistribution, ScalarSuccess, SuccessModel};
use crate::numeric::GUARD_BAND;

/// Final `p` values below this count as decoded.
pub const STABLE_THRESHOLD: f64 = 1e-5;

/// Max-norm change in `q` that ends an evolution run.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Iteration cap for single-load threshold studies.
pub const MAX_ITER_THRESHOLD: usize = 1_000_000;

/// Iteration cap for two-dimensional region sweeps.
pub const MAX_ITER_SWEEP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Keep every iterate, not just the last one.
    #[serde(default)]
    pub record_history: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            max_iter: MAX_ITER_THRESHOLD,
            tol: DEFAULT_TOL,
            record_history: false,
        }
    }
}

impl EvolveOptions {
    /// Settings used for two-class region sweeps.
    pub fn sweep() -> Self {
        Self {
            max_iter: MAX_ITER_SWEEP,
            ..Self::default()
        }
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain {
                name: "tol",
                value: self.tol,
                domain: "(0, inf)",
            });
        }
        Ok(())
    }
}

/// How the per-stage loads of a coupled system are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// Stages wrap around; per-stage loads are free.
    Circular,
    /// Circular layout whose last `w - 1` stages carry no load.
    Punctured,
}

/// A CPR replicated over `L` stages whose receiver ends are spread uniformly
/// over a window of `w` consecutive stages (indices taken modulo `L`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcprSystem {
    base: CprSystem,
    stages: usize,
    window: usize,
    coupling: Coupling,
    /// `stage_loads[ℓ][k]`.
    stage_loads: Vec<Vec<f64>>,
}

impl CcprSystem {
    /// Punctured system: the base loads on stages `1..=L-w+1`, zero after.
    pub fn punctured(base: CprSystem, stages: usize, window: usize) -> Result<Self> {
        check_coupling(stages, window)?;
        let active = stages - window + 1;
        let zero = vec![0.0; base.user_classes()];
        let stage_loads = (0..stages)
            .map(|l| {
                if l < active {
                    base.loads().to_vec()
                } else {
                    zero.clone()
                }
            })
            .collect();
        Ok(Self {
            base,
            stages,
            window,
            coupling: Coupling::Punctured,
            stage_loads,
        })
    }

    /// Circular system with the base loads on every stage.
    pub fn circular(base: CprSystem, stages: usize, window: usize) -> Result<Self> {
        let loads = vec![base.loads().to_vec(); stages];
        Self::circular_with_loads(base, stages, window, loads)
    }

    /// Circular system with an arbitrary per-stage load profile
    /// (`stage_loads[ℓ][k]`).
    pub fn circular_with_loads(
        base: CprSystem,
        stages: usize,
        window: usize,
        stage_loads: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_coupling(stages, window)?;
        if stage_loads.len() != stages || stage_loads.iter().any(|row| row.len() != base.user_classes()) {
            return Err(Error::InvalidSystem(format!(
                "stage loads must be {stages}x{}",
                base.user_classes()
            )));
        }
        if stage_loads.iter().flatten().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidSystem("stage loads must be non-negative".into()));
        }
        Ok(Self {
            base,
            stages,
            window,
            coupling: Coupling::Circular,
            stage_loads,
        })
    }

    pub fn base(&self) -> &CprSystem {
        &self.base
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn stage_loads(&self) -> &[Vec<f64>] {
        &self.stage_loads
    }

    /// Stages that carry load; all stages if none does.
    pub fn loaded_stages(&self) -> Vec<bool> {
        let loaded: Vec<bool> = self
            .stage_loads
            .iter()
            .map(|row| row.iter().any(|&g| g > 0.0))
            .collect();
        if loaded.iter().any(|&b| b) {
            loaded
        } else {
            vec![true; self.stages]
        }
    }
}

fn check_coupling(stages: usize, window: usize) -> Result<()> {
    if stages == 0 || window == 0 || window > stages {
        return Err(Error::InvalidSystem(format!(
            "need 1 <= w <= L, got w = {window}, L = {stages}"
        )));
    }
    Ok(())
}

/// One stored iterate; both vectors are `K×L`, row-major by class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iterate {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Which stages decide whether a finished run counts as stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Every monitored stage of every class.
    AllStages,
    /// Only the given 0-based stage, for every class.
    ProbeStage(usize),
}

/// 0-based index of stage `L/2`, the probe used by region sweeps.
pub fn probe_stage(stages: usize) -> usize {
    (stages / 2).max(1) - 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionTrace {
    pub classes: usize,
    pub stages: usize,
    pub receiver_classes: usize,
    /// All iterates from the all-ones start, when requested.
    pub history: Vec<Iterate>,
    /// Final `p`, `K×L`.
    pub p: Vec<f64>,
    /// Final `q = λ(p)`, `K×L`.
    pub q: Vec<f64>,
    /// Per-class load at each receiver class and stage from the last
    /// iteration, indexed `(k·J + j)·L + ℓ`.
    pub loads: Vec<f64>,
    /// `1 - Λ_k(p_{k,ℓ})`, `K×L`.
    pub final_success: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Stages checked for convergence and stability.
    pub monitored: Vec<bool>,
}

impl EvolutionTrace {
    pub fn p_at(&self, k: usize, stage: usize) -> f64 {
        self.p[k * self.stages + stage]
    }

    pub fn q_at(&self, k: usize, stage: usize) -> f64 {
        self.q[k * self.stages + stage]
    }

    pub fn success_at(&self, k: usize, stage: usize) -> f64 {
        self.final_success[k * self.stages + stage]
    }

    pub fn load_at(&self, k: usize, j: usize, stage: usize) -> f64 {
        self.loads[(k * self.receiver_classes + j) * self.stages + stage]
    }

    /// Largest final `p` over monitored stages.
    pub fn max_p(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.classes {
            for l in (0..self.stages).filter(|&l| self.monitored[l]) {
                worst = worst.max(self.p_at(k, l));
            }
        }
        worst
    }

    pub fn is_stable(&self, how: Classification) -> bool {
        match how {
            Classification::AllStages => self.max_p() < STABLE_THRESHOLD,
            Classification::ProbeStage(l) => (0..self.classes).all(|k| self.p_at(k, l) < STABLE_THRESHOLD),
        }
    }
}

/// Scratch buffers written by one recursion step.
struct StepBuffers {
    p: Vec<f64>,
    q: Vec<f64>,
    loads: Vec<f64>,
}

/// Runs `step` from the all-ones state until the monitored max-norm change
/// in `q` drops below `tol`.
fn drive<F>(
    classes: usize,
    stages: usize,
    receiver_classes: usize,
    monitored: Vec<bool>,
    opts: &EvolveOptions,
    mut step: F,
) -> Result<EvolutionTrace>
where
    F: FnMut(&[f64], &mut StepBuffers) -> Result<()>,
{
    opts.validate()?;
    let n = classes * stages;
    let mut q = vec![1.0; n];
    let mut p = vec![1.0; n];
    let mut next = StepBuffers {
        p: vec![0.0; n],
        q: vec![0.0; n],
        loads: vec![0.0; classes * receiver_classes * stages],
    };
    let mut history = Vec::new();
    if opts.record_history {
        history.push(Iterate {
            p: p.clone(),
            q: q.clone(),
        });
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        step(&q, &mut next)?;
        iterations += 1;
        let mut delta: f64 = 0.0;
        for k in 0..classes {
            for l in (0..stages).filter(|&l| monitored[l]) {
                let i = k * stages + l;
                delta = delta.max((next.q[i] - q[i]).abs());
            }
        }
        std::mem::swap(&mut q, &mut next.q);
        std::mem::swap(&mut p, &mut next.p);
        if opts.record_history {
            history.push(Iterate {
                p: p.clone(),
                q: q.clone(),
            });
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let trace = EvolutionTrace {
        classes,
        stages,
        receiver_classes,
        history,
        p,
        q,
        loads: next.loads,
        final_success: Vec::new(),
        converged,
        iterations,
        monitored,
    };
    Ok(trace)
}

fn finish(mut trace: EvolutionTrace, degrees: &[&DegreeDistribution]) -> EvolutionTrace {
    let stages = trace.stages;
    trace.final_success = trace
        .p
        .iter()
        .enumerate()
        .map(|(i, &p)| 1.0 - degrees[i / stages].node(p))
        .collect();
    trace
}

fn checked_p(value: f64) -> Result<f64> {
    if !(-GUARD_BAND..=1.0 + GUARD_BAND).contains(&value) {
        return Err(Error::ProbabilityOutOfRange {
            value,
            context: "density-evolution iterate",
        });
    }
    Ok(value.clamp(0.0, 1.0))
}

fn scalar_of(model: &SuccessModel) -> Result<ScalarSuccess<'_>> {
    model
        .scalar()
        .ok_or_else(|| Error::InvalidModel("this recursion needs a total-load success model".into()))
}

/// Density evolution of an uncoupled CPR.
pub fn cpr_evolve(system: &CprSystem, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    let kk = system.user_classes();
    let jj = system.receiver_classes();
    let coef: Vec<Vec<f64>> = (0..kk)
        .map(|k| {
            (0..jj)
                .map(|j| {
                    system.loads()[k] * system.degrees()[k].mean() * system.routing()[k][j] / system.partition()[j]
                })
                .collect()
        })
        .collect();
    let mut rho = vec![0.0; kk];
    let mut succ = vec![0.0; kk * jj];
    let trace = drive(kk, 1, jj, vec![true], opts, |q, out| {
        for j in 0..jj {
            for k in 0..kk {
                rho[k] = coef[k][j] * q[k];
                out.loads[k * jj + j] = rho[k];
            }
            for k in 0..kk {
                succ[k * jj + j] = system.receivers()[j].success_unchecked(k, &rho);
            }
        }
        for k in 0..kk {
            let s: f64 = (0..jj).map(|j| system.routing()[k][j] * succ[k * jj + j]).sum();
            let p = checked_p(1.0 - s)?;
            out.p[k] = p;
            out.q[k] = system.degrees()[k].edge(p);
        }
        Ok(())
    })?;
    let degrees: Vec<&DegreeDistribution> = system.degrees().iter().collect();
    Ok(finish(trace, &degrees))
}

/// Density evolution of a circular or punctured coupled system.
///
/// Receiver stage `ℓ̂` sees the load of sender stages `ℓ̂ ⊖ (w-1) ..= ℓ̂`;
/// a class-`k` packet of stage `ℓ` fails unless one of its receiver stages
/// `ℓ ..= ℓ ⊕ (w-1)` decodes it.
pub fn ccpr_evolve(system: &CcprSystem, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    let base = system.base();
    let kk = base.user_classes();
    let jj = base.receiver_classes();
    let ll = system.stages();
    let w = system.window();
    let inv_w = 1.0 / w as f64;
    // Load contributed per unit q and unit stage load.
    let coef: Vec<f64> = (0..kk * jj)
        .map(|i| {
            let (k, j) = (i / jj, i % jj);
            base.degrees()[k].mean() * inv_w * base.routing()[k][j] / base.partition()[j]
        })
        .collect();
    let route: Vec<f64> = (0..kk * jj).map(|i| base.routing()[i / jj][i % jj] * inv_w).collect();
    let scalars: Vec<Option<ScalarSuccess<'_>>> = base.receivers().iter().map(|m| m.scalar()).collect();
    let stage_loads = system.stage_loads();
    let mut weighted = vec![0.0; kk];
    let mut rho = vec![0.0; kk];
    let mut succ = vec![0.0; kk * jj * ll];
    let trace = drive(kk, ll, jj, system.loaded_stages(), opts, |q, out| {
        for rl in 0..ll {
            for (k, acc) in weighted.iter_mut().enumerate() {
                *acc = 0.0;
                for m in 0..w {
                    let sl = (rl + ll - m) % ll;
                    *acc += q[k * ll + sl] * stage_loads[sl][k];
                }
            }
            for j in 0..jj {
                for k in 0..kk {
                    rho[k] = coef[k * jj + j] * weighted[k];
                    out.loads[(k * jj + j) * ll + rl] = rho[k];
                }
                match &scalars[j] {
                    Some(s) => {
                        let v = s.success(rho.iter().sum());
                        for k in 0..kk {
                            succ[(k * jj + j) * ll + rl] = v;
                        }
                    }
                    None => {
                        for k in 0..kk {
                            succ[(k * jj + j) * ll + rl] = base.receivers()[j].success_unchecked(k, &rho);
                        }
                    }
                }
            }
        }
        for k in 0..kk {
            for l in 0..ll {
                let mut s = 0.0;
                for m in 0..w {
                    let rl = (l + m) % ll;
                    for j in 0..jj {
                        s += route[k * jj + j] * succ[(k * jj + j) * ll + rl];
                    }
                }
                let p = checked_p(1.0 - s)?;
                out.p[k * ll + l] = p;
                out.q[k * ll + l] = base.degrees()[k].edge(p);
            }
        }
        Ok(())
    })?;
    let degrees: Vec<&DegreeDistribution> = base.degrees().iter().collect();
    Ok(finish(trace, &degrees))
}

/// Punctured single-class coupled evolution with clamped sender windows.
///
/// Only stages `1..=L̃ = L-w+1` carry load, so the load at receiver stage
/// `ℓ̂` is `(GΛ'(1)/w) Σ_{t=max(1,ℓ̂-w+1)}^{min(L̃,ℓ̂)} λ(p_t)`. Produces the
/// same trace as [`ccpr_evolve`] on the matching punctured [`CcprSystem`].
pub fn punctured_scalar_evolve(
    load: f64,
    degree: &DegreeDistribution,
    model: &SuccessModel,
    window: usize,
    stages: usize,
    opts: &EvolveOptions,
) -> Result<EvolutionTrace> {
    crate::error::check_non_negative("G", load)?;
    check_coupling(stages, window)?;
    model.validate()?;
    let scalar = scalar_of(model)?;
    let ll = stages;
    let w = window;
    let active = ll - w + 1;
    let inv_w = 1.0 / w as f64;
    let coef = degree.mean() * inv_w;
    let monitored = if load > 0.0 {
        (0..ll).map(|l| l < active).collect()
    } else {
        vec![true; ll]
    };
    let mut succ = vec![0.0; ll];
    let trace = drive(1, ll, 1, monitored, opts, |q, out| {
        for rl in 0..ll {
            // Sender stages ℓ̂, ℓ̂-1, ... in the order the general path sums them.
            let lo = (rl + 1).saturating_sub(w);
            let mut acc = 0.0;
            if lo < active {
                for t in (lo..=rl.min(active - 1)).rev() {
                    acc += q[t] * load;
                }
            }
            let x = coef * acc;
            out.loads[rl] = x;
            succ[rl] = scalar.success(x);
        }
        for l in 0..ll {
            let mut s = 0.0;
            for m in 0..w {
                s += inv_w * succ[(l + m) % ll];
            }
            let p = checked_p(1.0 - s)?;
            out.p[l] = p;
            out.q[l] = degree.edge(p);
        }
        Ok(())
    })?;
    Ok(finish(trace, &[degree]))
}

/// Punctured convolutional IRSA: slotted-ALOHA receivers, every user sends
/// exactly `d` copies.
pub fn convolutional_irsa_evolve(
    load: f64,
    d: usize,
    window: usize,
    stages: usize,
    opts: &EvolveOptions,
) -> Result<EvolutionTrace> {
    let degree = DegreeDistribution::regular(d)?;
    punctured_scalar_evolve(load, &degree, &SuccessModel::SlottedAloha, window, stages, opts)
}

/// The one-sided system with `f(x;G) = 1 - P_suc(xGΛ'(1))` and `h = λ`:
///
/// `s_ℓ ← (1/w) Σ_{ℓ̂=max(1,ℓ-w+1)}^{ℓ} f((1/w) Σ_{t=ℓ̂}^{min(ℓ̂+w-1,L)} h(s_t); G)`,
///
/// followed by `s_ℓ = s_{L̃}` for `ℓ >= L̃` after every iteration. The trace
/// stores `s` as `p` and `λ(s)` as `q`.
pub fn one_sided_evolve(system: &CcprSystem, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    let base = system.base();
    if base.user_classes() != 1 || base.receiver_classes() != 1 {
        return Err(Error::InvalidSystem(
            "the one-sided system is defined for a single class".into(),
        ));
    }
    let scalar = scalar_of(&base.receivers()[0])?;
    let degree = &base.degrees()[0];
    let load = base.loads()[0];
    let ll = system.stages();
    let w = system.window();
    let active = ll - w + 1;
    let inv_w = 1.0 / w as f64;
    let gm = load * degree.mean();
    let mut fvals = vec![0.0; ll];
    let trace = drive(1, ll, 1, vec![true; ll], opts, |q, out| {
        for rl in 0..ll {
            let hi = (rl + w - 1).min(ll - 1);
            let y: f64 = q[rl..=hi].iter().sum::<f64>() * inv_w;
            out.loads[rl] = y * gm;
            fvals[rl] = 1.0 - scalar.success(y * gm);
        }
        for l in 0..ll {
            let lo = (l + 1).saturating_sub(w);
            let s: f64 = fvals[lo..=l].iter().sum::<f64>() * inv_w;
            out.p[l] = checked_p(s)?;
        }
        let edge = out.p[active - 1];
        for l in active..ll {
            out.p[l] = edge;
        }
        for l in 0..ll {
            out.q[l] = degree.edge(out.p[l]);
        }
        Ok(())
    })?;
    Ok(finish(trace, &[degree]))
}
