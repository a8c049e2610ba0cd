//! Finite-size Monte Carlo of the bipartite user/receiver graph with
//! successive interference cancellation.
//!
//! Each stage holds `T` receivers split among receiver classes. Users arrive
//! per stage and class as Poisson(`G_k^{(ℓ)} T`), draw a degree, and place
//! every copy on a receiver class drawn from the routing row, a stage drawn
//! uniformly from `ℓ ..= ℓ ⊕ (w-1)`, and a receiver drawn uniformly within
//! that class and stage. Decoding is φ at every receiver plus removal of all
//! copies of a decoded packet.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::bounds::phi_receiver_of;
use crate::error::{Error, Result};
use crate::evolution::CcprSystem;
use crate::models::{CprSystem, PhiReceiver};
use crate::par;

/// Independent instances per estimate when not configured otherwise.
pub const DEFAULT_INSTANCES: usize = 20;

/// Receivers per stage when not configured otherwise.
pub const DEFAULT_RECEIVERS: usize = 10_000;

/// Immutable random graph of one simulated system.
#[derive(Debug, Clone)]
pub struct PeelingInstance {
    classes: usize,
    /// `φ` of each receiver class.
    phi: Vec<PhiReceiver>,
    user_class: Vec<usize>,
    user_stage: Vec<usize>,
    /// CSR: receivers holding each user's copies.
    copy_offsets: Vec<usize>,
    copy_receivers: Vec<usize>,
    receiver_class: Vec<usize>,
    receiver_stage: Vec<usize>,
    /// CSR: users with a copy at each receiver.
    content_offsets: Vec<usize>,
    content_users: Vec<usize>,
    seed: u64,
    stream: u64,
}

/// Result of peeling an instance to its fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct PeelOutcome {
    pub decoded: Vec<bool>,
    /// Per receiver, packets of each class it decoded itself (`R×K`).
    pub decoded_by: Vec<u32>,
    /// Per receiver, copies of each class still undecoded (`R×K`).
    pub remaining: Vec<u32>,
    pub rounds: usize,
}

/// Inverse-CDF table over `0..n`.
fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn draw(table: &[f64], u: f64) -> usize {
    let total = *table.last().expect("non-empty");
    let target = u * total;
    table.iter().position(|&c| target < c).unwrap_or_else(|| {
        // u·total can round up to the total; fall back to the last positive entry.
        table.iter().rposition(|&c| c > 0.0).unwrap_or(0)
    })
}

impl PeelingInstance {
    /// Draws one graph. `stream` selects an independent ChaCha stream for
    /// the same `seed`.
    pub fn generate(system: &CcprSystem, receivers: usize, seed: u64, stream: u64) -> Result<Self> {
        if receivers == 0 {
            return Err(Error::Domain {
                name: "T",
                value: 0.0,
                domain: "[1, inf)",
            });
        }
        let base = system.base();
        let kk = base.user_classes();
        let jj = base.receiver_classes();
        let ll = system.stages();
        let w = system.window();
        let phi = base
            .receivers()
            .iter()
            .map(|m| {
                phi_receiver_of(m).ok_or_else(|| Error::InvalidModel(format!("{m:?} has no φ-receiver to simulate")))
            })
            .collect::<Result<Vec<_>>>()?;

        // Receivers of each class in every stage; the last class takes the rounding remainder.
        let mut per_class: Vec<usize> = base
            .partition()
            .iter()
            .map(|f| (f * receivers as f64).round() as usize)
            .collect();
        let assigned: usize = per_class[..jj - 1].iter().sum();
        if assigned >= receivers {
            return Err(Error::InvalidSystem(format!(
                "T = {receivers} receivers cannot be split over {jj} receiver classes"
            )));
        }
        per_class[jj - 1] = receivers - assigned;
        if per_class.contains(&0) {
            return Err(Error::InvalidSystem(format!(
                "T = {receivers} leaves a receiver class empty"
            )));
        }
        let class_start: Vec<usize> = per_class
            .iter()
            .scan(0, |acc, &n| {
                let s = *acc;
                *acc += n;
                Some(s)
            })
            .collect();
        let total_receivers = receivers * ll;
        let receiver_stage: Vec<usize> = (0..total_receivers).map(|r| r / receivers).collect();
        let receiver_class: Vec<usize> = (0..total_receivers)
            .map(|r| {
                let local = r % receivers;
                (0..jj)
                    .rev()
                    .find(|&j| local >= class_start[j])
                    .expect("class 0 starts at 0")
            })
            .collect();

        let degree_tables: Vec<Vec<f64>> = base.degrees().iter().map(|d| cumulative(d.coefficients())).collect();
        let routing_tables: Vec<Vec<f64>> = base.routing().iter().map(|row| cumulative(row)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut user_class = Vec::new();
        let mut user_stage = Vec::new();
        let mut copy_offsets = vec![0];
        let mut copy_receivers = Vec::new();
        for l in 0..ll {
            for k in 0..kk {
                let mean = system.stage_loads()[l][k] * receivers as f64;
                let users = if mean > 0.0 {
                    Poisson::new(mean)
                        .map_err(|e| Error::InvalidSystem(format!("Poisson mean {mean}: {e}")))?
                        .sample(&mut rng) as usize
                } else {
                    0
                };
                for _ in 0..users {
                    let degree = draw(&degree_tables[k], rng.random::<f64>());
                    for _ in 0..degree {
                        let j = draw(&routing_tables[k], rng.random::<f64>());
                        let stage = (l + rng.random_range(0..w)) % ll;
                        let local = class_start[j] + rng.random_range(0..per_class[j]);
                        copy_receivers.push(stage * receivers + local);
                    }
                    copy_offsets.push(copy_receivers.len());
                    user_class.push(k);
                    user_stage.push(l);
                }
            }
        }

        // Transpose the copy lists into per-receiver contents.
        let mut counts = vec![0usize; total_receivers];
        for &r in &copy_receivers {
            counts[r] += 1;
        }
        let mut content_offsets = Vec::with_capacity(total_receivers + 1);
        content_offsets.push(0);
        for c in &counts {
            content_offsets.push(content_offsets.last().unwrap() + c);
        }
        let mut fill = content_offsets.clone();
        let mut content_users = vec![0; copy_receivers.len()];
        for u in 0..user_class.len() {
            for &r in &copy_receivers[copy_offsets[u]..copy_offsets[u + 1]] {
                content_users[fill[r]] = u;
                fill[r] += 1;
            }
        }

        Ok(Self {
            classes: kk,
            phi,
            user_class,
            user_stage,
            copy_offsets,
            copy_receivers,
            receiver_class,
            receiver_stage,
            content_offsets,
            content_users,
            seed,
            stream,
        })
    }

    pub fn users(&self) -> usize {
        self.user_class.len()
    }

    pub fn receivers(&self) -> usize {
        self.receiver_class.len()
    }

    pub fn user_class(&self, user: usize) -> usize {
        self.user_class[user]
    }

    pub fn user_stage(&self, user: usize) -> usize {
        self.user_stage[user]
    }

    pub fn receiver_stage(&self, receiver: usize) -> usize {
        self.receiver_stage[receiver]
    }

    pub fn seed(&self) -> (u64, u64) {
        (self.seed, self.stream)
    }

    fn copies(&self, user: usize) -> &[usize] {
        &self.copy_receivers[self.copy_offsets[user]..self.copy_offsets[user + 1]]
    }

    fn contents(&self, receiver: usize) -> &[usize] {
        &self.content_users[self.content_offsets[receiver]..self.content_offsets[receiver + 1]]
    }

    fn initial_counts(&self) -> Vec<u32> {
        let kk = self.classes;
        let mut counts = vec![0u32; self.receivers() * kk];
        for r in 0..self.receivers() {
            for &u in self.contents(r) {
                counts[r * kk + self.user_class[u]] += 1;
            }
        }
        counts
    }

    /// Classes that receiver `r` decodes given its current undecoded counts.
    fn decodable(&self, r: usize, counts: &[u32]) -> Vec<bool> {
        let kk = self.classes;
        let n = &counts[r * kk..(r + 1) * kk];
        let phi = self.phi[self.receiver_class[r]].decode(n);
        (0..kk).map(|k| n[k] > 0 && phi[k] == n[k]).collect()
    }

    fn remove_user(&self, user: usize, counts: &mut [u32], touched: &mut Vec<usize>) {
        let k = self.user_class[user];
        for &r in self.copies(user) {
            counts[r * self.classes + k] -= 1;
            touched.push(r);
        }
    }

    /// Synchronous peeling: every round each receiver applies φ to a
    /// snapshot of its undecoded contents (mark), then all copies of every
    /// marked packet are cancelled (remove).
    pub fn peel(&self) -> PeelOutcome {
        let kk = self.classes;
        let mut counts = self.initial_counts();
        let mut decoded = vec![false; self.users()];
        let mut decoded_by = vec![0u32; self.receivers() * kk];
        let mut candidates: Vec<usize> = (0..self.receivers()).collect();
        let mut rounds = 0;
        let mut marked = Vec::new();
        let mut touched = Vec::new();
        while !candidates.is_empty() {
            marked.clear();
            for &r in &candidates {
                let classes = self.decodable(r, &counts);
                if !classes.iter().any(|&c| c) {
                    continue;
                }
                for k in (0..kk).filter(|&k| classes[k]) {
                    decoded_by[r * kk + k] += counts[r * kk + k];
                }
                for &u in self.contents(r) {
                    if !decoded[u] && classes[self.user_class[u]] {
                        marked.push(u);
                    }
                }
            }
            if marked.is_empty() {
                break;
            }
            rounds += 1;
            touched.clear();
            marked.sort_unstable();
            marked.dedup();
            for &u in &marked {
                decoded[u] = true;
                self.remove_user(u, &mut counts, &mut touched);
            }
            touched.sort_unstable();
            touched.dedup();
            candidates = std::mem::take(&mut touched);
        }
        PeelOutcome {
            decoded,
            decoded_by,
            remaining: counts,
            rounds,
        }
    }

    /// Sequential peeling visiting receivers in `order`, cancelling copies
    /// immediately, and sweeping until a full pass decodes nothing.
    pub fn peel_in_order(&self, order: &[usize]) -> PeelOutcome {
        let kk = self.classes;
        let mut counts = self.initial_counts();
        let mut decoded = vec![false; self.users()];
        let mut decoded_by = vec![0u32; self.receivers() * kk];
        let mut touched = Vec::new();
        let mut rounds = 0;
        loop {
            let mut progress = false;
            for &r in order {
                let classes = self.decodable(r, &counts);
                if !classes.iter().any(|&c| c) {
                    continue;
                }
                progress = true;
                for k in (0..kk).filter(|&k| classes[k]) {
                    decoded_by[r * kk + k] += counts[r * kk + k];
                }
                let batch: Vec<usize> = self
                    .contents(r)
                    .iter()
                    .copied()
                    .filter(|&u| !decoded[u] && classes[self.user_class[u]])
                    .collect();
                for u in batch {
                    if !decoded[u] {
                        decoded[u] = true;
                        self.remove_user(u, &mut counts, &mut touched);
                    }
                }
            }
            if !progress {
                break;
            }
            rounds += 1;
        }
        PeelOutcome {
            decoded,
            decoded_by,
            remaining: counts,
            rounds,
        }
    }

    /// Decoded users and total users per class.
    pub fn tally(&self, outcome: &PeelOutcome) -> Vec<(u64, u64)> {
        let mut out = vec![(0u64, 0u64); self.classes];
        for (u, &k) in self.user_class.iter().enumerate() {
            out[k].1 += 1;
            if outcome.decoded[u] {
                out[k].0 += 1;
            }
        }
        out
    }
}

/// Outcome of the capacity-region check on a peeled instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CapacityVerdict {
    Holds,
    Violated { receiver: usize, decoded: Vec<u32> },
}

/// Checks that what every receiver actually decoded is itself decodable,
/// `φ(y) = y`, and that no receiver is left with decodable contents.
pub fn check_decoded_in_capacity(instance: &PeelingInstance, outcome: &PeelOutcome) -> CapacityVerdict {
    let kk = instance.classes;
    for r in 0..instance.receivers() {
        let y = &outcome.decoded_by[r * kk..(r + 1) * kk];
        let phi = &instance.phi[instance.receiver_class[r]];
        if phi.decode(y) != y {
            return CapacityVerdict::Violated {
                receiver: r,
                decoded: y.to_vec(),
            };
        }
        if instance.decodable(r, &outcome.remaining).iter().any(|&c| c) {
            return CapacityVerdict::Violated {
                receiver: r,
                decoded: y.to_vec(),
            };
        }
    }
    CapacityVerdict::Holds
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSpec {
    /// Receivers per stage, `T`.
    pub receivers: usize,
    pub instances: usize,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            receivers: DEFAULT_RECEIVERS,
            instances: DEFAULT_INSTANCES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassEstimate {
    pub users: u64,
    pub decoded: u64,
    pub rate: f64,
    /// Binomial standard error `sqrt(rate(1-rate)/users)`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub spec: SimulationSpec,
    pub classes: Vec<ClassEstimate>,
    /// Whether every receiver of every instance passed the capacity check.
    pub capacity_holds: bool,
}

/// Pools `instances` independent graphs; instance `i` uses ChaCha stream `i`
/// of `seed`, so the estimate does not depend on the worker count.
pub fn simulate(system: &CcprSystem, spec: &SimulationSpec) -> Result<SimulationReport> {
    let kk = system.base().user_classes();
    let runs = par::map_range(spec.instances, |i| -> Result<(Vec<(u64, u64)>, bool)> {
        let instance = PeelingInstance::generate(system, spec.receivers, spec.seed, i as u64)?;
        let outcome = instance.peel();
        let ok = check_decoded_in_capacity(&instance, &outcome) == CapacityVerdict::Holds;
        Ok((instance.tally(&outcome), ok))
    });
    let mut totals = vec![(0u64, 0u64); kk];
    let mut capacity_holds = true;
    for run in runs {
        let (tally, ok) = run?;
        capacity_holds &= ok;
        for (t, c) in totals.iter_mut().zip(tally) {
            t.0 += c.0;
            t.1 += c.1;
        }
    }
    let classes = totals
        .into_iter()
        .map(|(decoded, users)| {
            let rate = if users == 0 { 1.0 } else { decoded as f64 / users as f64 };
            let std_error = if users == 0 {
                0.0
            } else {
                (rate * (1.0 - rate) / users as f64).sqrt()
            };
            ClassEstimate {
                users,
                decoded,
                rate,
                std_error,
            }
        })
        .collect();
    Ok(SimulationReport {
        spec: *spec,
        classes,
        capacity_holds,
    })
}

/// [`simulate`] for an uncoupled system.
pub fn simulate_cpr(system: &CprSystem, spec: &SimulationSpec) -> Result<SimulationReport> {
    simulate(&CcprSystem::circular(system.clone(), 1, 1)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DegreeDistribution, SuccessModel};
    use rand::seq::SliceRandom;

    fn single(load: f64, d: usize, model: SuccessModel) -> CcprSystem {
        CcprSystem::circular(
            CprSystem::single_class(load, DegreeDistribution::regular(d).unwrap(), model).unwrap(),
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn empty_system_succeeds() {
        let sys = single(0.0, 3, SuccessModel::SlottedAloha);
        let report = simulate(
            &sys,
            &SimulationSpec {
                receivers: 100,
                instances: 2,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(report.classes[0].users, 0);
        assert_eq!(report.classes[0].rate, 1.0);
        assert!(report.capacity_holds);
    }

    #[test]
    fn generation_is_reproducible() {
        let sys = single(0.6, 3, SuccessModel::SlottedAloha);
        let a = PeelingInstance::generate(&sys, 500, 7, 3).unwrap();
        let b = PeelingInstance::generate(&sys, 500, 7, 3).unwrap();
        let c = PeelingInstance::generate(&sys, 500, 7, 4).unwrap();
        assert_eq!(a.copy_receivers, b.copy_receivers);
        assert_ne!(a.copy_receivers, c.copy_receivers);
        assert!((0..a.users()).all(|u| a.copies(u).len() == 3));
    }

    #[test]
    fn two_fold_receiver_by_hand() {
        // One receiver: two users decode, three do not.
        let sys = single(1.0, 2, SuccessModel::DFold { fold: 2 });
        let mut inst = PeelingInstance::generate(&sys, 1, 0, 0).unwrap();
        for users in [2usize, 3] {
            inst.user_class = vec![0; users];
            inst.user_stage = vec![0; users];
            inst.copy_offsets = (0..=users).collect();
            inst.copy_receivers = vec![0; users];
            inst.content_offsets = vec![0, users];
            inst.content_users = (0..users).collect();
            let out = inst.peel();
            let decoded = out.decoded.iter().filter(|&&d| d).count();
            assert_eq!(decoded, if users == 2 { 2 } else { 0 });
            assert_eq!(check_decoded_in_capacity(&inst, &out), CapacityVerdict::Holds);
        }
    }

    #[test]
    fn order_independent_peeling() {
        let sys = single(0.85, 3, SuccessModel::SlottedAloha);
        let inst = PeelingInstance::generate(&sys, 2000, 11, 0).unwrap();
        let reference = inst.peel();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let mut order: Vec<usize> = (0..inst.receivers()).collect();
            order.shuffle(&mut rng);
            assert_eq!(inst.peel_in_order(&order).decoded, reference.decoded);
        }
    }
}
