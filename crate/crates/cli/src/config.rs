//! Experiment configs: one TOML (or JSON) table per subcommand, every key
//! optional, unknown keys rejected. `--set key=value` overrides are applied
//! to the parsed table before it is typed.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ccpr::bounds::CapacityEnvelope;
use ccpr::evolution::{CcprSystem, EvolveOptions, DEFAULT_TOL, MAX_ITER_THRESHOLD};
use ccpr::explore::{RegionSpec, ScanMode, ThresholdTableSpec};
use ccpr::mcsim::{SimulationSpec, DEFAULT_INSTANCES, DEFAULT_RECEIVERS};
use ccpr::models::{CprSystem, DegreeDistribution, SlicingPolicy, SuccessModel};

fn regular(d: usize) -> DegreeDistribution {
    DegreeDistribution::regular(d).expect("valid regular degree")
}

fn check_nonempty<T>(items: &[T], name: &str) -> anyhow::Result<()> {
    if items.is_empty() {
        bail!("`{name}` must not be empty");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub model: SuccessModel,
    pub degrees: Vec<usize>,
    pub windows: Vec<usize>,
    pub stages: usize,
    pub step: f64,
    pub mode: ScanMode,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        let spec = ThresholdTableSpec::standard(SuccessModel::SlottedAloha);
        Self {
            model: spec.model,
            degrees: spec.degrees,
            windows: spec.windows,
            stages: spec.stages,
            step: spec.step,
            mode: spec.mode,
            max_iter: spec.max_iter,
            tol: spec.tol,
        }
    }
}

impl ThresholdConfig {
    pub fn spec(&self) -> anyhow::Result<ThresholdTableSpec> {
        self.model.validate()?;
        check_nonempty(&self.degrees, "degrees")?;
        check_nonempty(&self.windows, "windows")?;
        for &d in &self.degrees {
            DegreeDistribution::regular(d).with_context(|| format!("degree {d}"))?;
        }
        if let Some(&w) = self.windows.iter().find(|&&w| w == 0 || w > self.stages) {
            bail!("window {w} must lie in 1..={}", self.stages);
        }
        options(self.max_iter, self.tol)?;
        if !(self.step > 0.0) {
            bail!("`step` must be positive, got {}", self.step);
        }
        Ok(ThresholdTableSpec {
            model: self.model.clone(),
            degrees: self.degrees.clone(),
            windows: self.windows.clone(),
            stages: self.stages,
            step: self.step,
            mode: self.mode,
            max_iter: self.max_iter,
            tol: self.tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// Node-degree coefficients `[Λ_0, Λ_1, ...]`.
    pub degree: DegreeDistribution,
    pub model: SuccessModel,
    /// Number of energy-gap samples inside `(G_s*, G_conv*)`.
    pub gap_samples: usize,
    /// Loads at which to sample `U(p;G)`; empty means the three thresholds.
    pub profile_loads: Vec<f64>,
    /// Profile resolution: `p = i / profile_points`.
    pub profile_points: usize,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            degree: regular(3),
            model: SuccessModel::SlottedAloha,
            gap_samples: 10,
            profile_loads: Vec::new(),
            profile_points: 1000,
        }
    }
}

impl PotentialConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate()?;
        if self.model.scalar().is_none() {
            bail!("`model` must be a total-load model (slotted-aloha, d-fold or d-fold-mixture)");
        }
        if self.profile_points == 0 {
            bail!("`profile_points` must be positive");
        }
        if let Some(g) = self.profile_loads.iter().find(|g| !(**g >= 0.0)) {
            bail!("profile load {g} must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub policies: Vec<SlicingPolicy>,
    pub windows: Vec<usize>,
    pub degree1: DegreeDistribution,
    pub degree2: DegreeDistribution,
    pub stages: usize,
    pub step: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub g1_max: f64,
    pub g2_max: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        let spec = RegionSpec::standard(SlicingPolicy::CompleteSharing, 1);
        Self {
            policies: vec![SlicingPolicy::CompleteSharing, SlicingPolicy::ReceiverReservation],
            windows: vec![1, 2],
            degree1: spec.degree1,
            degree2: spec.degree2,
            stages: spec.stages,
            step: spec.step,
            max_iter: spec.max_iter,
            tol: spec.tol,
            g1_max: spec.g1_max,
            g2_max: spec.g2_max,
        }
    }
}

impl RegionConfig {
    /// One sweep per `(policy, window)`, in config order.
    pub fn specs(&self) -> anyhow::Result<Vec<RegionSpec>> {
        check_nonempty(&self.policies, "policies")?;
        check_nonempty(&self.windows, "windows")?;
        if let Some(&w) = self.windows.iter().find(|&&w| w == 0 || w > self.stages) {
            bail!("window {w} must lie in 1..={}", self.stages);
        }
        if !(self.step > 0.0) || !(self.g1_max >= 0.0) || !(self.g2_max >= 0.0) {
            bail!("`step` must be positive and `g1_max`, `g2_max` non-negative");
        }
        options(self.max_iter, self.tol)?;
        let mut out = Vec::new();
        for &policy in &self.policies {
            for &window in &self.windows {
                out.push(RegionSpec {
                    policy,
                    degree1: self.degree1.clone(),
                    degree2: self.degree2.clone(),
                    window,
                    stages: self.stages,
                    step: self.step,
                    max_iter: self.max_iter,
                    tol: self.tol,
                    g1_max: self.g1_max,
                    g2_max: self.g2_max,
                });
            }
        }
        Ok(out)
    }
}

/// A base CPR: `K` user classes, `J` receiver classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub loads: Vec<f64>,
    /// One coefficient list per user class.
    pub degrees: Vec<DegreeDistribution>,
    /// `routing[k][j]`: share of class-`k` edges sent to receiver class `j`.
    pub routing: Vec<Vec<f64>>,
    pub partition: Vec<f64>,
    pub receivers: Vec<SuccessModel>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            loads: vec![0.8],
            degrees: vec![regular(3)],
            routing: vec![vec![1.0]],
            partition: vec![1.0],
            receivers: vec![SuccessModel::SlottedAloha],
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> anyhow::Result<CprSystem> {
        CprSystem::new(
            self.loads.clone(),
            self.degrees.clone(),
            self.routing.clone(),
            self.partition.clone(),
            self.receivers.clone(),
        )
        .context("invalid [system]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    /// The base CPR itself.
    #[default]
    None,
    Punctured,
    Circular,
}

fn coupled(base: CprSystem, kind: CouplingKind, stages: usize, window: usize) -> anyhow::Result<CcprSystem> {
    let sys = match kind {
        CouplingKind::None => CcprSystem::circular(base, 1, 1),
        CouplingKind::Punctured => CcprSystem::punctured(base, stages, window),
        CouplingKind::Circular => CcprSystem::circular(base, stages, window),
    };
    sys.context("invalid coupling")
}

fn options(max_iter: usize, tol: f64) -> anyhow::Result<EvolveOptions> {
    let opts = EvolveOptions {
        max_iter,
        tol,
        record_history: false,
    };
    if max_iter == 0 || !(tol > 0.0) {
        bail!("`max_iter` and `tol` must be positive");
    }
    Ok(opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub weights: Vec<u32>,
    pub bound: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub system: SystemConfig,
    pub envelopes: Vec<EnvelopeConfig>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            envelopes: vec![EnvelopeConfig {
                weights: vec![1],
                bound: 1,
            }],
        }
    }
}

impl BoundsConfig {
    pub fn build(&self) -> anyhow::Result<(CprSystem, Vec<CapacityEnvelope>)> {
        let system = self.system.build()?;
        check_nonempty(&self.envelopes, "envelopes")?;
        let envelopes = self
            .envelopes
            .iter()
            .map(|e| CapacityEnvelope::new(e.weights.clone(), e.bound))
            .collect::<Result<Vec<_>, _>>()
            .context("invalid envelope")?;
        Ok((system, envelopes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemConfig,
    pub coupling: CouplingKind,
    pub stages: usize,
    pub window: usize,
    /// Receivers per stage, `T`.
    pub receivers: usize,
    pub instances: usize,
    pub seed: u64,
    /// Iteration cap of the density-evolution prediction.
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            coupling: CouplingKind::None,
            stages: 40,
            window: 2,
            receivers: DEFAULT_RECEIVERS,
            instances: DEFAULT_INSTANCES,
            seed: 0,
            max_iter: MAX_ITER_THRESHOLD,
            tol: DEFAULT_TOL,
        }
    }
}

impl SimulateConfig {
    pub fn build(&self) -> anyhow::Result<(CcprSystem, SimulationSpec, EvolveOptions)> {
        let system = coupled(self.system.build()?, self.coupling, self.stages, self.window)?;
        for model in system.base().receivers() {
            if ccpr::bounds::phi_receiver_of(model).is_none() {
                bail!("cannot simulate {model:?}: it is not induced from a φ-receiver");
            }
        }
        if self.receivers == 0 || self.instances == 0 {
            bail!("`receivers` and `instances` must be positive");
        }
        let spec = SimulationSpec {
            receivers: self.receivers,
            instances: self.instances,
            seed: self.seed,
        };
        Ok((system, spec, options(self.max_iter, self.tol)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub system: SystemConfig,
    pub coupling: CouplingKind,
    pub stages: usize,
    pub window: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            coupling: CouplingKind::None,
            stages: 40,
            window: 2,
            max_iter: MAX_ITER_THRESHOLD,
            tol: DEFAULT_TOL,
        }
    }
}

impl EvolveConfig {
    pub fn build(&self) -> anyhow::Result<(CcprSystem, EvolveOptions)> {
        let system = coupled(self.system.build()?, self.coupling, self.stages, self.window)?;
        Ok((system, options(self.max_iter, self.tol)?))
    }
}

/// Reads `path` (TOML, or JSON for a `.json` extension), applies the
/// `key=value` overrides and types the result.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<T> {
    let (mut table, text, is_toml) = match path {
        None => (toml::Table::new(), String::new(), true),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let table = if is_json {
                let value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
                toml::Table::try_from(value).with_context(|| format!("{}: expected a JSON object", path.display()))?
            } else {
                text.parse::<toml::Table>()
                    .with_context(|| format!("{}", path.display()))?
            };
            (table, text, !is_json)
        }
    };
    if overrides.is_empty() && is_toml && !text.is_empty() {
        // Typing the original text keeps line numbers in the diagnostics.
        return toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.expect("read").display()));
    }
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    T::deserialize(toml::Value::Table(table)).map_err(|e| anyhow!("{e}"))
}

/// `a.b.c=value`, where `value` is any TOML value (`3`, `0.5`, `[3, 4]`,
/// `"d-fold"`); bare words are taken as strings.
fn apply_override(table: &mut toml::Table, item: &str) -> anyhow::Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override `{item}` has an empty key segment");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{item}`: `{part}` is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
