use serde::Serialize;

use ccpr::bounds::outer_bound_satisfied;
use ccpr::evolution::{ccpr_evolve, CcprSystem, Classification, EvolutionTrace};
use ccpr::explore::{grid_floor, region_boundary_2d, threshold_table, THRESHOLD_STEP};
use ccpr::mcsim::{simulate as run_simulation, ClassEstimate};
use ccpr::potential::{potential_profile, potential_report, zero_crossings, ProfileSample, ScalarSystem};

use crate::config::{BoundsConfig, EvolveConfig, PotentialConfig, RegionConfig, SimulateConfig, ThresholdConfig};
use crate::output::{fmt4, fmt4_opt, Output, Table};
use crate::{CliError, Experiment};

fn invalid(e: anyhow::Error) -> CliError {
    CliError::Config(e)
}

pub fn threshold(cfg: &ThresholdConfig) -> Result<Output, CliError> {
    let spec = cfg.spec().map_err(invalid)?;
    let table = threshold_table(&spec)?;

    let mut header = vec!["d".to_string()];
    header.extend(table.windows.iter().map(|w| format!("w={w}")));
    header.extend(["g_s_star", "g_conv_star", "g_up_star"].map(String::from));
    let mut csv = Table {
        name: "threshold_table",
        header,
        rows: Vec::new(),
    };
    for row in &table.rows {
        let mut cells = vec![row.degree.to_string()];
        cells.extend(row.published(table.step).into_iter().map(fmt4));
        csv.push(cells);
    }

    let mut out = Output::new(Experiment::Threshold.name(), cfg, &table)?;
    out.tables.push(csv);
    Ok(out)
}

/// Potential profile at one load, with its sign changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadProfile {
    pub load: f64,
    pub samples: Vec<ProfileSample>,
    /// Interior `p` where `U(p; load)` changes sign.
    pub crossings: Vec<f64>,
}

/// `U(p;G)` and `U'(p;G)` on `p = i/points` for each load in `loads`.
pub fn emit_potential_profile(sys: &ScalarSystem, loads: &[f64], points: usize) -> ccpr::Result<Vec<LoadProfile>> {
    ccpr::par::map(loads, |&load| {
        let samples = potential_profile(sys, load, points)?;
        let crossings = zero_crossings(&samples);
        Ok(LoadProfile {
            load,
            samples,
            crossings,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Serialize)]
struct PotentialResults {
    g_s_star: f64,
    g_conv_star: f64,
    g_up_star: f64,
    gap_samples: Vec<ccpr::potential::GapSample>,
    profiles: Vec<LoadProfile>,
}

pub fn potential(cfg: &PotentialConfig) -> Result<Output, CliError> {
    cfg.validate().map_err(invalid)?;
    let sys = ScalarSystem::new(cfg.degree.clone(), cfg.model.clone())?;
    let report = potential_report(&sys, cfg.gap_samples)?;
    let loads = if cfg.profile_loads.is_empty() {
        vec![report.g_s_star, report.g_conv_star, report.g_up_star]
    } else {
        cfg.profile_loads.clone()
    };
    let profiles = emit_potential_profile(&sys, &loads, cfg.profile_points)?;

    let mut thresholds = Table::new("potential", &["g_s_star", "g_conv_star", "g_up_star"]);
    // Same rounding as the threshold tables.
    thresholds.push(vec![
        fmt4(grid_floor(report.g_s_star, THRESHOLD_STEP)),
        fmt4(grid_floor(report.g_conv_star, THRESHOLD_STEP)),
        fmt4(report.g_up_star),
    ]);
    let mut gap = Table::new("energy_gap", &["G", "u", "delta_e", "k_fh", "window_bound"]);
    for s in &report.samples {
        gap.push(vec![
            fmt4(s.load),
            fmt4(s.u),
            fmt4(s.delta_e),
            fmt4(s.k_fh),
            fmt4(s.window_bound),
        ]);
    }
    let mut profile = Table::new("potential_profile", &["G", "p", "U", "U_prime"]);
    let mut crossings = Table::new("potential_crossings", &["G", "p"]);
    for lp in &profiles {
        for s in &lp.samples {
            profile.push(vec![fmt4(lp.load), fmt4(s.p), fmt4(s.potential), fmt4(s.balance)]);
        }
        for &p in &lp.crossings {
            crossings.push(vec![fmt4(lp.load), fmt4(p)]);
        }
    }

    let results = PotentialResults {
        g_s_star: report.g_s_star,
        g_conv_star: report.g_conv_star,
        g_up_star: report.g_up_star,
        gap_samples: report.samples,
        profiles,
    };
    let mut out = Output::new(Experiment::Potential.name(), cfg, &results)?;
    out.tables = vec![thresholds, gap, profile, crossings];
    Ok(out)
}

pub fn region(cfg: &RegionConfig) -> Result<Output, CliError> {
    let specs = cfg.specs().map_err(invalid)?;
    let boundaries = specs.iter().map(region_boundary_2d).collect::<Result<Vec<_>, _>>()?;

    let mut csv = Table::new("region_boundary", &["policy", "w", "g1", "g2", "outer_g2"]);
    for b in &boundaries {
        for pt in &b.points {
            csv.push(vec![
                b.policy.name().to_string(),
                b.window.to_string(),
                fmt4(pt.g1),
                fmt4_opt(pt.g2),
                fmt4_opt(pt.outer_g2),
            ]);
        }
    }
    let mut out = Output::new(Experiment::Region.name(), cfg, &boundaries)?;
    out.tables.push(csv);
    Ok(out)
}

#[derive(Serialize)]
struct EnvelopeResult {
    envelope: String,
    lhs: f64,
    rhs: f64,
    slack: f64,
    holds: bool,
}

pub fn bounds(cfg: &BoundsConfig) -> Result<Output, CliError> {
    let (system, envelopes) = cfg.build().map_err(invalid)?;
    let results = envelopes
        .iter()
        .map(|e| {
            let v = outer_bound_satisfied(&system, e)?;
            Ok(EnvelopeResult {
                envelope: e.label(),
                lhs: v.lhs,
                rhs: v.rhs,
                slack: v.slack,
                holds: v.holds(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut csv = Table::new("bounds", &["envelope", "lhs", "rhs", "slack", "holds"]);
    for r in &results {
        csv.push(vec![
            r.envelope.clone(),
            fmt4(r.lhs),
            fmt4(r.rhs),
            fmt4(r.slack),
            r.holds.to_string(),
        ]);
    }
    let mut out = Output::new(Experiment::Bounds.name(), cfg, &results)?;
    out.tables.push(csv);
    Ok(out)
}

/// Load-weighted mean of the per-stage success of class `k`: the rate a
/// pooled simulation estimates.
fn pooled_success(system: &CcprSystem, trace: &EvolutionTrace, k: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (l, loads) in system.stage_loads().iter().enumerate() {
        num += loads[k] * trace.success_at(k, l);
        den += loads[k];
    }
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

#[derive(Serialize)]
struct SimulationResults {
    classes: Vec<ClassResult>,
    capacity_holds: bool,
    evolution_converged: bool,
}

#[derive(Serialize)]
struct ClassResult {
    #[serde(flatten)]
    estimate: ClassEstimate,
    /// Density-evolution prediction of `rate`.
    de_success: f64,
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Output, CliError> {
    let (system, spec, opts) = cfg.build().map_err(invalid)?;
    let report = run_simulation(&system, &spec)?;
    let trace = ccpr_evolve(&system, &opts)?;
    let classes: Vec<ClassResult> = report
        .classes
        .iter()
        .enumerate()
        .map(|(k, &estimate)| ClassResult {
            estimate,
            de_success: pooled_success(&system, &trace, k),
        })
        .collect();

    let mut csv = Table::new(
        "simulation",
        &[
            "class",
            "users",
            "decoded",
            "rate",
            "std_error",
            "de_success",
            "capacity_holds",
        ],
    );
    for (k, c) in classes.iter().enumerate() {
        csv.push(vec![
            (k + 1).to_string(),
            c.estimate.users.to_string(),
            c.estimate.decoded.to_string(),
            fmt4(c.estimate.rate),
            fmt4(c.estimate.std_error),
            fmt4(c.de_success),
            report.capacity_holds.to_string(),
        ]);
    }
    let results = SimulationResults {
        classes,
        capacity_holds: report.capacity_holds,
        evolution_converged: trace.converged,
    };
    let mut out = Output::new(Experiment::Simulate.name(), cfg, &results)?;
    out.tables.push(csv);
    Ok(out)
}

pub fn evolve(cfg: &EvolveConfig) -> Result<Output, CliError> {
    let (system, opts) = cfg.build().map_err(invalid)?;
    let trace = ccpr_evolve(&system, &opts)?;
    let stable = trace.is_stable(Classification::AllStages);

    let mut stages = Table::new("evolution", &["class", "stage", "load", "p", "q", "success"]);
    for k in 0..trace.classes {
        for l in 0..trace.stages {
            stages.push(vec![
                (k + 1).to_string(),
                (l + 1).to_string(),
                fmt4(system.stage_loads()[l][k]),
                fmt4(trace.p_at(k, l)),
                fmt4(trace.q_at(k, l)),
                fmt4(trace.success_at(k, l)),
            ]);
        }
    }
    let mut summary = Table::new("evolution_summary", &["converged", "iterations", "max_p", "stable"]);
    summary.push(vec![
        trace.converged.to_string(),
        trace.iterations.to_string(),
        fmt4(trace.max_p()),
        stable.to_string(),
    ]);

    let mut out = Output::new(Experiment::Evolve.name(), cfg, &trace)?;
    out.tables = vec![stages, summary];
    Ok(out)
}
