//! Threshold scans and two-class region sweeps built on density evolution.
//!
//! Loads live on an integer grid `G_i = i·δ`, so every mode of the scan
//! visits exactly the same floating-point loads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{ccpr_evolve, probe_stage, punctured_scalar_evolve, CcprSystem, Classification, EvolveOptions};
use crate::models::{CprSystem, DegreeDistribution, SlicingPolicy, SuccessModel};
use crate::potential::{potential_threshold, potential_upper_bound, single_system_threshold, ScalarSystem};
use crate::{bounds, par};

/// Scan resolution for one-dimensional thresholds.
pub const THRESHOLD_STEP: f64 = 1e-4;

/// Grid resolution of two-class region sweeps.
pub const REGION_STEP: f64 = 0.01;

/// Number of coupled stages used throughout the threshold study.
pub const DEFAULT_STAGES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Every grid point from `lo` upward until the first instability.
    Exhaustive,
    /// Ascending scans at strides `10^k·δ, ..., δ`, each restarted from the
    /// last stable point. Finds the same point as the exhaustive scan
    /// whenever stability is monotone in the load.
    #[default]
    Refining,
    /// Bisection on the grid between a stable `lo` and an unstable `hi`.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    #[serde(default)]
    pub mode: ScanMode,
}

impl ScanSpec {
    pub fn new(lo: f64, hi: f64, step: f64, mode: ScanMode) -> Self {
        Self { lo, hi, step, mode }
    }

    fn grid_index(&self, value: f64, name: &str) -> Result<i64> {
        let idx = (value / self.step).round();
        if ((idx * self.step) - value).abs() > 1e-9 * self.step.max(value.abs()) {
            return Err(Error::Scan(format!(
                "{name} = {value} is not a multiple of the step {}",
                self.step
            )));
        }
        Ok(idx as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    /// Largest grid load found stable.
    pub g_star: f64,
    /// `g_star + step`, found unstable.
    pub first_unstable: f64,
    pub step: f64,
    pub mode: ScanMode,
    /// Every `(load, stable)` classification made, in evaluation order.
    pub evaluations: Vec<(f64, bool)>,
}

/// Scans loads for the first instability of `is_stable`.
pub fn find_threshold<F>(is_stable: F, scan: &ScanSpec) -> Result<ThresholdResult>
where
    F: Fn(f64) -> Result<bool>,
{
    if !(scan.step > 0.0) || !(scan.hi > scan.lo) {
        return Err(Error::Scan(format!(
            "need lo < hi and step > 0, got lo = {}, hi = {}, step = {}",
            scan.lo, scan.hi, scan.step
        )));
    }
    let lo = scan.grid_index(scan.lo, "lo")?;
    let hi = scan.grid_index(scan.hi, "hi")?;
    let load = |i: i64| grid_point(i, scan.step);
    let mut evaluations = Vec::new();
    let mut eval = |i: i64| -> Result<bool> {
        let s = is_stable(load(i))?;
        evaluations.push((load(i), s));
        Ok(s)
    };
    if !eval(lo)? {
        return Err(Error::Scan(format!(
            "the system is already unstable at lo = {}",
            scan.lo
        )));
    }
    let none_found = || Error::Scan(format!("no instability found up to hi = {}", scan.hi));
    let last_stable = match scan.mode {
        ScanMode::Exhaustive => {
            let mut i = lo + 1;
            loop {
                if i > hi {
                    return Err(none_found());
                }
                if !eval(i)? {
                    break i - 1;
                }
                i += 1;
            }
        }
        ScanMode::Refining => {
            let mut stride = 1i64;
            while stride * 10 <= hi - lo {
                stride *= 10;
            }
            let (mut stable, mut unstable) = (lo, None::<i64>);
            while stride >= 1 {
                let mut i = stable + stride;
                while i <= hi && unstable.is_none_or(|u| i < u) {
                    if eval(i)? {
                        stable = i;
                        i += stride;
                    } else {
                        unstable = Some(i);
                        break;
                    }
                }
                stride /= 10;
            }
            match unstable {
                Some(u) if u == stable + 1 => stable,
                _ => return Err(none_found()),
            }
        }
        ScanMode::Bisection => {
            if eval(hi)? {
                return Err(none_found());
            }
            let (mut a, mut b) = (lo, hi);
            while b - a > 1 {
                let mid = a + (b - a) / 2;
                if eval(mid)? {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            a
        }
    };
    Ok(ThresholdResult {
        g_star: load(last_stable),
        first_unstable: load(last_stable + 1),
        step: scan.step,
        mode: scan.mode,
        evaluations,
    })
}

/// `i·step`, computed as `i / n` when `step = 1/n` so that grid loads are
/// the closest doubles to their decimal values.
pub fn grid_point(i: i64, step: f64) -> f64 {
    let inv = (1.0 / step).round();
    if (inv * step - 1.0).abs() < 1e-12 {
        i as f64 / inv
    } else {
        i as f64 * step
    }
}

/// Rounds to the four decimals used in published threshold tables.
pub fn round4(value: f64) -> f64 {
    (value * 1e4).round() / 1e4
}

/// Largest multiple of `step` not above `value` (up to rounding noise).
pub fn grid_floor(value: f64, step: f64) -> f64 {
    ((value / step) + 1e-9).floor() * step
}

/// Single-class punctured coupled system whose threshold is scanned.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSetup {
    pub degree: DegreeDistribution,
    pub model: SuccessModel,
    pub window: usize,
    pub stages: usize,
    pub options: EvolveOptions,
}

impl CoupledSetup {
    pub fn is_stable(&self, load: f64) -> Result<bool> {
        let trace = punctured_scalar_evolve(load, &self.degree, &self.model, self.window, self.stages, &self.options)?;
        Ok(trace.is_stable(Classification::AllStages))
    }

    pub fn threshold(&self, scan: &ScanSpec) -> Result<ThresholdResult> {
        find_threshold(|g| self.is_stable(g), scan)
    }
}

/// Threshold of an arbitrary coupled system family `load -> CcprSystem`.
pub fn find_coupled_threshold<F>(
    factory: F,
    options: &EvolveOptions,
    how: Classification,
    scan: &ScanSpec,
) -> Result<ThresholdResult>
where
    F: Fn(f64) -> Result<CcprSystem>,
{
    find_threshold(|g| Ok(ccpr_evolve(&factory(g)?, options)?.is_stable(how)), scan)
}

/// Upper end of the scan range: no single-class system is stable at a load
/// above the largest number of packets one receiver can decode.
fn scan_ceiling(model: &SuccessModel) -> f64 {
    match model {
        SuccessModel::SlottedAloha | SuccessModel::NearFar => 1.0,
        SuccessModel::DFold { fold } => *fold as f64,
        SuccessModel::DFoldMixture { weights } => weights.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTableSpec {
    pub model: SuccessModel,
    /// Regular degrees, one table row each.
    pub degrees: Vec<usize>,
    pub windows: Vec<usize>,
    pub stages: usize,
    pub step: f64,
    #[serde(default)]
    pub mode: ScanMode,
    pub max_iter: usize,
    pub tol: f64,
}

impl ThresholdTableSpec {
    /// Layout of the published tables: `d = 3..6`, `w = 1..4`, `L = 40`.
    pub fn standard(model: SuccessModel) -> Self {
        Self {
            model,
            degrees: vec![3, 4, 5, 6],
            windows: vec![1, 2, 3, 4],
            stages: DEFAULT_STAGES,
            step: THRESHOLD_STEP,
            mode: ScanMode::Refining,
            max_iter: EvolveOptions::default().max_iter,
            tol: EvolveOptions::default().tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub degree: usize,
    /// Coupled thresholds in the order of `windows`.
    pub coupled: Vec<f64>,
    pub g_s_star: f64,
    pub g_conv_star: f64,
    pub g_up_star: f64,
}

impl ThresholdRow {
    /// The row as printed in four-decimal tables: coupled thresholds as
    /// scanned, `G_s*` and `G_conv*` floored to the scan grid (they are
    /// suprema of stable loads, like the scanned columns) and `G_up*`
    /// rounded (it solves an equation).
    pub fn published(&self, step: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.coupled.iter().map(|&g| round4(g)).collect();
        out.push(round4(grid_floor(self.g_s_star, step)));
        out.push(round4(grid_floor(self.g_conv_star, step)));
        out.push(round4(self.g_up_star));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTable {
    pub windows: Vec<usize>,
    pub step: f64,
    pub rows: Vec<ThresholdRow>,
}

enum Cell {
    Coupled {
        row: usize,
        col: usize,
        setup: CoupledSetup,
    },
    Potential {
        row: usize,
        sys: ScalarSystem,
    },
}

enum CellValue {
    Coupled(usize, usize, f64),
    Potential(usize, [f64; 3]),
}

/// Coupled thresholds and potential thresholds for every `(d, w)` cell,
/// evaluated in parallel and assembled in canonical order.
pub fn threshold_table(spec: &ThresholdTableSpec) -> Result<ThresholdTable> {
    spec.model.validate()?;
    let options = EvolveOptions {
        max_iter: spec.max_iter,
        tol: spec.tol,
        record_history: false,
    };
    let scan = ScanSpec::new(0.0, scan_ceiling(&spec.model), spec.step, spec.mode);
    let mut cells = Vec::new();
    for (row, &d) in spec.degrees.iter().enumerate() {
        let degree = DegreeDistribution::regular(d)?;
        cells.push(Cell::Potential {
            row,
            sys: ScalarSystem::new(degree.clone(), spec.model.clone())?,
        });
        for (col, &w) in spec.windows.iter().enumerate() {
            cells.push(Cell::Coupled {
                row,
                col,
                setup: CoupledSetup {
                    degree: degree.clone(),
                    model: spec.model.clone(),
                    window: w,
                    stages: spec.stages,
                    options,
                },
            });
        }
    }
    let values = par::map(&cells, |cell| -> Result<CellValue> {
        match cell {
            Cell::Coupled { row, col, setup } => Ok(CellValue::Coupled(*row, *col, setup.threshold(&scan)?.g_star)),
            Cell::Potential { row, sys } => Ok(CellValue::Potential(
                *row,
                [
                    single_system_threshold(sys)?,
                    potential_threshold(sys)?,
                    potential_upper_bound(sys)?,
                ],
            )),
        }
    });
    let mut rows: Vec<ThresholdRow> = spec
        .degrees
        .iter()
        .map(|&degree| ThresholdRow {
            degree,
            coupled: vec![f64::NAN; spec.windows.len()],
            g_s_star: f64::NAN,
            g_conv_star: f64::NAN,
            g_up_star: f64::NAN,
        })
        .collect();
    for value in values {
        match value? {
            CellValue::Coupled(r, c, g) => rows[r].coupled[c] = g,
            CellValue::Potential(r, [s, c, u]) => {
                rows[r].g_s_star = s;
                rows[r].g_conv_star = c;
                rows[r].g_up_star = u;
            }
        }
    }
    Ok(ThresholdTable {
        windows: spec.windows.clone(),
        step: spec.step,
        rows,
    })
}

/// Settings of a two-class region sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub policy: SlicingPolicy,
    pub degree1: DegreeDistribution,
    pub degree2: DegreeDistribution,
    pub window: usize,
    pub stages: usize,
    pub step: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Largest `G1` column swept.
    pub g1_max: f64,
    /// Largest `G2` tried in a column.
    pub g2_max: f64,
}

impl RegionSpec {
    /// Two-class setting of the published sweeps: `Λ1 = x^5`,
    /// `Λ2 = 0.5102x^2 + 0.4898x^4`, `L = 40`, grid 0.01, 10,000 iterations.
    pub fn standard(policy: SlicingPolicy, window: usize) -> Self {
        Self {
            policy,
            degree1: DegreeDistribution::regular(5).expect("valid"),
            degree2: DegreeDistribution::from_pairs(&[(2, 0.5102), (4, 0.4898)]).expect("valid"),
            window,
            stages: DEFAULT_STAGES,
            step: REGION_STEP,
            max_iter: EvolveOptions::sweep().max_iter,
            tol: EvolveOptions::sweep().tol,
            g1_max: 1.0,
            g2_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub g1: f64,
    /// Largest stable `G2` on the grid; `None` if `(G1, 0)` is unstable.
    pub g2: Option<f64>,
    /// Largest `G2` allowed by the policy's outer bounds.
    pub outer_g2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionBoundary {
    pub policy: SlicingPolicy,
    pub window: usize,
    pub stages: usize,
    pub step: f64,
    pub points: Vec<BoundaryPoint>,
}

impl RegionBoundary {
    /// Every grid point classified stable: `(G1, G2)` with `G2` at or below
    /// the column's boundary.
    pub fn stable_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for pt in &self.points {
            if let Some(top) = pt.g2 {
                let n = (top / self.step).round() as i64;
                out.extend((0..=n).map(|i| (pt.g1, grid_point(i, self.step))));
            }
        }
        out
    }
}

/// Stability of one two-class load pair, judged at the probe stage `L/2`.
pub fn two_class_stable(spec: &RegionSpec, g1: f64, g2: f64) -> Result<bool> {
    let base = CprSystem::two_class(spec.policy, [g1, g2], [spec.degree1.clone(), spec.degree2.clone()])?;
    // With a window of one the stages decouple and all equal the base CPR.
    let stages = if spec.window == 1 { 1 } else { spec.stages };
    let system = CcprSystem::punctured(base, stages, spec.window)?;
    let options = EvolveOptions {
        max_iter: spec.max_iter,
        tol: spec.tol,
        record_history: false,
    };
    let trace = ccpr_evolve(&system, &options)?;
    Ok(trace.is_stable(Classification::ProbeStage(probe_stage(stages))))
}

/// For every `G1` column, the largest stable `G2` by an ascending scan with
/// early exit; columns run in parallel.
pub fn region_boundary_2d(spec: &RegionSpec) -> Result<RegionBoundary> {
    if !(spec.step > 0.0) {
        return Err(Error::Scan("grid step must be positive".into()));
    }
    let columns = (spec.g1_max / spec.step).round() as i64;
    let rows = (spec.g2_max / spec.step).round() as i64;
    let idx: Vec<i64> = (0..=columns).collect();
    let points = par::map(&idx, |&i| -> Result<BoundaryPoint> {
        let g1 = grid_point(i, spec.step);
        let mut top = None;
        for r in 0..=rows {
            let g2 = grid_point(r, spec.step);
            if two_class_stable(spec, g1, g2)? {
                top = Some(g2);
            } else {
                break;
            }
        }
        let outer_g2 = bounds::policy_max_g2(spec.policy, g1, &spec.degree1, &spec.degree2)?;
        Ok(BoundaryPoint { g1, g2: top, outer_g2 })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RegionBoundary {
        policy: spec.policy,
        window: spec.window,
        stages: spec.stages,
        step: spec.step,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_function(t: f64) -> impl Fn(f64) -> Result<bool> {
        move |g| Ok(g <= t + 1e-12)
    }

    #[test]
    fn modes_agree_on_a_step_function() {
        for &t in &[0.0, 0.0001, 0.4321, 0.9999] {
            let mut found = Vec::new();
            for mode in [ScanMode::Exhaustive, ScanMode::Refining, ScanMode::Bisection] {
                let r = find_threshold(step_function(t), &ScanSpec::new(0.0, 1.0, 1e-4, mode)).unwrap();
                found.push(r.g_star);
            }
            assert!(found.iter().all(|&g| (g - t).abs() < 1e-12), "{t}: {found:?}");
        }
    }

    #[test]
    fn refining_uses_few_evaluations() {
        let r = find_threshold(
            step_function(0.4321),
            &ScanSpec::new(0.0, 1.0, 1e-4, ScanMode::Refining),
        )
        .unwrap();
        assert!(r.evaluations.len() < 60);
    }

    #[test]
    fn scan_errors() {
        let spec = ScanSpec::new(0.0, 1.0, 1e-4, ScanMode::Refining);
        assert!(find_threshold(|_| Ok(false), &spec).is_err());
        assert!(find_threshold(|_| Ok(true), &spec).is_err());
        assert!(find_threshold(|_| Ok(true), &ScanSpec::new(0.00005, 1.0, 1e-4, ScanMode::Exhaustive)).is_err());
    }

    #[test]
    fn uncoupled_irsa_threshold() {
        let setup = CoupledSetup {
            degree: DegreeDistribution::regular(5).unwrap(),
            model: SuccessModel::SlottedAloha,
            window: 1,
            stages: 1,
            options: EvolveOptions::default(),
        };
        let r = setup
            .threshold(&ScanSpec::new(0.0, 1.0, 1e-4, ScanMode::Refining))
            .unwrap();
        assert!((r.g_star - 0.7017).abs() < 2e-4, "{}", r.g_star);
    }

    #[test]
    fn grid_floor_keeps_grid_points() {
        assert_eq!(round4(grid_floor(0.818469, 1e-4)), 0.8184);
        assert_eq!(round4(grid_floor(0.9179, 1e-4)), 0.9179);
        assert_eq!(round4(grid_floor(2.999997, 1e-4)), 2.9999);
    }

    #[test]
    fn round_to_four_decimals() {
        assert_eq!(round4(0.91794999), 0.9179);
        assert_eq!(round4(2.99996), 3.0);
    }
}
