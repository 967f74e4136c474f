//! Scenario engine: named parameter sweeps with deterministic tabular output.
//!
//! Each scenario resolves to a sweep plan (axis, grid, parameter planes,
//! directions). Branch rows report every steady branch per grid point; a
//! quasi-static selection pass marks the branch an up-scan would occupy and
//! carries the isolation ratio; hysteresis scenarios additionally run the
//! time-domain protocol on a decimated schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, Verdict};
use crate::model::{pt_balance, Direction, ParamsError, SystemParams};
use crate::observables::{isolation_ratio, output_amplitude, transmission};
use crate::steady::{
    continuation_sweep, select_quasistatic, SteadyError, SweepAxis, SweepPoint,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Error)]
pub enum ExperimentError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig2d,
    Fig3,
    Fig4a,
    Fig4b,
    Fig5a,
    Fig5b,
    Fig5c,
    Fig5d,
    Fig5e,
    Fig5f,
    Fig6a,
    Fig6b,
    Fig6c,
    Fig6d,
    Fig7,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 18] = [
        ScenarioId::Fig2a,
        ScenarioId::Fig2b,
        ScenarioId::Fig2c,
        ScenarioId::Fig2d,
        ScenarioId::Fig3,
        ScenarioId::Fig4a,
        ScenarioId::Fig4b,
        ScenarioId::Fig5a,
        ScenarioId::Fig5b,
        ScenarioId::Fig5c,
        ScenarioId::Fig5d,
        ScenarioId::Fig5e,
        ScenarioId::Fig5f,
        ScenarioId::Fig6a,
        ScenarioId::Fig6b,
        ScenarioId::Fig6c,
        ScenarioId::Fig6d,
        ScenarioId::Fig7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Fig2a => "fig2a",
            ScenarioId::Fig2b => "fig2b",
            ScenarioId::Fig2c => "fig2c",
            ScenarioId::Fig2d => "fig2d",
            ScenarioId::Fig3 => "fig3",
            ScenarioId::Fig4a => "fig4a",
            ScenarioId::Fig4b => "fig4b",
            ScenarioId::Fig5a => "fig5a",
            ScenarioId::Fig5b => "fig5b",
            ScenarioId::Fig5c => "fig5c",
            ScenarioId::Fig5d => "fig5d",
            ScenarioId::Fig5e => "fig5e",
            ScenarioId::Fig5f => "fig5f",
            ScenarioId::Fig6a => "fig6a",
            ScenarioId::Fig6b => "fig6b",
            ScenarioId::Fig6c => "fig6c",
            ScenarioId::Fig6d => "fig6d",
            ScenarioId::Fig7 => "fig7",
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ExperimentError::UnknownScenario(s.to_string()))
    }
}

/// Optional per-field parameter patch; unspecified fields keep their base
/// values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamPatch {
    pub g: Option<f64>,
    pub j: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa_e: Option<f64>,
    pub gamma: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub eps_p: Option<f64>,
}

impl ParamPatch {
    pub fn apply(&self, base: &SystemParams) -> Result<SystemParams, ParamsError> {
        let p = SystemParams {
            g: self.g.unwrap_or(base.g),
            j: self.j.unwrap_or(base.j),
            kappa1: self.kappa1.unwrap_or(base.kappa1),
            kappa2: 1.0,
            kappa_e: self.kappa_e.unwrap_or(base.kappa_e),
            gamma: self.gamma.unwrap_or(base.gamma),
            delta1: self.delta1.unwrap_or(base.delta1),
            delta2: self.delta2.unwrap_or(base.delta2),
            eps_p: self.eps_p.unwrap_or(base.eps_p),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn is_empty(&self) -> bool {
        *self == ParamPatch::default()
    }
}

/// Declared override surface for `run_scenario`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    pub params: ParamPatch,
    pub grid_points: Option<usize>,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub hysteresis_points: Option<usize>,
    pub t_hold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HysteresisPlanes {
    None,
    All,
    /// Only the plane whose secondary value matches the scenario's own g.
    Primary,
}

/// Fully resolved scenario: shared axis and grid, one parameter plane per
/// curve (or per secondary-axis value for map scenarios).
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: ScenarioId,
    pub base: SystemParams,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub planes: Vec<Plane>,
    hysteresis: HysteresisPlanes,
    pub hysteresis_points: usize,
    pub t_hold: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Plane {
    /// Secondary-axis value (curve parameter); `None` for single-plane sweeps.
    pub axis2: Option<f64>,
    pub params: SystemParams,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn passive_base() -> SystemParams {
    SystemParams { g: 2.0, j: 4.0, eps_p: 0.0, ..SystemParams::passive_defaults() }
}

fn pt_base() -> SystemParams {
    SystemParams::pt_defaults()
}

impl Scenario {
    /// Pinned defaults for a figure id, then the declared overrides.
    pub fn resolve(id: ScenarioId, overrides: &Overrides) -> Result<Scenario, ExperimentError> {
        let n1 = overrides.grid_points.unwrap_or(400);
        if n1 < 2 {
            return Err(ExperimentError::InvalidOverride("grid_points must be >= 2".into()));
        }
        let span = |lo: f64, hi: f64| -> Result<(f64, f64), ExperimentError> {
            let lo = overrides.grid_min.unwrap_or(lo);
            let hi = overrides.grid_max.unwrap_or(hi);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ExperimentError::InvalidOverride(
                    "grid_min/grid_max must be finite with grid_min < grid_max".into(),
                ));
            }
            Ok((lo, hi))
        };
        let patch = |base: SystemParams| overrides.params.apply(&base);

        // (base, axis, default span, planes as (axis2, field patch), hysteresis)
        let build = |base: SystemParams,
                     axis: SweepAxis,
                     lo: f64,
                     hi: f64,
                     planes: Vec<Plane>,
                     hysteresis: HysteresisPlanes|
         -> Result<Scenario, ExperimentError> {
            let (lo, hi) = span(lo, hi)?;
            if axis == SweepAxis::EpsPSq && lo < 0.0 {
                return Err(ExperimentError::InvalidOverride(
                    "eps_p_sq grid must be nonnegative".into(),
                ));
            }
            let hysteresis_points = overrides.hysteresis_points.unwrap_or(41);
            if hysteresis_points < 2 {
                return Err(ExperimentError::InvalidOverride(
                    "hysteresis_points must be >= 2".into(),
                ));
            }
            let t_hold = overrides.t_hold.unwrap_or(dynamics::DEFAULT_T_HOLD);
            if t_hold.is_nan() || t_hold < 50.0 {
                return Err(ExperimentError::InvalidOverride("t_hold must be >= 50".into()));
            }
            Ok(Scenario {
                id,
                base,
                axis,
                grid: linspace(lo, hi, n1),
                planes,
                hysteresis,
                hysteresis_points,
                t_hold,
            })
        };

        let g_family = |base: SystemParams, values: &[f64]| -> Result<Vec<Plane>, ExperimentError> {
            values
                .iter()
                .map(|&g| {
                    let params = SystemParams { g, ..base };
                    params.validate()?;
                    Ok(Plane { axis2: Some(g), params })
                })
                .collect()
        };

        match id {
            ScenarioId::Fig2a | ScenarioId::Fig2b => {
                let base = patch(SystemParams { j: 4.0, ..passive_base() })?;
                let planes = g_family(base, &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0])?;
                build(base, SweepAxis::EpsPSq, 1e-3, 3.0, planes, HysteresisPlanes::All)
            }
            ScenarioId::Fig2c | ScenarioId::Fig2d => {
                let base = patch(SystemParams { g: 2.0, ..passive_base() })?;
                let planes = [1.0, 2.0, 3.0]
                    .iter()
                    .map(|&ratio| {
                        let j = ratio * base.g;
                        let params = SystemParams { j, ..base };
                        params.validate()?;
                        Ok(Plane { axis2: Some(j), params })
                    })
                    .collect::<Result<Vec<_>, ExperimentError>>()?;
                build(base, SweepAxis::EpsPSq, 1e-3, 3.0, planes, HysteresisPlanes::All)
            }
            ScenarioId::Fig3 => {
                let base = patch(SystemParams { g: 2.0, j: 4.0, ..passive_base() })?;
                let planes = [0.0, 0.25, 0.5, 1.0]
                    .iter()
                    .map(|&delta| {
                        let params = SystemParams { delta1: delta, delta2: delta, ..base };
                        params.validate()?;
                        Ok(Plane { axis2: Some(delta), params })
                    })
                    .collect::<Result<Vec<_>, ExperimentError>>()?;
                build(base, SweepAxis::EpsPSq, 1e-3, 2.0, planes, HysteresisPlanes::All)
            }
            ScenarioId::Fig4a => {
                let base = patch(SystemParams { g: 4.0, j: 4.0, ..passive_base() })?;
                // Secondary axis: g over [1, 7] with the reference value on-grid.
                let planes = g_family(base, &linspace(1.0, 7.0, 201))?;
                build(base, SweepAxis::EpsPSq, 0.005, 3.0, planes, HysteresisPlanes::Primary)
            }
            ScenarioId::Fig4b => {
                let base = patch(SystemParams { eps_p: 0.0, ..pt_base() })?;
                let planes = g_family(base, &linspace(0.5, 5.5, 201))?;
                build(base, SweepAxis::EpsPSq, 0.005, 3.0, planes, HysteresisPlanes::Primary)
            }
            ScenarioId::Fig5a | ScenarioId::Fig5b => {
                let base = patch(pt_base())?;
                let planes = vec![Plane { axis2: None, params: base }];
                build(base, SweepAxis::G, 0.0, 6.0, planes, HysteresisPlanes::None)
            }
            ScenarioId::Fig5c | ScenarioId::Fig5d => {
                let base = patch(SystemParams { eps_p: 0.39, ..pt_base() })?;
                let planes = vec![Plane { axis2: None, params: base }];
                build(base, SweepAxis::J, 0.0, 8.0, planes, HysteresisPlanes::None)
            }
            ScenarioId::Fig5e | ScenarioId::Fig5f => {
                let base = patch(pt_base())?;
                let planes = vec![Plane { axis2: None, params: base }];
                build(base, SweepAxis::EpsPSq, 0.005, 2.0, planes, HysteresisPlanes::None)
            }
            ScenarioId::Fig6a | ScenarioId::Fig6b => {
                let base = patch(pt_base())?;
                let planes = vec![Plane { axis2: None, params: base }];
                build(base, SweepAxis::Delta1, -4.0, 4.0, planes, HysteresisPlanes::None)
            }
            ScenarioId::Fig6c | ScenarioId::Fig6d => {
                let base = patch(pt_base())?;
                let planes = vec![Plane { axis2: None, params: base }];
                build(base, SweepAxis::Delta2, -4.0, 4.0, planes, HysteresisPlanes::None)
            }
            ScenarioId::Fig7 => {
                let base = patch(SystemParams { j: 1.0, eps_p: 0.0, ..pt_base() })?;
                let planes = vec![Plane { axis2: None, params: base }];
                build(base, SweepAxis::EpsPSq, 0.005, 2.0, planes, HysteresisPlanes::All)
            }
        }
    }

    fn hysteresis_plane_indices(&self) -> Vec<usize> {
        match self.hysteresis {
            HysteresisPlanes::None => Vec::new(),
            HysteresisPlanes::All => (0..self.planes.len()).collect(),
            HysteresisPlanes::Primary => {
                let target = self.base.g;
                let best = self
                    .planes
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da = (a.axis2.unwrap_or(target) - target).abs();
                        let db = (b.axis2.unwrap_or(target) - target).abs();
                        da.total_cmp(&db)
                    })
                    .map(|(i, _)| i);
                best.into_iter().collect()
            }
        }
    }
}

/// Which row families a sweep emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservableSet {
    /// Per-branch transmission rows.
    pub branches: bool,
    /// Quasi-static selection rows carrying the isolation ratio.
    pub selected: bool,
}

impl Default for ObservableSet {
    fn default() -> Self {
        ObservableSet { branches: true, selected: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub direction: Direction,
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub branch: Option<usize>,
    pub i1: Option<f64>,
    pub t: Option<f64>,
    pub isolation_db: Option<f64>,
    pub stable: Option<bool>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub axis: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisMeta {
    pub points_per_pass: usize,
    pub t_hold: f64,
    pub planes: Vec<Option<f64>>,
}

/// Complete provenance for a result: every default that went into the run is
/// recorded here, so any row is reproducible from the output alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub scenario: String,
    pub tool_version: String,
    pub params: SystemParams,
    pub grid: GridMeta,
    pub axis2_values: Vec<Option<f64>>,
    pub directions: Vec<Direction>,
    pub pt_balance: f64,
    pub rtol: f64,
    pub atol: f64,
    pub hysteresis: Option<HysteresisMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metadata: Metadata,
    pub rows: Vec<SweepRow>,
}

/// Fully specified sweep: the generic engine input.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub scenario: String,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub planes: Vec<Plane>,
    pub directions: Vec<Direction>,
    pub observables: ObservableSet,
}

fn steady_error_code(e: &SteadyError) -> &'static str {
    match e {
        SteadyError::DegenerateParams(_) => "degenerate-params",
        SteadyError::SingularCoefficient(_) => "singular-coefficient",
        SteadyError::SingularLinearSystem => "singular-linear-system",
        SteadyError::NotARoot { .. } => "not-a-root",
        SteadyError::NoConvergence { .. } => "no-convergence",
        SteadyError::MarginalStability { .. } => "marginal-stability",
        SteadyError::InvalidParams(_) => "invalid-params",
    }
}

fn branch_rows(
    out: &mut Vec<SweepRow>,
    scenario: &str,
    plane: &Plane,
    dir: Direction,
    axis: SweepAxis,
    points: &[SweepPoint],
) {
    for point in points {
        match &point.branches {
            Ok(branches) if branches.is_empty() => out.push(SweepRow {
                scenario: scenario.to_string(),
                direction: dir,
                axis1: point.value,
                axis2: plane.axis2,
                branch: None,
                i1: None,
                t: None,
                isolation_db: None,
                stable: None,
                verdict: "no-branches".into(),
            }),
            Ok(branches) => {
                for (i, b) in branches.iter().enumerate() {
                    let params = axis.apply(&plane.params, point.value).expect("grid value");
                    let (t, verdict) = match transmission(&params, dir, b) {
                        Ok(rec) => (Some(rec.t), "ok".to_string()),
                        Err(_) => (None, "zero-drive".to_string()),
                    };
                    out.push(SweepRow {
                        scenario: scenario.to_string(),
                        direction: dir,
                        axis1: point.value,
                        axis2: plane.axis2,
                        branch: Some(i),
                        i1: Some(b.i1),
                        t,
                        isolation_db: None,
                        stable: Some(b.is_stable()),
                        verdict,
                    });
                }
            }
            Err(e) => out.push(SweepRow {
                scenario: scenario.to_string(),
                direction: dir,
                axis1: point.value,
                axis2: plane.axis2,
                branch: None,
                i1: None,
                t: None,
                isolation_db: None,
                stable: None,
                verdict: format!("error:{}", steady_error_code(e)),
            }),
        }
    }
}

struct SelectedPoint {
    branch: Option<usize>,
    i1: Option<f64>,
    t: Option<f64>,
    stable: Option<bool>,
}

fn selection_for(
    plane: &Plane,
    dir: Direction,
    axis: SweepAxis,
    points: &[SweepPoint],
) -> Vec<SelectedPoint> {
    let indices = select_quasistatic(points);
    points
        .iter()
        .zip(indices)
        .map(|(point, idx)| match (idx, &point.branches) {
            (Some(i), Ok(branches)) => {
                let b = &branches[i];
                let params = axis.apply(&plane.params, point.value).expect("grid value");
                let t = transmission(&params, dir, b).ok().map(|r| r.t);
                SelectedPoint {
                    branch: Some(i),
                    i1: Some(b.i1),
                    t,
                    stable: Some(b.is_stable()),
                }
            }
            _ => SelectedPoint { branch: None, i1: None, t: None, stable: None },
        })
        .collect()
}

/// Generic sweep engine. Grid points within a plane-direction block are
/// evaluated in parallel; assembly is strictly plane-, direction-, then
/// grid-ordered, so output bytes do not depend on worker scheduling. The
/// cancellation flag short-circuits blocks that have not started; cancelled
/// points are emitted as `canceled` rows.
pub fn sweep(plan: &SweepPlan, cancel: Option<&AtomicBool>) -> SweepResult {
    let canceled = || cancel.is_some_and(|c| c.load(Ordering::Relaxed));
    let mut rows = Vec::new();

    for plane in &plan.planes {
        // Evaluate all requested directions first so selection rows can pair
        // the two transmissions at each grid point.
        let mut per_dir: Vec<(Direction, Option<Vec<SweepPoint>>)> = Vec::new();
        for &dir in &plan.directions {
            if canceled() {
                per_dir.push((dir, None));
                continue;
            }
            per_dir.push((dir, Some(continuation_sweep(&plane.params, dir, plan.axis, &plan.grid))));
        }

        if plan.observables.branches {
            for (dir, points) in &per_dir {
                match points {
                    Some(points) => branch_rows(&mut rows, &plan.scenario, plane, *dir, plan.axis, points),
                    None => {
                        for &v in &plan.grid {
                            rows.push(SweepRow {
                                scenario: plan.scenario.clone(),
                                direction: *dir,
                                axis1: v,
                                axis2: plane.axis2,
                                branch: None,
                                i1: None,
                                t: None,
                                isolation_db: None,
                                stable: None,
                                verdict: "canceled".into(),
                            });
                        }
                    }
                }
            }
        }

        if plan.observables.selected {
            let selections: Vec<(Direction, Option<Vec<SelectedPoint>>)> = per_dir
                .iter()
                .map(|(dir, points)| {
                    (*dir, points.as_ref().map(|p| selection_for(plane, *dir, plan.axis, p)))
                })
                .collect();
            let fwd_t = |i: usize| -> Option<f64> {
                selections
                    .iter()
                    .find(|(d, _)| *d == Direction::Forward)
                    .and_then(|(_, s)| s.as_ref())
                    .and_then(|s| s[i].t)
            };
            let bwd_t = |i: usize| -> Option<f64> {
                selections
                    .iter()
                    .find(|(d, _)| *d == Direction::Backward)
                    .and_then(|(_, s)| s.as_ref())
                    .and_then(|s| s[i].t)
            };
            for (i, &axis1) in plan.grid.iter().enumerate() {
                let iso = match (bwd_t(i), fwd_t(i)) {
                    (Some(t_l), Some(t_r)) => isolation_ratio(t_l, t_r),
                    (l, r) => Err(crate::observables::ObservablesError::UndefinedRatio {
                        t_l: l.unwrap_or(0.0),
                        t_r: r.unwrap_or(0.0),
                    }),
                };
                let (iso_db, iso_tag) = match &iso {
                    Ok(v) => (Some(*v), String::new()),
                    Err(e) => match e.limit_db() {
                        Some(f64::INFINITY) => (None, ":iso+inf".to_string()),
                        Some(f64::NEG_INFINITY) => (None, ":iso-inf".to_string()),
                        _ => (None, ":iso-undefined".to_string()),
                    },
                };
                for (dir, sel) in &selections {
                    let Some(sel) = sel else {
                        rows.push(SweepRow {
                            scenario: plan.scenario.clone(),
                            direction: *dir,
                            axis1,
                            axis2: plane.axis2,
                            branch: None,
                            i1: None,
                            t: None,
                            isolation_db: None,
                            stable: None,
                            verdict: "canceled".into(),
                        });
                        continue;
                    };
                    let s = &sel[i];
                    rows.push(SweepRow {
                        scenario: plan.scenario.clone(),
                        direction: *dir,
                        axis1,
                        axis2: plane.axis2,
                        branch: s.branch,
                        i1: s.i1,
                        t: s.t,
                        isolation_db: iso_db,
                        stable: s.stable,
                        verdict: format!("selected{iso_tag}"),
                    });
                }
            }
        }
    }

    SweepResult {
        metadata: Metadata {
            scenario: plan.scenario.clone(),
            tool_version: TOOL_VERSION.to_string(),
            params: plan.planes.first().map(|p| p.params).unwrap_or_else(SystemParams::pt_defaults),
            grid: GridMeta {
                axis: plan.axis.label().to_string(),
                min: plan.grid.first().copied().unwrap_or(f64::NAN),
                max: plan.grid.last().copied().unwrap_or(f64::NAN),
                points: plan.grid.len(),
            },
            axis2_values: plan.planes.iter().map(|p| p.axis2).collect(),
            directions: plan.directions.clone(),
            pt_balance: plan
                .planes
                .first()
                .map(|p| pt_balance(&p.params))
                .unwrap_or(f64::NAN),
            rtol: dynamics::DEFAULT_RTOL,
            atol: dynamics::DEFAULT_ATOL,
            hysteresis: None,
        },
        rows,
    }
}

fn hysteresis_rows(
    scenario: &str,
    plane: &Plane,
    dir: Direction,
    schedule: &[f64],
    points_per_pass: usize,
    t_hold: f64,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let steps = dynamics::hysteresis_scan(&plane.params, dir, schedule, t_hold)?;
    let mut rows = Vec::with_capacity(steps.len());
    for (k, step) in steps.iter().enumerate() {
        let pass = if k < points_per_pass { "hyst-up" } else { "hyst-down" };
        let params = SweepAxis::EpsPSq.apply(&plane.params, step.eps_sq)?;
        let branches = crate::steady::enumerate_branches(&params, dir).ok();
        let (matched, stable) = match (step.i1, &branches) {
            (Some(i1), Some(branches)) => match dynamics::match_branch(i1, branches) {
                dynamics::BranchMatch::Matched(i) => {
                    (Some(i), Some(branches[i].is_stable()))
                }
                _ => (None, None),
            },
            _ => (None, None),
        };
        let t = match (&step.verdict, step.i1) {
            (Verdict::Settled(state), _) if params.eps_p > 0.0 => {
                let out = output_amplitude(state, &params, dir);
                Some(out.norm_sqr() / (params.eps_p * params.eps_p))
            }
            _ => None,
        };
        rows.push(SweepRow {
            scenario: scenario.to_string(),
            direction: dir,
            axis1: step.eps_sq,
            axis2: plane.axis2,
            branch: matched,
            i1: step.i1,
            t,
            isolation_db: None,
            stable,
            verdict: format!("{pass}:{}", step.verdict.label()),
        });
    }
    Ok(rows)
}

/// Standalone time-domain hysteresis scan packaged as a result table.
pub fn hysteresis_result(
    params: &SystemParams,
    directions: &[Direction],
    eps_sq_range: (f64, f64),
    points_per_pass: usize,
    t_hold: f64,
) -> Result<SweepResult, ExperimentError> {
    let (lo, hi) = eps_sq_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
        return Err(ExperimentError::InvalidOverride(
            "hysteresis range must satisfy 0 <= min < max".into(),
        ));
    }
    let schedule = dynamics::up_down_schedule(lo, hi, points_per_pass);
    let plane = Plane { axis2: None, params: *params };
    let mut rows = Vec::new();
    for &dir in directions {
        rows.extend(hysteresis_rows(
            "hysteresis",
            &plane,
            dir,
            &schedule,
            points_per_pass,
            t_hold,
        )?);
    }
    Ok(SweepResult {
        metadata: Metadata {
            scenario: "hysteresis".to_string(),
            tool_version: TOOL_VERSION.to_string(),
            params: *params,
            grid: GridMeta {
                axis: SweepAxis::EpsPSq.label().to_string(),
                min: lo,
                max: hi,
                points: points_per_pass,
            },
            axis2_values: vec![None],
            directions: directions.to_vec(),
            pt_balance: pt_balance(params),
            rtol: dynamics::DEFAULT_RTOL,
            atol: dynamics::DEFAULT_ATOL,
            hysteresis: Some(HysteresisMeta {
                points_per_pass,
                t_hold,
                planes: vec![None],
            }),
        },
        rows,
    })
}

/// Run a named figure scenario: a continuation sweep over both directions
/// plus, for the hysteresis scenarios, a time-domain up-down scan.
pub fn run_scenario(id: ScenarioId, overrides: &Overrides) -> Result<SweepResult, ExperimentError> {
    run_scenario_cancelable(id, overrides, None)
}

pub fn run_scenario_cancelable(
    id: ScenarioId,
    overrides: &Overrides,
    cancel: Option<&AtomicBool>,
) -> Result<SweepResult, ExperimentError> {
    let scenario = Scenario::resolve(id, overrides)?;
    let plan = SweepPlan {
        scenario: id.name().to_string(),
        axis: scenario.axis,
        grid: scenario.grid.clone(),
        planes: scenario.planes.clone(),
        directions: Direction::BOTH.to_vec(),
        observables: ObservableSet::default(),
    };
    let mut result = sweep(&plan, cancel);
    result.metadata.params = scenario.base;
    result.metadata.pt_balance = pt_balance(&scenario.base);

    let hyst_planes = scenario.hysteresis_plane_indices();
    if !hyst_planes.is_empty() && scenario.axis == SweepAxis::EpsPSq {
        let lo = *scenario.grid.first().unwrap();
        let hi = *scenario.grid.last().unwrap();
        let schedule = dynamics::up_down_schedule(lo, hi, scenario.hysteresis_points);
        result.metadata.hysteresis = Some(HysteresisMeta {
            points_per_pass: scenario.hysteresis_points,
            t_hold: scenario.t_hold,
            planes: hyst_planes.iter().map(|&i| scenario.planes[i].axis2).collect(),
        });
        // Hysteresis scans are independent per (plane, direction); run them
        // in parallel, assemble in plane-then-direction order.
        let jobs: Vec<(usize, Direction)> = hyst_planes
            .iter()
            .flat_map(|&p| Direction::BOTH.map(|d| (p, d)))
            .collect();
        let blocks: Vec<Result<Vec<SweepRow>, ExperimentError>> = jobs
            .par_iter()
            .map(|&(p, dir)| {
                if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                    return Ok(Vec::new());
                }
                hysteresis_rows(
                    id.name(),
                    &scenario.planes[p],
                    dir,
                    &schedule,
                    scenario.hysteresis_points,
                    scenario.t_hold,
                )
            })
            .collect();
        for block in blocks {
            result.rows.extend(block?);
        }
    }
    Ok(result)
}
