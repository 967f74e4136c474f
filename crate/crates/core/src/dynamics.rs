//! Time-domain oracle: adaptive integration of the full nonlinear system,
//! attractor settling and quasi-static hysteresis scans.
//!
//! The stepper is a Dormand-Prince 5(4) embedded pair with PI step-size
//! control and the standard fifth-order dense interpolant. A single
//! integration is strictly sequential and bit-reproducible.

use thiserror::Error;

use crate::model::{drift, Direction, StateVector, SystemParams};
use crate::steady::SteadyBranch;

pub const DEFAULT_RTOL: f64 = 1e-9;
pub const DEFAULT_ATOL: f64 = 1e-12;
/// Amplitude norm beyond which a trajectory counts as blown up.
pub const BLOWUP_NORM: f64 = 1e6;
/// Drift norm below which a state counts as settled.
pub const SETTLE_RESIDUAL: f64 = 1e-10;
/// Horizon for `settle`; limit cycles and slower relaxations report NotSettled.
pub const SETTLE_T_MAX: f64 = 1e4;
/// Default quasi-static hold per hysteresis step, about 20x the slowest
/// relaxation time at gamma = 0.1.
pub const DEFAULT_T_HOLD: f64 = 200.0;
/// I1 tolerance when matching a settled state to an enumerated branch.
pub const MATCH_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("invalid tolerance: rtol and atol must lie in (0, 1e-2]")]
    InvalidTolerance,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    /// Drift norm fell below `SETTLE_RESIDUAL`; carries the fixed point.
    Settled(StateVector),
    /// Norm exceeded `BLOWUP_NORM` at the given time.
    BlowUp(f64),
    /// Horizon reached without settling (e.g. a limit cycle).
    NotSettled,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Settled(_) => "settled",
            Verdict::BlowUp(_) => "blowup",
            Verdict::NotSettled => "notsettled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub verdict: Verdict,
}

// Dormand-Prince 5(4) tableau. The drift is autonomous, so the stage nodes
// never enter explicitly.
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2; // strongest shrink per step is x0.2
const FAC_MAX: f64 = 10.0; // strongest growth per step is x10
const H_FLOOR: f64 = 1e-14;
/// Hard cap for explicit-horizon integration.
const MAX_STEPS: usize = 20_000_000;
/// Budget per relaxation (settle / hysteresis hold). Any genuine settling
/// path fits comfortably; oscillatory gain blow-ups whose frequency grows
/// with amplitude exhaust it and are reported as NotSettled.
const RELAX_STEPS: usize = 2_000_000;

struct Stepper<'a> {
    params: &'a SystemParams,
    dir: Direction,
    rtol: f64,
    atol: f64,
    t: f64,
    y: StateVector,
    /// FSAL derivative at (t, y).
    k1: StateVector,
    h: f64,
    facold: f64,
    t_old: f64,
    y_old: StateVector,
    h_last: f64,
    cont: [StateVector; 5],
    steps: usize,
    budget: usize,
}

impl<'a> Stepper<'a> {
    fn new(
        params: &'a SystemParams,
        dir: Direction,
        y0: StateVector,
        rtol: f64,
        atol: f64,
    ) -> Self {
        let k1 = drift(&y0, params, dir);
        let h = initial_step(params, dir, &y0, &k1, rtol, atol);
        Stepper {
            params,
            dir,
            rtol,
            atol,
            t: 0.0,
            y: y0,
            k1,
            h,
            facold: 1e-4,
            t_old: 0.0,
            y_old: y0,
            h_last: h,
            cont: [StateVector::ZERO; 5],
            steps: 0,
            budget: MAX_STEPS,
        }
    }

    fn scaled_error(&self, y_new: &StateVector, err_vec: &StateVector) -> f64 {
        let y0 = self.y.to_real();
        let y1 = y_new.to_real();
        let er = err_vec.to_real();
        let mut acc = 0.0;
        for i in 0..crate::model::DIM {
            let sk = self.atol + self.rtol * y0[i].abs().max(y1[i].abs());
            let q = er[i] / sk;
            acc += q * q;
        }
        (acc / crate::model::DIM as f64).sqrt()
    }

    /// One accepted step, at most `h_cap` long. Rejected trials shrink the
    /// step internally.
    fn advance(&mut self, h_cap: f64) -> Result<(), DynamicsError> {
        loop {
            self.steps += 1;
            if self.steps > self.budget {
                return Err(DynamicsError::TooManySteps { t: self.t });
            }
            let h = self.h.min(h_cap);
            if h < H_FLOOR {
                return Err(DynamicsError::StepUnderflow { t: self.t });
            }
            let f = |s: &StateVector| drift(s, self.params, self.dir);

            let k1 = self.k1;
            let k2 = f(&(self.y + k1 * (A[0][0] * h)));
            let k3 = f(&(self.y + (k1 * A[1][0] + k2 * A[1][1]) * h));
            let k4 = f(&(self.y + (k1 * A[2][0] + k2 * A[2][1] + k3 * A[2][2]) * h));
            let k5 = f(&(self.y
                + (k1 * A[3][0] + k2 * A[3][1] + k3 * A[3][2] + k4 * A[3][3]) * h));
            let k6 = f(&(self.y
                + (k1 * A[4][0] + k2 * A[4][1] + k3 * A[4][2] + k4 * A[4][3] + k5 * A[4][4])
                    * h));
            let y_new = self.y
                + (k1 * A[5][0] + k3 * A[5][2] + k4 * A[5][3] + k5 * A[5][4] + k6 * A[5][5])
                    * h;
            let k7 = f(&y_new);

            let err_vec = (k1 * E[0] + k3 * E[2] + k4 * E[3] + k5 * E[4] + k6 * E[5]
                + k7 * E[6])
                * h;
            let err = self.scaled_error(&y_new, &err_vec);

            if err.is_finite() && err <= 1.0 {
                // Accept; PI controller for the next step.
                let fac11 = err.powf(EXPO1);
                let fac = (fac11 / self.facold.powf(BETA) / SAFE)
                    .clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.facold = err.max(1e-4);

                let ydiff = y_new - self.y;
                let bspl = k1 * h - ydiff;
                self.cont = [
                    self.y,
                    ydiff,
                    bspl,
                    ydiff - k7 * h - bspl,
                    (k1 * D[0] + k3 * D[2] + k4 * D[3] + k5 * D[4] + k6 * D[5] + k7 * D[6])
                        * h,
                ];
                self.t_old = self.t;
                self.y_old = self.y;
                self.h_last = h;
                self.t += h;
                self.y = y_new;
                self.k1 = k7;
                self.h = h / fac;
                return Ok(());
            }
            // Reject: shrink and retry.
            let fac11 = if err.is_finite() { err.powf(EXPO1) } else { 1.0 / FAC_MIN };
            self.h = h / (fac11 / SAFE).clamp(1.0, 1.0 / FAC_MIN);
        }
    }

    /// Dense interpolation inside the last accepted step.
    fn interpolate(&self, t: f64) -> StateVector {
        let s = if self.h_last == 0.0 { 0.0 } else { (t - self.t_old) / self.h_last };
        let s1 = 1.0 - s;
        self.cont[0]
            + (self.cont[1] + (self.cont[2] + (self.cont[3] + self.cont[4] * s1) * s) * s1) * s
    }
}

/// Classical step-size estimate for a 5th-order method (Hairer's `hinit`).
fn initial_step(
    params: &SystemParams,
    dir: Direction,
    y0: &StateVector,
    f0: &StateVector,
    rtol: f64,
    atol: f64,
) -> f64 {
    let sc = |v: &StateVector| {
        let yr = y0.to_real();
        let vr = v.to_real();
        let mut acc = 0.0;
        for i in 0..crate::model::DIM {
            let sk = atol + rtol * yr[i].abs();
            acc += (vr[i] / sk) * (vr[i] / sk);
        }
        (acc / crate::model::DIM as f64).sqrt()
    };
    let d0 = sc(y0);
    let d1 = sc(f0);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = *y0 + *f0 * h0;
    let f1 = drift(&y1, params, dir);
    let d2 = sc(&(f1 - *f0)) / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

fn check_tols(rtol: f64, atol: f64) -> Result<(), DynamicsError> {
    if rtol > 0.0 && rtol <= 1e-2 && atol > 0.0 && atol <= 1e-2 {
        Ok(())
    } else {
        Err(DynamicsError::InvalidTolerance)
    }
}

fn verdict_at(state: &StateVector, params: &SystemParams, dir: Direction, t: f64) -> Verdict {
    if state.norm() > BLOWUP_NORM {
        Verdict::BlowUp(t)
    } else if drift(state, params, dir).norm() < SETTLE_RESIDUAL {
        Verdict::Settled(*state)
    } else {
        Verdict::NotSettled
    }
}

/// Integrate to `t_end`, recording every accepted step. The trajectory ends
/// early with a BlowUp verdict when the norm passes `BLOWUP_NORM`.
pub fn integrate(
    params: &SystemParams,
    dir: Direction,
    initial: &StateVector,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory, DynamicsError> {
    check_tols(rtol, atol)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidInput("t_end must be positive and finite"));
    }
    if !initial.is_finite() {
        return Err(DynamicsError::InvalidInput("initial state must be finite"));
    }
    let mut st = Stepper::new(params, dir, *initial, rtol, atol);
    let mut times = vec![0.0];
    let mut states = vec![*initial];
    while t_end - st.t > 1e-13 * (1.0 + t_end) {
        st.advance(t_end - st.t)?;
        times.push(st.t);
        states.push(st.y);
        if st.y.norm() > BLOWUP_NORM {
            return Ok(Trajectory { times, states, verdict: Verdict::BlowUp(st.t) });
        }
    }
    let verdict = verdict_at(&st.y, params, dir, st.t);
    Ok(Trajectory { times, states, verdict })
}

/// Integrate with dense output at the requested sample times (strictly
/// increasing, positive).
pub fn integrate_dense(
    params: &SystemParams,
    dir: Direction,
    initial: &StateVector,
    sample_times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Trajectory, DynamicsError> {
    check_tols(rtol, atol)?;
    if sample_times.is_empty() {
        return Err(DynamicsError::InvalidInput("sample_times must be nonempty"));
    }
    if sample_times.windows(2).any(|w| w[0] >= w[1]) || sample_times[0] <= 0.0 {
        return Err(DynamicsError::InvalidInput(
            "sample_times must be strictly increasing and positive",
        ));
    }
    let t_end = *sample_times.last().unwrap();
    let mut st = Stepper::new(params, dir, *initial, rtol, atol);
    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());
    let mut next = 0;
    while t_end - st.t > 1e-13 * (1.0 + t_end) {
        st.advance(t_end - st.t)?;
        while next < sample_times.len() && sample_times[next] <= st.t {
            times.push(sample_times[next]);
            states.push(st.interpolate(sample_times[next]));
            next += 1;
        }
        if st.y.norm() > BLOWUP_NORM {
            return Ok(Trajectory { times, states, verdict: Verdict::BlowUp(st.t) });
        }
    }
    // Samples landing inside the last ulp-sized remainder.
    while next < sample_times.len() {
        times.push(sample_times[next]);
        states.push(st.interpolate(sample_times[next]));
        next += 1;
    }
    let verdict = verdict_at(&st.y, params, dir, st.t);
    Ok(Trajectory { times, states, verdict })
}

struct Relaxation {
    verdict: Verdict,
    final_state: StateVector,
}

/// Drift norm below which a terminal Newton polish is attempted. Explicit
/// steps near a stiff equilibrium are stability-limited, which floors the
/// integrated drift norm at tolerance level (scaled by the mode frequency for
/// oscillatory slow modes); the polish lands on the exact fixed point and
/// only counts when that point is attracting and the trajectory is already
/// within a tight neighborhood of it.
const CAPTURE_DRIFT: f64 = 1e-4;
const CAPTURE_RADIUS: f64 = 1e-4;

fn try_capture(
    st: &Stepper<'_>,
    params: &SystemParams,
    dir: Direction,
) -> Option<StateVector> {
    let it = crate::steady::newton_iterate(&st.y, params, dir).ok()?;
    let fixed = StateVector::from_real(&it.state);
    if it.residual < SETTLE_RESIDUAL
        && (fixed - st.y).norm() <= CAPTURE_RADIUS * (1.0 + st.y.norm())
        && crate::steady::spectral_abscissa(&fixed, params) < -crate::steady::STABILITY_MARGIN
    {
        Some(fixed)
    } else {
        None
    }
}

/// Run until the drift norm drops below `SETTLE_RESIDUAL`, the norm blows up,
/// or `t_max` is reached. The FSAL derivative doubles as the residual probe.
fn relax(
    params: &SystemParams,
    dir: Direction,
    initial: &StateVector,
    t_max: f64,
    rtol: f64,
    atol: f64,
) -> Result<Relaxation, DynamicsError> {
    let mut st = Stepper::new(params, dir, *initial, rtol, atol);
    st.budget = RELAX_STEPS;
    if st.k1.norm() < SETTLE_RESIDUAL {
        return Ok(Relaxation { verdict: Verdict::Settled(st.y), final_state: st.y });
    }
    let mut next_capture = 0usize;
    while t_max - st.t > 1e-13 * (1.0 + t_max) {
        match st.advance(t_max - st.t) {
            Ok(()) => {}
            // The step budget ran out before the horizon: not settled within
            // the explored window, reported as such.
            Err(DynamicsError::TooManySteps { .. }) => {
                return Ok(Relaxation { verdict: Verdict::NotSettled, final_state: st.y })
            }
            Err(e) => return Err(e),
        }
        if st.y.norm() > BLOWUP_NORM {
            return Ok(Relaxation { verdict: Verdict::BlowUp(st.t), final_state: st.y });
        }
        if st.k1.norm() < SETTLE_RESIDUAL {
            return Ok(Relaxation { verdict: Verdict::Settled(st.y), final_state: st.y });
        }
        if st.k1.norm() < CAPTURE_DRIFT && st.steps >= next_capture {
            next_capture = st.steps + 64;
            if let Some(fixed) = try_capture(&st, params, dir) {
                return Ok(Relaxation { verdict: Verdict::Settled(fixed), final_state: fixed });
            }
        }
    }
    Ok(Relaxation { verdict: Verdict::NotSettled, final_state: st.y })
}

/// Attractor verdict for the trajectory started at `initial`.
pub fn settle(
    params: &SystemParams,
    dir: Direction,
    initial: &StateVector,
) -> Result<Verdict, DynamicsError> {
    params.validate().map_err(|_| DynamicsError::InvalidInput("invalid params"))?;
    if !initial.is_finite() {
        return Err(DynamicsError::InvalidInput("initial state must be finite"));
    }
    Ok(relax(params, dir, initial, SETTLE_T_MAX, DEFAULT_RTOL, DEFAULT_ATOL)?.verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchMatch {
    Matched(usize),
    /// Two enumerated branches both lie within tolerance; reported, never
    /// resolved by guessing.
    Ambiguous(usize, usize),
    NoneNearby,
}

/// Match an observed intensity to the enumerated branch list by nearest I1.
pub fn match_branch(i1: f64, branches: &[SteadyBranch]) -> BranchMatch {
    let tol = MATCH_TOL * (1.0 + i1.abs());
    let mut within: Vec<(usize, f64)> = branches
        .iter()
        .enumerate()
        .map(|(i, b)| (i, (b.i1 - i1).abs()))
        .filter(|(_, d)| *d <= tol)
        .collect();
    within.sort_by(|a, b| a.1.total_cmp(&b.1));
    match within.len() {
        0 => BranchMatch::NoneNearby,
        1 => BranchMatch::Matched(within[0].0),
        _ => BranchMatch::Ambiguous(within[0].0, within[1].0),
    }
}

/// Settle and match the outcome against the enumerated branches by nearest
/// I1. The match is `None` for non-settled verdicts or when enumeration
/// itself fails.
pub fn settle_matched(
    params: &SystemParams,
    dir: Direction,
    initial: &StateVector,
) -> Result<(Verdict, Option<BranchMatch>), DynamicsError> {
    let verdict = settle(params, dir, initial)?;
    let matched = match &verdict {
        Verdict::Settled(s) => crate::steady::enumerate_branches(params, dir)
            .ok()
            .map(|branches| match_branch(s.intensity1(), &branches)),
        _ => None,
    };
    Ok((verdict, matched))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisStep {
    pub eps_sq: f64,
    /// Cavity-1 intensity observed at the end of the hold (absent after a
    /// blow-up).
    pub i1: Option<f64>,
    pub verdict: Verdict,
}

/// Quasi-static drive scan: the state reached at each step seeds the next
/// one. After a blow-up the scan reseeds from the dark state and continues.
pub fn hysteresis_scan(
    params: &SystemParams,
    dir: Direction,
    eps_sq_schedule: &[f64],
    t_hold: f64,
) -> Result<Vec<HysteresisStep>, DynamicsError> {
    params.validate().map_err(|_| DynamicsError::InvalidInput("invalid params"))?;
    if eps_sq_schedule.iter().any(|&e| !(e.is_finite() && e >= 0.0)) {
        return Err(DynamicsError::InvalidInput("schedule values must be >= 0"));
    }
    if t_hold.is_nan() || t_hold < 50.0 {
        return Err(DynamicsError::InvalidInput("t_hold must be >= 50"));
    }
    let mut carried = StateVector::dark();
    let mut steps = Vec::with_capacity(eps_sq_schedule.len());
    for &eps_sq in eps_sq_schedule {
        let mut p = *params;
        p.eps_p = eps_sq.sqrt();
        let relaxed = relax(&p, dir, &carried, t_hold, DEFAULT_RTOL, DEFAULT_ATOL)?;
        let step = match relaxed.verdict {
            Verdict::BlowUp(t) => {
                carried = StateVector::dark();
                HysteresisStep { eps_sq, i1: None, verdict: Verdict::BlowUp(t) }
            }
            verdict => {
                carried = relaxed.final_state;
                HysteresisStep { eps_sq, i1: Some(relaxed.final_state.intensity1()), verdict }
            }
        };
        steps.push(step);
    }
    Ok(steps)
}

/// Up-then-down drive schedule covering `[lo, hi]` with `n` points per pass.
pub fn up_down_schedule(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let mut up: Vec<f64> =
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let down: Vec<f64> = up.iter().rev().skip(1).copied().collect();
    up.extend(down);
    up
}
