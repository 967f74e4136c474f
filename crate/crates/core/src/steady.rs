//! Steady-state branch enumeration.
//!
//! Stationarity of the mean-field system reduces exactly to a real cubic in
//! the cavity-1 intensity `I1 = |a1|^2`:
//!
//! * emitter elimination: `sigma_ge = 2 g sigma_z a1 / x3` and
//!   `sigma_z = -1 / (2 (1 + s I1))` with `s = 2 g^2 / |x3|^2`;
//! * cavity-2 elimination folds into the effective cavity-1 relation
//!   `[B + C / (1 + s I1)] a1 = D` with `B = x1 + J^2/x2`, `C = g^2/x3`,
//!   and a direction-dependent drive `D` (forward `-E`, backward `-iJE/x2`,
//!   `E = sqrt(kappa_e) eps_p`);
//! * taking the squared modulus and clearing `(1 + s I1)^2` gives the cubic.
//!
//! Every nonnegative real root is a steady intensity; lifting and a damped
//! Newton pass on the full 7-dimensional system refine and cross-check it.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    self, coefficients, drift, drift_norm, drive_amplitude, jacobian, Direction, ParamsError,
    RealVec, StateVector, SystemParams,
};

/// Eigenvalue real parts within this margin of zero are treated as marginal
/// and surfaced as errors instead of being silently labeled.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Residual bound a refined fixed point must satisfy.
pub const RESIDUAL_BOUND: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SteadyError {
    #[error("degenerate parameters: {0}")]
    DegenerateParams(&'static str),
    #[error("singular coefficient: {0}")]
    SingularCoefficient(&'static str),
    #[error("singular linear system: x1 x2 + J^2 = 0")]
    SingularLinearSystem,
    #[error("I1 = {i1} does not lift to a fixed point (residual {residual:.3e})")]
    NotARoot { i1: f64, residual: f64 },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("marginal stability: spectral abscissa {max_re:.3e} within +-{STABILITY_MARGIN:.0e}")]
    MarginalStability { max_re: f64 },
    #[error(transparent)]
    InvalidParams(#[from] ParamsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

/// One fixed point of the driven system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyBranch {
    /// Cavity-1 intensity |a1|^2 of the refined state.
    pub i1: f64,
    pub state: StateVector,
    pub stability: Stability,
    /// Full-system drift norm at `state`.
    pub residual: f64,
    /// Largest real part over the Jacobian spectrum.
    pub spectral_abscissa: f64,
}

impl SteadyBranch {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }
}

/// Real cubic `c3 I^3 + c2 I^2 + c1 I + c0 = 0` in the cavity-1 intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoefficients {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CubicCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        ((self.c3 * x + self.c2) * x + self.c1) * x + self.c0
    }

    fn eval_deriv(&self, x: f64) -> f64 {
        (3.0 * self.c3 * x + 2.0 * self.c2) * x + self.c1
    }
}

struct Reduction {
    b: C64,
    c: C64,
    s: f64,
    /// Complex drive constant `D`; the bracket equation is `A(I1) a1 = D`.
    d: C64,
}

fn reduction(params: &SystemParams, dir: Direction) -> Result<Reduction, SteadyError> {
    let co = coefficients(params);
    if co.x2.norm_sqr() == 0.0 {
        return Err(SteadyError::SingularCoefficient("x2 = 0"));
    }
    if co.x3.norm_sqr() == 0.0 {
        return Err(SteadyError::SingularCoefficient("x3 = 0"));
    }
    let g2 = params.g * params.g;
    let e = drive_amplitude(params);
    let d = match dir {
        Direction::Forward => C64::new(-e, 0.0),
        Direction::Backward => -C64::i() * params.j * e / co.x2,
    };
    Ok(Reduction {
        b: co.x1 + params.j * params.j / co.x2,
        c: g2 / co.x3,
        s: 2.0 * g2 / co.x3.norm_sqr(),
        d,
    })
}

/// Exact reduction of the stationarity conditions to a real cubic in I1.
pub fn reduce_to_cubic(
    params: &SystemParams,
    dir: Direction,
) -> Result<CubicCoefficients, SteadyError> {
    params.validate()?;
    if params.g == 0.0 {
        return Err(SteadyError::DegenerateParams("g = 0: use linear_solve"));
    }
    if params.gamma == 0.0 {
        return Err(SteadyError::DegenerateParams("gamma = 0"));
    }
    let Reduction { b, c, s, d } = reduction(params, dir)?;
    let d2 = d.norm_sqr();
    let b2 = b.norm_sqr();
    let cross = (b * c.conj()).re;
    Ok(CubicCoefficients {
        c3: b2 * s * s,
        c2: 2.0 * s * (b2 + cross) - d2 * s * s,
        c1: (b + c).norm_sqr() - 2.0 * d2 * s,
        c0: -d2,
    })
}

/// Nonnegative real roots of the cubic, ascending. Companion-matrix
/// eigenvalues with a 1e-10 imaginary-part acceptance tolerance; tiny
/// negative roots from floating-point noise are clamped to zero.
pub fn real_nonneg_roots(cubic: &CubicCoefficients) -> Vec<f64> {
    let coeffs = [cubic.c3, cubic.c2, cubic.c1, cubic.c0];
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return vec![0.0];
    }
    // Drop numerically vanished leading coefficients.
    let rel = |c: f64| c.abs() > 1e-14 * scale;
    let mut raw: Vec<C64> = if rel(cubic.c3) {
        companion_roots(&[cubic.c2 / cubic.c3, cubic.c1 / cubic.c3, cubic.c0 / cubic.c3])
    } else if rel(cubic.c2) {
        quadratic_roots(cubic.c1 / cubic.c2, cubic.c0 / cubic.c2)
    } else if rel(cubic.c1) {
        vec![C64::new(-cubic.c0 / cubic.c1, 0.0)]
    } else {
        return Vec::new();
    };

    raw.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut out: Vec<f64> = Vec::with_capacity(3);
    for z in raw {
        if z.im.abs() > 1e-10 * (1.0 + z.re.abs()) {
            continue;
        }
        let mut r = z.re;
        // Two Newton polish steps on the original cubic.
        for _ in 0..2 {
            let dp = cubic.eval_deriv(r);
            if dp.abs() > 1e-300 {
                let step = cubic.eval(r) / dp;
                if step.is_finite() && step.abs() < 0.5 * (1.0 + r.abs()) {
                    r -= step;
                }
            }
        }
        if (-1e-12..0.0).contains(&r) {
            r = 0.0;
        }
        if r < 0.0 || !r.is_finite() {
            continue;
        }
        // Collapse eigenvalue twins at a fold into a single root.
        if out.last().is_some_and(|&prev| (r - prev).abs() <= 1e-9 * (1.0 + r.abs())) {
            continue;
        }
        out.push(r);
    }
    out
}

/// Roots of monic `x^3 + p x^2 + q x + r` via the companion matrix, with a
/// variable scaling that keeps the eigenproblem well balanced.
fn companion_roots(monic: &[f64; 3]) -> Vec<C64> {
    let [p, q, r] = *monic;
    let theta = p.abs().max(q.abs().sqrt()).max(r.abs().cbrt());
    if theta == 0.0 {
        return vec![C64::new(0.0, 0.0); 3];
    }
    let (ps, qs, rs) = (p / theta, q / (theta * theta), r / (theta * theta * theta));
    let companion = DMatrix::from_row_slice(3, 3, &[
        0.0, 0.0, -rs, //
        1.0, 0.0, -qs, //
        0.0, 1.0, -ps,
    ]);
    companion.complex_eigenvalues().iter().map(|z| z * theta).collect()
}

fn quadratic_roots(p: f64, q: f64) -> Vec<C64> {
    // x^2 + p x + q = 0, sign-safe form.
    let disc = p * p - 4.0 * q;
    if disc >= 0.0 {
        let t = -0.5 * (p + p.signum() * disc.sqrt());
        if t == 0.0 {
            return vec![C64::new(0.0, 0.0), C64::new(-p, 0.0)];
        }
        vec![C64::new(t, 0.0), C64::new(q / t, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        vec![C64::new(-0.5 * p, im), C64::new(-0.5 * p, -im)]
    }
}

/// Back-substitute a cubic root into the full state. The phase of `a1` is
/// fixed by the complex bracket relation; for the undriven self-oscillating
/// case (`D = 0`, `I1 > 0`) the global phase is free and taken real positive.
pub fn lift(i1: f64, params: &SystemParams, dir: Direction) -> Result<StateVector, SteadyError> {
    let Reduction { b, c, s, d } = reduction(params, dir)?;
    let co = coefficients(params);
    let u = 1.0 + s * i1;
    let sigma_z = -1.0 / (2.0 * u);
    let bracket = b + c / u;
    let a1 = if d.norm_sqr() == 0.0 { C64::new(i1.sqrt(), 0.0) } else { d / bracket };
    let e = drive_amplitude(params);
    let backward_pump = match dir {
        Direction::Forward => 0.0,
        Direction::Backward => e,
    };
    let a2 = (C64::i() * params.j * a1 - backward_pump) / co.x2;
    let sigma_ge = 2.0 * params.g * sigma_z * a1 / co.x3;
    let state = StateVector { a1, a2, sigma_ge, sigma_z };
    let residual = drift_norm(&state, params, dir);
    if !residual.is_finite() || residual > 1e-8 {
        return Err(SteadyError::NotARoot { i1, residual });
    }
    Ok(state)
}

/// Unique fixed point of the g = 0 (linear) system: a two-mode Cramer solve
/// with the emitter frozen in its ground state.
pub fn linear_solve(params: &SystemParams, dir: Direction) -> Result<SteadyBranch, SteadyError> {
    params.validate()?;
    if params.g != 0.0 {
        return Err(SteadyError::DegenerateParams("g != 0: use enumerate_branches"));
    }
    let co = coefficients(params);
    let det = co.x1 * co.x2 + params.j * params.j;
    if det.norm() <= 1e-12 * (co.x1.norm() * co.x2.norm() + params.j * params.j) {
        return Err(SteadyError::SingularLinearSystem);
    }
    let e = drive_amplitude(params);
    let (a1, a2) = match dir {
        Direction::Forward => (-e * co.x2 / det, -C64::i() * params.j * e / det),
        Direction::Backward => (-C64::i() * params.j * e / det, -e * co.x1 / det),
    };
    let state = StateVector { a1, a2, sigma_ge: C64::new(0.0, 0.0), sigma_z: -0.5 };
    let (stability, spectral_abscissa) = classify(&state, params)?;
    Ok(SteadyBranch {
        i1: state.intensity1(),
        state,
        stability,
        residual: drift_norm(&state, params, dir),
        spectral_abscissa,
    })
}

/// Stability of a fixed point from the Jacobian spectrum.
pub fn classify(
    state: &StateVector,
    params: &SystemParams,
) -> Result<(Stability, f64), SteadyError> {
    let max_re = spectral_abscissa(state, params);
    if max_re < -STABILITY_MARGIN {
        Ok((Stability::Stable, max_re))
    } else if max_re > STABILITY_MARGIN {
        Ok((Stability::Unstable, max_re))
    } else {
        Err(SteadyError::MarginalStability { max_re })
    }
}

/// Full Jacobian spectrum at `state`, sorted by descending real part.
pub fn spectrum(state: &StateVector, params: &SystemParams) -> Vec<C64> {
    let j = jacobian(state, params, Direction::Forward);
    let dm = DMatrix::from_fn(model::DIM, model::DIM, |r, c| j[(r, c)]);
    let mut eigs: Vec<C64> = dm.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    eigs
}

/// Largest eigenvalue real part of the drift Jacobian at `state`.
pub fn spectral_abscissa(state: &StateVector, params: &SystemParams) -> f64 {
    let j = jacobian(state, params, Direction::Forward);
    let dm = DMatrix::from_fn(model::DIM, model::DIM, |r, c| j[(r, c)]);
    dm.complex_eigenvalues().iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
}

/// Unit vector along the leading eigenmode at `state`, available when that
/// eigenvalue is real (e.g. the fold mode of a saddle branch). Computed as
/// the null direction of `J - lambda I`.
pub fn unstable_direction(state: &StateVector, params: &SystemParams) -> Option<RealVec> {
    let j = jacobian(state, params, Direction::Forward);
    let dm = DMatrix::from_fn(model::DIM, model::DIM, |r, c| j[(r, c)]);
    let eigs = dm.complex_eigenvalues();
    let lead = eigs.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re))?;
    if lead.im.abs() > 1e-9 * (1.0 + lead.re.abs()) {
        return None;
    }
    let shifted = dm - DMatrix::identity(model::DIM, model::DIM) * lead.re;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t?;
    let row = v_t.row(model::DIM - 1);
    let mut v = RealVec::zeros();
    for i in 0..model::DIM {
        v[i] = row[i];
    }
    Some(v / v.norm())
}

pub(crate) struct NewtonIterate {
    pub state: RealVec,
    #[cfg_attr(not(test), allow(dead_code))]
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn newton_iterate(
    guess: &StateVector,
    params: &SystemParams,
    dir: Direction,
) -> Result<NewtonIterate, SteadyError> {
    const MAX_ITER: usize = 100;
    let mut x = guess.to_real();
    let mut residual = drift(&StateVector::from_real(&x), params, dir).to_real();
    let mut res_norm = residual.norm();
    for iterations in 0..MAX_ITER {
        if res_norm < 1e-12 {
            return Ok(NewtonIterate { state: x, iterations, residual: res_norm });
        }
        let state = StateVector::from_real(&x);
        let jac = jacobian(&state, params, dir);
        let Some(step) = jac.lu().solve(&(-residual)) else {
            return Err(SteadyError::NoConvergence { iterations, residual: res_norm });
        };
        if step.norm() < 1e-14 {
            if res_norm < RESIDUAL_BOUND {
                return Ok(NewtonIterate { state: x, iterations, residual: res_norm });
            }
            return Err(SteadyError::NoConvergence { iterations, residual: res_norm });
        }
        // Backtracking damping on the residual norm.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = x + step * lambda;
            let trial_res = drift(&StateVector::from_real(&trial), params, dir).to_real();
            let trial_norm = trial_res.norm();
            if trial_norm.is_finite() && trial_norm < (1.0 - 1e-4 * lambda) * res_norm {
                x = trial;
                residual = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(SteadyError::NoConvergence { iterations, residual: res_norm });
        }
    }
    let res_norm = drift(&StateVector::from_real(&x), params, dir).norm();
    if res_norm < 1e-12 {
        return Ok(NewtonIterate { state: x, iterations: MAX_ITER, residual: res_norm });
    }
    Err(SteadyError::NoConvergence { iterations: MAX_ITER, residual: res_norm })
}

/// Damped Newton on the full 7-dimensional root problem `drift(s) = 0`.
pub fn newton_refine(
    guess: &StateVector,
    params: &SystemParams,
    dir: Direction,
) -> Result<SteadyBranch, SteadyError> {
    params.validate()?;
    if !guess.is_finite() {
        return Err(SteadyError::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let it = newton_iterate(guess, params, dir)?;
    let state = StateVector::from_real(&it.state);
    let (stability, spectral_abscissa) = classify(&state, params)?;
    Ok(SteadyBranch {
        i1: state.intensity1(),
        state,
        stability,
        residual: it.residual,
        spectral_abscissa,
    })
}

/// All steady branches for the given direction, Newton-refined, classified
/// and sorted ascending by I1. The cubic bounds the count by 3.
pub fn enumerate_branches(
    params: &SystemParams,
    dir: Direction,
) -> Result<Vec<SteadyBranch>, SteadyError> {
    params.validate()?;
    if params.g == 0.0 {
        return Ok(vec![linear_solve(params, dir)?]);
    }
    let cubic = reduce_to_cubic(params, dir)?;
    let mut branches: Vec<SteadyBranch> = Vec::with_capacity(3);
    for root in real_nonneg_roots(&cubic) {
        let lifted = lift(root, params, dir)?;
        let branch = newton_refine(&lifted, params, dir)?;
        // Newton can merge near-fold twins; keep one representative.
        if branches
            .iter()
            .any(|b| (b.i1 - branch.i1).abs() <= 1e-8 * (1.0 + branch.i1.abs()))
        {
            continue;
        }
        branches.push(branch);
    }
    branches.sort_by(|a, b| a.i1.total_cmp(&b.i1));
    Ok(branches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EpsPSq,
    G,
    J,
    Delta1,
    Delta2,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::EpsPSq => "eps_p_sq",
            SweepAxis::G => "g",
            SweepAxis::J => "j",
            SweepAxis::Delta1 => "delta1",
            SweepAxis::Delta2 => "delta2",
        }
    }

    pub fn apply(self, params: &SystemParams, value: f64) -> Result<SystemParams, ParamsError> {
        let mut p = *params;
        match self {
            SweepAxis::EpsPSq => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(ParamsError::Range { field: "eps_p", message: "eps_p^2 must be >= 0" });
                }
                p.eps_p = value.sqrt();
            }
            SweepAxis::G => p.g = value,
            SweepAxis::J => p.j = value,
            SweepAxis::Delta1 => p.delta1 = value,
            SweepAxis::Delta2 => p.delta2 = value,
        }
        p.validate()?;
        Ok(p)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eps_p_sq" | "eps-p-sq" => Ok(SweepAxis::EpsPSq),
            "g" => Ok(SweepAxis::G),
            "j" => Ok(SweepAxis::J),
            "delta1" => Ok(SweepAxis::Delta1),
            "delta2" => Ok(SweepAxis::Delta2),
            other => Err(format!("unknown sweep axis `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub branches: Result<Vec<SteadyBranch>, SteadyError>,
}

/// Branch enumeration at every grid value. Points are independent (the cubic
/// yields all roots, so no continuation state is carried); per-point errors
/// are recorded in the row and the sweep continues. Output follows grid order
/// regardless of scheduling.
pub fn continuation_sweep(
    params: &SystemParams,
    dir: Direction,
    axis: SweepAxis,
    grid: &[f64],
) -> Vec<SweepPoint> {
    grid.par_iter()
        .map(|&value| {
            let branches = axis
                .apply(params, value)
                .map_err(SteadyError::from)
                .and_then(|p| enumerate_branches(&p, dir));
            SweepPoint { value, branches }
        })
        .collect()
}

/// Quasi-static branch selection along a sweep: start on the lowest branch at
/// the first resolvable grid point, then follow by I1 continuity; when the
/// tracked branch vanishes at a fold the nearest surviving branch is taken,
/// which reproduces the up-scan jump. Entries are `None` for failed points.
pub fn select_quasistatic(points: &[SweepPoint]) -> Vec<Option<usize>> {
    let mut selected = Vec::with_capacity(points.len());
    let mut prev_i1: Option<f64> = None;
    for point in points {
        let Ok(branches) = &point.branches else {
            selected.push(None);
            continue;
        };
        if branches.is_empty() {
            selected.push(None);
            continue;
        }
        let idx = match prev_i1 {
            None => 0,
            Some(prev) => branches
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (a.i1 - prev).abs().total_cmp(&(b.i1 - prev).abs())
                })
                .map(|(i, _)| i)
                .unwrap_or(0),
        };
        prev_i1 = Some(branches[idx].i1);
        selected.push(Some(idx));
    }
    selected
}

/// Drive window `(lo, hi)` in eps_p^2 where the cubic has three nonnegative
/// roots, located by scan plus bisection on the root count. `None` when no
/// bistable window exists in `[lo, hi]`.
pub fn bistable_window(
    params: &SystemParams,
    dir: Direction,
    eps_sq_range: (f64, f64),
    scan_points: usize,
) -> Result<Option<(f64, f64)>, SteadyError> {
    params.validate()?;
    if params.g == 0.0 {
        return Ok(None);
    }
    let (lo, hi) = eps_sq_range;
    let n = scan_points.max(8);
    let count_at = |eps_sq: f64| -> Result<usize, SteadyError> {
        let p = SweepAxis::EpsPSq.apply(params, eps_sq)?;
        Ok(real_nonneg_roots(&reduce_to_cubic(&p, dir)?).len())
    };
    let mut first_multi = None;
    let mut last_multi = None;
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        if count_at(x)? >= 3 {
            if first_multi.is_none() {
                first_multi = Some((i, x));
            }
            last_multi = Some((i, x));
        }
    }
    let (Some((i_lo, x_lo)), Some((_, x_hi))) = (first_multi, last_multi) else {
        return Ok(None);
    };
    let step = (hi - lo) / (n - 1) as f64;
    let bisect = |mut outside: f64, mut inside: f64| -> Result<f64, SteadyError> {
        for _ in 0..60 {
            let mid = 0.5 * (outside + inside);
            if count_at(mid)? >= 3 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(0.5 * (outside + inside))
    };
    let lower = if i_lo == 0 { x_lo } else { bisect(x_lo - step, x_lo)? };
    let upper = if x_hi + step > hi { x_hi } else { bisect(x_hi + step, x_hi)? };
    Ok(Some((lower, upper)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn passive(g: f64, j: f64, eps_p: f64) -> SystemParams {
        SystemParams::new(g, j, 1.0, 3.0, 0.1, 0.0, 0.0, eps_p).unwrap()
    }

    fn pt_point() -> SystemParams {
        SystemParams::pt_defaults()
    }

    #[test]
    fn zero_drive_has_dark_root() {
        let p = passive(2.0, 4.0, 0.0);
        let cubic = reduce_to_cubic(&p, Direction::Forward).unwrap();
        assert_eq!(cubic.c0, 0.0);
        let roots = real_nonneg_roots(&cubic);
        assert!(roots.contains(&0.0));
    }

    #[test]
    fn degenerate_params_rejected() {
        let p = passive(0.0, 4.0, 0.5);
        assert!(matches!(
            reduce_to_cubic(&p, Direction::Forward),
            Err(SteadyError::DegenerateParams(_))
        ));
    }

    #[test]
    fn root_count_transitions_one_three_one() {
        // g = 4, J = 4 passive set: the forward bistable window sits inside
        // (0, 2] in eps_p^2, so the count goes 1 -> 3 -> 1 along the scan.
        let p = passive(4.0, 4.0, 0.0);
        let counts: Vec<usize> = (1..=80)
            .map(|i| {
                let eps_sq = 2.0 * i as f64 / 80.0;
                let pp = SweepAxis::EpsPSq.apply(&p, eps_sq).unwrap();
                real_nonneg_roots(&reduce_to_cubic(&pp, Direction::Forward).unwrap()).len()
            })
            .collect();
        let first_three = counts.iter().position(|&c| c == 3).expect("bistable window");
        let last_three = counts.iter().rposition(|&c| c == 3).unwrap();
        assert!(counts[..first_three].iter().all(|&c| c == 1));
        assert!(counts[first_three..=last_three].iter().all(|&c| c == 3));
        assert!(counts[last_three + 1..].iter().all(|&c| c == 1));
    }

    #[test]
    fn weak_coupling_has_no_window() {
        // At g = 2 the J = 4 coupling dominates and bistability is absent.
        let p = passive(2.0, 4.0, 0.0);
        let w = bistable_window(&p, Direction::Forward, (1e-4, 6.0), 400).unwrap();
        assert_eq!(w, None);
    }

    #[test]
    fn roots_lift_to_fixed_points() {
        let cases = [
            (passive(4.0, 4.0, 0.65_f64.sqrt()), Direction::Forward),
            (passive(4.0, 4.0, 0.65_f64.sqrt()), Direction::Backward),
            (pt_point(), Direction::Forward),
            (pt_point(), Direction::Backward),
            (
                SystemParams::new(3.0, 1.0, -7.4, 3.2, 0.1, 0.0, 0.0, 1.0).unwrap(),
                Direction::Backward,
            ),
            (
                SystemParams::new(2.5, 3.0, 1.0, 3.0, 0.2, 0.8, -0.5, 0.7).unwrap(),
                Direction::Forward,
            ),
        ];
        for (p, dir) in cases {
            let cubic = reduce_to_cubic(&p, dir).unwrap();
            let roots = real_nonneg_roots(&cubic);
            assert!(!roots.is_empty());
            for r in roots {
                let state = lift(r, &p, dir).unwrap();
                let res = drift_norm(&state, &p, dir);
                assert!(res < 1e-10, "residual {res:.3e} at I1 = {r}");
                assert_abs_diff_eq!(state.intensity1(), r, epsilon = 1e-12 * (1.0 + r));
            }
        }
    }

    #[test]
    fn lift_of_dark_root() {
        let p = passive(2.0, 4.0, 0.0);
        let state = lift(0.0, &p, Direction::Forward).unwrap();
        assert_eq!(state, StateVector::dark());
    }

    #[test]
    fn lift_rejects_non_roots() {
        let p = pt_point();
        let err = lift(1.0, &p, Direction::Forward).unwrap_err();
        assert!(matches!(err, SteadyError::NotARoot { .. }));
    }

    #[test]
    fn lifted_roots_match_newton_refinement() {
        let p = passive(4.0, 4.0, 0.65_f64.sqrt());
        let cubic = reduce_to_cubic(&p, Direction::Forward).unwrap();
        for r in real_nonneg_roots(&cubic) {
            let lifted = lift(r, &p, Direction::Forward).unwrap();
            let refined = newton_refine(&lifted, &p, Direction::Forward).unwrap();
            let diff = (refined.state - lifted).norm();
            assert!(diff < 1e-9, "lift/Newton mismatch {diff:.3e}");
        }
    }

    #[test]
    fn linear_solve_closed_form() {
        let p = SystemParams::new(0.0, 4.0, 1.0, 3.0, 0.1, 0.0, 0.0, 1.0).unwrap();
        let fwd = linear_solve(&p, Direction::Forward).unwrap();
        let sqrt3 = 3.0_f64.sqrt();
        assert_abs_diff_eq!(fwd.state.a1.re, sqrt3 / 10.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fwd.state.a1.im, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fwd.state.a2.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fwd.state.a2.im, -2.0 * sqrt3 / 10.0, epsilon = 1e-14);
        assert!(fwd.residual < 1e-12);
        assert_eq!(fwd.stability, Stability::Stable);

        let bwd = linear_solve(&p, Direction::Backward).unwrap();
        // Reciprocity at g = 0: output amplitudes coincide cross-wise.
        assert_eq!(bwd.state.a1, fwd.state.a2);
    }

    #[test]
    fn linear_solve_zero_drive() {
        let p = SystemParams::new(0.0, 4.0, 1.0, 3.0, 0.1, 0.0, 0.0, 0.0).unwrap();
        let b = linear_solve(&p, Direction::Forward).unwrap();
        assert_eq!(b.state, StateVector::dark());
        assert_eq!(b.i1, 0.0);
    }

    #[test]
    fn linear_solve_singularity_detected() {
        // x1 x2 + J^2 = 0 with gain: kappa1 = -7.4, kappa_e = 3.2 gives
        // x1 x2 = -4.41, so J = 2.1 is the singular coupling.
        let p = SystemParams::new(0.0, 2.1, -7.4, 3.2, 0.1, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(
            linear_solve(&p, Direction::Forward).unwrap_err(),
            SteadyError::SingularLinearSystem
        );
    }

    #[test]
    fn enumerate_monostable_point() {
        let p = passive(4.0, 4.0, 0.2_f64.sqrt());
        let branches = enumerate_branches(&p, Direction::Forward).unwrap();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].stability, Stability::Stable);
        assert!(branches[0].residual < RESIDUAL_BOUND);
    }

    #[test]
    fn enumerate_bistable_point_is_stable_unstable_stable() {
        let p = passive(4.0, 4.0, 0.5_f64.sqrt());
        let branches = enumerate_branches(&p, Direction::Forward).unwrap();
        assert_eq!(branches.len(), 3);
        assert!(branches.windows(2).all(|w| w[0].i1 < w[1].i1));
        assert_eq!(branches[0].stability, Stability::Stable);
        assert_eq!(branches[1].stability, Stability::Unstable);
        assert_eq!(branches[2].stability, Stability::Stable);
    }

    #[test]
    fn enumerate_reduces_to_linear_at_g_zero() {
        let p = SystemParams::new(0.0, 4.0, 1.0, 3.0, 0.1, 0.3, 0.0, 0.8).unwrap();
        let branches = enumerate_branches(&p, Direction::Backward).unwrap();
        let linear = linear_solve(&p, Direction::Backward).unwrap();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].state, linear.state);
    }

    #[test]
    fn small_g_limit_approaches_linear_solution() {
        let mut p = SystemParams::new(1e-4, 4.0, 1.0, 3.0, 0.1, 0.2, 0.1, 0.9).unwrap();
        let branches = enumerate_branches(&p, Direction::Forward).unwrap();
        // The physical branch is the lowest; the vanishing coupling can leave
        // saturation-knee roots, but only at astronomical intensity.
        for extra in &branches[1..] {
            assert!(extra.i1 > 1e3, "unexpected low extra branch at I1 = {}", extra.i1);
        }
        p.g = 0.0;
        let linear = linear_solve(&p, Direction::Forward).unwrap();
        // Observables converge at O(g^2); the state itself keeps an O(g)
        // emitter coherence.
        assert!((branches[0].i1 - linear.i1).abs() < 1e-6);
        let t_nl = crate::observables::transmission(&p, Direction::Forward, &branches[0])
            .unwrap()
            .t;
        let t_lin = crate::observables::transmission(&p, Direction::Forward, &linear).unwrap().t;
        assert!((t_nl - t_lin).abs() < 1e-6, "T gap {}", (t_nl - t_lin).abs());
    }

    #[test]
    fn newton_from_exact_fixed_point_is_immediate() {
        let p = passive(4.0, 4.0, 0.65_f64.sqrt());
        let cubic = reduce_to_cubic(&p, Direction::Forward).unwrap();
        let root = real_nonneg_roots(&cubic)[0];
        let exact = lift(root, &p, Direction::Forward).unwrap();
        let refined = newton_refine(&exact, &p, Direction::Forward).unwrap();
        let it = newton_iterate(&exact, &p, Direction::Forward).unwrap();
        assert!(it.iterations <= 1);
        assert!(refined.residual < 1e-12);
    }

    #[test]
    fn newton_recovers_perturbed_root() {
        let p = passive(4.0, 4.0, 0.65_f64.sqrt());
        let cubic = reduce_to_cubic(&p, Direction::Forward).unwrap();
        for root in real_nonneg_roots(&cubic) {
            let exact = lift(root, &p, Direction::Forward).unwrap();
            let guess = StateVector {
                a1: exact.a1 + C64::new(1e-3, -1e-3),
                a2: exact.a2 * (1.0 + 1e-3),
                sigma_ge: exact.sigma_ge + C64::new(0.0, 1e-3),
                sigma_z: exact.sigma_z - 1e-3,
            };
            let refined = newton_refine(&guess, &p, Direction::Forward).unwrap();
            assert!(
                (refined.i1 - exact.intensity1()).abs() < 1e-6 * (1.0 + exact.intensity1()),
                "converged to a different branch"
            );
        }
    }

    #[test]
    fn newton_failure_is_reported_not_a_crash() {
        let p = SystemParams::new(3.0, 0.2, -7.4, 3.2, 0.1, 0.0, 0.0, 2.0).unwrap();
        let absurd = StateVector {
            a1: C64::new(8.0e2, -3.0e2),
            a2: C64::new(-5.0e2, 9.0e2),
            sigma_ge: C64::new(4.0e2, 4.0e2),
            sigma_z: 7.0e2,
        };
        match newton_refine(&absurd, &p, Direction::Forward) {
            Ok(branch) => assert!(branch.residual < RESIDUAL_BOUND),
            Err(SteadyError::NoConvergence { residual, .. }) => assert!(residual.is_finite()),
            Err(SteadyError::MarginalStability { .. }) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
        let non_finite = StateVector { sigma_z: f64::NAN, ..StateVector::ZERO };
        assert!(matches!(
            newton_refine(&non_finite, &p, Direction::Forward),
            Err(SteadyError::NoConvergence { .. })
        ));
    }

    #[test]
    fn sweep_records_rows_in_grid_order() {
        let p = passive(4.0, 4.0, 0.0);
        let grid: Vec<f64> = (0..24).map(|i| 0.05 + i as f64 * 0.9 / 23.0).collect();
        let points = continuation_sweep(&p, Direction::Forward, SweepAxis::EpsPSq, &grid);
        assert_eq!(points.len(), grid.len());
        for (pt, &v) in points.iter().zip(&grid) {
            assert_eq!(pt.value, v);
            assert!(pt.branches.is_ok());
        }
        let counts: Vec<usize> = points.iter().map(|p| p.branches.as_ref().unwrap().len()).collect();
        assert!(counts.contains(&1) && counts.contains(&3));
    }

    #[test]
    fn sweep_continues_past_bad_points() {
        let p = passive(4.0, 4.0, 0.0);
        let grid = [0.2, f64::NAN, 0.3];
        let points = continuation_sweep(&p, Direction::Forward, SweepAxis::EpsPSq, &grid);
        assert!(points[0].branches.is_ok());
        assert!(points[1].branches.is_err());
        assert!(points[2].branches.is_ok());
    }

    #[test]
    fn window_widens_with_coupling() {
        let mut widths = Vec::new();
        for g in [3.0, 5.0, 7.0] {
            let p = passive(g, 4.0, 0.0);
            let (lo, hi) = bistable_window(&p, Direction::Forward, (1e-3, 6.0), 300)
                .unwrap()
                .expect("window exists");
            widths.push(hi - lo);
        }
        assert!(widths[0] < widths[1] && widths[1] < widths[2]);
    }

    #[test]
    fn window_shrinks_with_detuning() {
        let mut widths = Vec::new();
        for delta in [0.0, 0.6, 1.2] {
            let p = SystemParams::new(4.0, 4.0, 1.0, 3.0, 0.1, delta, 0.0, 0.0).unwrap();
            let w = bistable_window(&p, Direction::Forward, (1e-3, 6.0), 300).unwrap();
            widths.push(w.map_or(0.0, |(lo, hi)| hi - lo));
        }
        assert!(widths[0] > widths[1] && widths[1] >= widths[2]);
    }

    #[test]
    fn strong_cavity_coupling_removes_window() {
        // J >= 3g extinction at g = 2.
        let p = passive(2.0, 6.0, 0.0);
        assert_eq!(bistable_window(&p, Direction::Forward, (1e-3, 8.0), 400).unwrap(), None);
        let p = passive(2.0, 2.0, 0.0);
        assert!(bistable_window(&p, Direction::Forward, (1e-3, 8.0), 400).unwrap().is_some());
    }

    #[test]
    fn quasistatic_selection_follows_lower_branch_until_fold() {
        let p = passive(4.0, 4.0, 0.0);
        let (lo, hi) = bistable_window(&p, Direction::Forward, (1e-3, 3.0), 300)
            .unwrap()
            .unwrap();
        let grid: Vec<f64> = (0..60).map(|i| 0.02 + i as f64 * (hi + 0.5) / 59.0).collect();
        let points = continuation_sweep(&p, Direction::Forward, SweepAxis::EpsPSq, &grid);
        let selected = select_quasistatic(&points);
        for (pt, sel) in points.iter().zip(&selected) {
            let idx = sel.expect("selection defined");
            let branches = pt.branches.as_ref().unwrap();
            if pt.value < lo {
                assert_eq!(idx, 0);
            }
            if pt.value > hi + 0.05 {
                assert_eq!(branches.len(), 1);
                assert_eq!(idx, 0);
            }
            // Inside the window the up-scan stays on the lowest branch.
            if pt.value > lo && pt.value < hi - 0.05 && branches.len() == 3 {
                assert_eq!(idx, 0);
            }
        }
    }

    #[test]
    fn drive_scaling_linear_regime() {
        // g = 0: intensity is exactly linear in eps_p^2.
        let base = SystemParams::new(0.0, 4.0, 1.0, 3.0, 0.1, 0.4, 0.0, 0.0).unwrap();
        let mut i_over_eps = Vec::new();
        for eps_sq in [0.1, 0.4, 1.6] {
            let p = SweepAxis::EpsPSq.apply(&base, eps_sq).unwrap();
            let b = linear_solve(&p, Direction::Forward).unwrap();
            i_over_eps.push(b.i1 / eps_sq);
        }
        assert_abs_diff_eq!(i_over_eps[0], i_over_eps[1], epsilon = 1e-13);
        assert_abs_diff_eq!(i_over_eps[1], i_over_eps[2], epsilon = 1e-13);
    }
}
