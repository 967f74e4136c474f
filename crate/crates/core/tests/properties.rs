//! Property tests for the steady-state reduction and the observables.

use nonrecip::model::{drift_norm, Direction, StateVector, SystemParams};
use nonrecip::observables::{isolation_ratio, transmission};
use nonrecip::steady::{
    enumerate_branches, lift, newton_refine, real_nonneg_roots, reduce_to_cubic, Stability,
    SweepAxis,
};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params_strategy() -> impl Strategy<Value = (SystemParams, Direction)> {
    (
        0.5..6.0f64,              // g
        0.5..6.0f64,              // j
        -3.0..3.0f64,             // kappa1
        1.0..4.0f64,              // kappa_e
        0.05..0.5f64,             // gamma
        -2.0..2.0f64,             // delta1
        -2.0..2.0f64,             // delta2
        0.01..2.0f64,             // eps_p^2
        proptest::bool::ANY,      // direction
    )
        .prop_map(|(g, j, kappa1, kappa_e, gamma, delta1, delta2, eps_sq, fwd)| {
            let p = SystemParams {
                g,
                j,
                kappa1,
                kappa2: 1.0,
                kappa_e,
                gamma,
                delta1,
                delta2,
                eps_p: eps_sq.sqrt(),
            };
            (p, if fwd { Direction::Forward } else { Direction::Backward })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every nonnegative real cubic root lifts to a genuine fixed point of
    /// the full system, with the intensity reproduced exactly.
    #[test]
    fn cubic_roots_are_fixed_points((p, dir) in params_strategy()) {
        let cubic = reduce_to_cubic(&p, dir).unwrap();
        let roots = real_nonneg_roots(&cubic);
        prop_assert!(roots.len() <= 3);
        prop_assert!(!roots.is_empty());
        for r in roots {
            let state = lift(r, &p, dir).unwrap();
            let res = drift_norm(&state, &p, dir);
            prop_assert!(res < 1e-10, "residual {res:.3e} at I1 = {r:.6e}");
            prop_assert!((state.intensity1() - r).abs() <= 1e-10 * (1.0 + r));
        }
    }

    /// Transmission only sees moduli: a global phase rotation of the steady
    /// state leaves it unchanged.
    #[test]
    fn transmission_is_phase_invariant((p, dir) in params_strategy(), phi in 0.0..std::f64::consts::TAU) {
        let branches = enumerate_branches(&p, dir);
        prop_assume!(branches.is_ok());
        let branches = branches.unwrap();
        prop_assume!(!branches.is_empty());
        let b = branches[0];
        let phase = C64::from_polar(1.0, phi);
        let rotated = nonrecip::steady::SteadyBranch {
            state: StateVector {
                a1: b.state.a1 * phase,
                a2: b.state.a2 * phase,
                sigma_ge: b.state.sigma_ge * phase,
                sigma_z: b.state.sigma_z,
            },
            ..b
        };
        let t0 = transmission(&p, dir, &b).unwrap().t;
        let t1 = transmission(&p, dir, &rotated).unwrap().t;
        prop_assert!((t0 - t1).abs() <= 1e-12 * (1.0 + t0));
    }

    /// Swapping the arguments negates the isolation ratio exactly.
    #[test]
    fn isolation_antisymmetry(a in 1e-12..1e3f64, b in 1e-12..1e3f64) {
        let ab = isolation_ratio(a, b).unwrap();
        let ba = isolation_ratio(b, a).unwrap();
        prop_assert_eq!(ab, -ba);
    }

    /// In the linear regime the intensity response is exactly proportional
    /// to the drive power.
    #[test]
    fn linear_drive_scaling(
        j in 0.5..6.0f64,
        kappa1 in -3.0..3.0f64,
        kappa_e in 1.0..4.0f64,
        delta1 in -2.0..2.0f64,
        scale in 1.5..20.0f64,
    ) {
        let base = SystemParams {
            g: 0.0, j, kappa1, kappa2: 1.0, kappa_e,
            gamma: 0.1, delta1, delta2: 0.0, eps_p: 0.3,
        };
        let scaled = SystemParams { eps_p: base.eps_p * scale.sqrt(), ..base };
        let (Ok(b0), Ok(b1)) = (
            nonrecip::steady::linear_solve(&base, Direction::Forward),
            nonrecip::steady::linear_solve(&scaled, Direction::Forward),
        ) else {
            return Ok(()); // singular resonance draw
        };
        let ratio = b1.i1 / b0.i1;
        prop_assert!((ratio - scale).abs() <= 1e-10 * scale);
    }
}

/// Converse direction of the cubic/full-system equivalence: every fixed
/// point Newton finds from scattered initial guesses sits on a cubic root.
#[test]
fn newton_fixed_points_match_cubic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf00d);
    let parameter_sets = [
        (SystemParams { eps_p: 0.65_f64.sqrt(), ..SystemParams::passive_defaults() }, Direction::Forward),
        (SystemParams::pt_defaults(), Direction::Backward),
        (
            SystemParams {
                g: 2.5,
                j: 3.0,
                delta1: 0.6,
                delta2: -0.4,
                eps_p: 0.8,
                ..SystemParams::passive_defaults()
            },
            Direction::Backward,
        ),
    ];
    let mut converged = 0usize;
    for (p, dir) in &parameter_sets {
        let roots = real_nonneg_roots(&reduce_to_cubic(p, *dir).unwrap());
        for _ in 0..100 {
            let guess = StateVector {
                a1: C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                a2: C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                sigma_ge: C64::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)),
                sigma_z: rng.random_range(-0.7..0.2),
            };
            let Ok(branch) = newton_refine(&guess, p, *dir) else { continue };
            converged += 1;
            let nearest =
                roots.iter().map(|r| (r - branch.i1).abs()).fold(f64::INFINITY, f64::min);
            assert!(
                nearest < 1e-8,
                "Newton fixed point I1 = {} misses every cubic root (gap {nearest:.2e})",
                branch.i1
            );
        }
    }
    assert!(converged >= 100, "only {converged} Newton runs converged");
}

/// The nonnegative-real-root count changes by exactly two across a fold.
#[test]
fn root_count_parity_across_folds() {
    for g in [3.0, 4.0, 5.0, 6.0, 7.0] {
        let base = SystemParams {
            g,
            j: 4.0,
            eps_p: 0.0,
            ..SystemParams::passive_defaults()
        };
        for dir in Direction::BOTH {
            let mut prev: Option<usize> = None;
            let mut transitions = 0;
            for i in 0..400 {
                let eps_sq = 1e-3 + 3.0 * i as f64 / 399.0;
                let p = SweepAxis::EpsPSq.apply(&base, eps_sq).unwrap();
                let count = real_nonneg_roots(&reduce_to_cubic(&p, dir).unwrap()).len();
                if let Some(prev) = prev {
                    let diff = count.abs_diff(prev);
                    assert!(diff == 0 || diff == 2, "count jumped {prev} -> {count} at g={g}");
                    if diff == 2 {
                        transitions += 1;
                    }
                }
                prev = Some(count);
            }
            assert_eq!(transitions, 2, "expected one entry and one exit of the window");
        }
    }
}

/// Bistable triples in the passive regime classify stable/unstable/stable.
#[test]
fn passive_bistable_triple_is_s_u_s() {
    for g in [4.0, 5.0, 7.0] {
        let base = SystemParams { g, j: 4.0, eps_p: 0.0, ..SystemParams::passive_defaults() };
        let (lo, hi) = nonrecip::steady::bistable_window(&base, Direction::Forward, (1e-3, 6.0), 300)
            .unwrap()
            .expect("window exists");
        for k in 1..=8 {
            let eps_sq = lo + (hi - lo) * k as f64 / 9.0;
            let p = SweepAxis::EpsPSq.apply(&base, eps_sq).unwrap();
            let branches = enumerate_branches(&p, Direction::Forward).unwrap();
            if branches.len() == 3 {
                assert_eq!(branches[0].stability, Stability::Stable);
                assert_eq!(branches[1].stability, Stability::Unstable);
                assert_eq!(branches[2].stability, Stability::Stable);
            }
        }
    }
}
