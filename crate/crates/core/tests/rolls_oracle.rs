//! Rolls from the spectral solver against an independent reversible shooting
//! solve built on the Dormand–Prince integrator.

use std::sync::OnceLock;

use proptest::prelude::*;
use rollscape_core::model::{f_rhs, hamiltonian};
use rollscape_core::numerics::{rk_integrate, RkOptions};
use rollscape_core::rolls::{
    floquet, solve_roll, trace_onset_branch, OnsetBranch, RollSolution, DEFAULT_MODES,
};
use rollscape_core::{ModelParams, StateVec};

const NU: f64 = 1.6;

fn onset() -> &'static OnsetBranch {
    static B: OnceLock<OnsetBranch> = OnceLock::new();
    B.get_or_init(|| trace_onset_branch(NU, DEFAULT_MODES, 0.1).unwrap())
}

fn flow(u0: StateVec, t: f64, p: &ModelParams) -> StateVec {
    let opts = RkOptions::with_tol(1e-13);
    let tr = rk_integrate(
        |_, y, dy| {
            let f = f_rhs(&StateVec::new(y[0], y[1], y[2], y[3]), p);
            dy.copy_from_slice(&f.0);
        },
        &u0.0,
        0.0,
        t,
        &opts,
        &[],
    )
    .unwrap();
    StateVec::new(tr.y_end[0], tr.y_end[1], tr.y_end[2], tr.y_end[3])
}

/// `u3` on the symmetric section `u2 = u4 = 0` with `H = h`, on the branch nearest `near`.
fn section_u3(u1: f64, h: f64, p: &ModelParams, near: f64) -> f64 {
    let c = p.mu * u1 * u1 / 2.0 - p.nu * u1.powi(3) / 3.0 + u1.powi(4) / 4.0 - h;
    let d = (u1 * u1 + 2.0 * c).sqrt();
    let (a, b) = (u1 + d, u1 - d);
    if (a - near).abs() < (b - near).abs() {
        a
    } else {
        b
    }
}

/// Newton on `(u1(0), p/2)` so that the orbit leaves and re-enters `Fix(R)` after half a period.
fn shoot(roll: &RollSolution) -> (f64, f64) {
    let p = roll.params;
    let h = roll.level;
    let u3_ref = roll.state(0.0).u3();
    let residual = |a: f64, t: f64| {
        let u0 = StateVec::new(a, 0.0, section_u3(a, h, &p, u3_ref), 0.0);
        let u = flow(u0, t, &p);
        [u.u2(), u.u4()]
    };
    let (mut a, mut t) = (roll.state(0.0).u1(), roll.period / 2.0);
    for _ in 0..20 {
        let r = residual(a, t);
        if r[0].abs().max(r[1].abs()) < 1e-12 {
            break;
        }
        let da = 1e-7;
        let ra = residual(a + da, t);
        let rt = residual(a, t + da);
        let j = [
            [(ra[0] - r[0]) / da, (rt[0] - r[0]) / da],
            [(ra[1] - r[1]) / da, (rt[1] - r[1]) / da],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        a -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        t -= (j[0][0] * r[1] - j[1][0] * r[0]) / det;
    }
    (a, 2.0 * t)
}

fn roll_at(mu: f64, h: f64) -> RollSolution {
    let seed = onset().roll_at(mu).unwrap();
    solve_roll(mu, NU, h, &seed, DEFAULT_MODES).unwrap()
}

#[test]
fn maxwell_roll_matches_shooting() {
    let roll = roll_at(0.2004, 0.0);
    let (a, period) = shoot(&roll);
    assert!(
        (period - roll.period).abs() < 1e-6,
        "{period} vs {}",
        roll.period
    );
    assert!((a - roll.state(0.0).u1()).abs() < 1e-6);
    let p = roll.params;
    let u0 = roll.state(0.0);
    for k in 1..=8 {
        let x = roll.period * k as f64 / 8.0;
        let u = flow(u0, x, &p);
        let v = roll.state(x);
        for i in 0..4 {
            assert!((u.0[i] - v.0[i]).abs() < 1e-6, "x = {x}, component {i}");
        }
    }
}

#[test]
fn off_level_rolls_match_shooting() {
    for (mu, h) in [(0.17, -0.03), (0.21, 0.04), (0.225, -0.05)] {
        let roll = roll_at(mu, h);
        let (a, period) = shoot(&roll);
        assert!((period - roll.period).abs() < 1e-6, "({mu}, {h})");
        assert!((a - roll.state(0.0).u1()).abs() < 1e-6, "({mu}, {h})");
    }
}

#[test]
fn onset_branch_turns_at_the_fold() {
    let fold = onset().fold_mu();
    assert!((fold - 0.2428).abs() < 5e-4, "{fold}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rolls_conserve_their_level_and_are_reversible(mu in 0.15f64..0.225, h in -0.05f64..0.05) {
        let roll = roll_at(mu, h);
        let p = roll.params;
        prop_assert!(roll.period > 0.0);
        prop_assert!((roll.level - h).abs() < 1e-10);
        for k in 0..16 {
            let x = roll.period * k as f64 / 16.0;
            let u = roll.state(x);
            prop_assert!((hamiltonian(&u, &p) - h).abs() < 1e-9);
            let m = roll.state(-x);
            prop_assert!((m.u1() - u.u1()).abs() < 1e-12 && (m.u2() + u.u2()).abs() < 1e-12);
            let shifted = roll.state(x + roll.period);
            prop_assert!((shifted.u1() - u.u1()).abs() < 1e-10);
        }
        let n = 4 * roll.modes();
        for k in 0..n {
            let x = roll.period * (k as f64 + 0.37) / n as f64;
            prop_assert!(roll.steady_residual(x).abs() <= 1e-7);
        }
        prop_assert!(roll.tail_ratio() <= 1e-10);
    }

    #[test]
    fn monodromy_is_symplectic_like(mu in 0.15f64..0.225, h in -0.05f64..0.05) {
        let f = floquet(&roll_at(mu, h)).unwrap();
        prop_assert_eq!(f.unit_multiplicity, 2);
        prop_assert!((f.product() - 1.0).norm_sqr().sqrt() < 1e-6);
        prop_assert!(f.alpha > 0.0);
    }
}
