use std::sync::OnceLock;

use proptest::prelude::*;
use rollscape_core::avgflow::equilibrium_curve;
use rollscape_core::rolls::{
    continue_rolls, solve_roll, trace_onset_branch, OnsetBranch, RollFamily, DEFAULT_MODES,
};
use rollscape_core::svf::{pde_energy, s_field, s_field_pumping, s_grid};

const NU: f64 = 1.6;

fn onset() -> &'static OnsetBranch {
    static B: OnceLock<OnsetBranch> = OnceLock::new();
    B.get_or_init(|| trace_onset_branch(NU, DEFAULT_MODES, 0.1).unwrap())
}

fn family() -> &'static RollFamily {
    static F: OnceLock<RollFamily> = OnceLock::new();
    F.get_or_init(|| {
        continue_rolls((0.19, 0.21), (-0.02, 0.02), (9, 9), NU, DEFAULT_MODES).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_integrands_agree(mu in 0.15f64..0.225, h in -0.05f64..0.05) {
        let seed = onset().roll_at(mu).unwrap();
        let roll = solve_roll(mu, NU, h, &seed, DEFAULT_MODES).unwrap();
        let s = s_field(&roll);
        prop_assert!((s - s_field_pumping(&roll)).abs() <= 1e-10);
        prop_assert!((s - (pde_energy(&roll) - h)).abs() <= 1e-8);
    }
}

/// Near the Maxwell point the zero set of `S` is a graph `h*(μ)` with positive slope.
#[test]
fn zero_curve_rises_with_mu() {
    let grid = s_grid(family());
    assert_eq!(grid.solved_count(), 81);
    let curve = equilibrium_curve(&grid, Some(family()));
    assert!(curve.len() >= 8);
    for w in curve.windows(2) {
        assert!(w[1].h_star > w[0].h_star);
        let slope = (w[1].h_star - w[0].h_star) / (w[1].mu - w[0].mu);
        assert!(slope > 0.0);
    }
    for e in &curve {
        assert!(e.s_h < 0.0);
    }
}
