use std::sync::OnceLock;

use rollscape_core::model::{hamiltonian, reverser};
use rollscape_core::pulse::{
    far_field_bc, hamiltonian_trace, pumping_residual, solve_pulse, solve_pulse_near, Phase,
    PulseOptions, PulseSolution, R_END_MARGIN,
};
use rollscape_core::rolls::{trace_onset_branch, OnsetBranch, DEFAULT_MODES};
use rollscape_core::ModelParams;

const NU: f64 = 1.6;

fn onset() -> &'static OnsetBranch {
    static B: OnceLock<OnsetBranch> = OnceLock::new();
    B.get_or_init(|| trace_onset_branch(NU, DEFAULT_MODES, 0.1).unwrap())
}

fn pulse(mu: f64, eps: f64, phase: Phase, l: f64, mesh: f64) -> PulseSolution {
    let roll = onset().roll_at(mu).unwrap();
    solve_pulse_near(
        &roll,
        l,
        l + R_END_MARGIN,
        phase,
        mesh,
        ModelParams::new(mu, NU, eps),
        &PulseOptions::default(),
    )
    .unwrap()
}

#[test]
fn center_lies_in_the_symmetric_section() {
    for phase in [Phase::Zero, Phase::Pi] {
        for eps in [0.0, 0.1] {
            let p = pulse(0.2, eps, phase, 20.0, 0.05);
            let c = p.center();
            let r = reverser(&c);
            for i in 0..4 {
                assert!((c.0[i] - r.0[i]).abs() < 1e-12, "{phase:?}, eps {eps}");
            }
        }
    }
}

#[test]
fn planar_pulses_conserve_h() {
    for mu in [0.19, 0.2004, 0.21] {
        let p = pulse(mu, 0.0, Phase::Zero, 20.0, 0.05);
        let tr = hamiltonian_trace(&p);
        let (lo, hi) = tr
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), &(_, h)| {
                (a.min(h), z.max(h))
            });
        assert!(hi - lo <= 1e-7, "mu = {mu}: spread {}", hi - lo);
        assert!(p.h_at_center().abs() <= 1e-7);
    }
}

#[test]
fn pumping_matches_on_refined_meshes() {
    let coarse = pumping_residual(&pulse(0.2, 0.1, Phase::Zero, 20.0, 0.05));
    let fine = pumping_residual(&pulse(0.2, 0.1, Phase::Zero, 20.0, 0.025));
    assert!(fine <= 1e-3, "{fine}");
    assert!(fine < coarse);
}

/// Local maxima of `|u1|` in the tail decay at the rate of the stable eigenvalues.
#[test]
fn far_field_decay_slope() {
    let mu = 0.2;
    let p = pulse(mu, 0.0, Phase::Zero, 20.0, 0.05);
    let rate = far_field_bc(mu).unwrap().decay_rate();
    let start = p.plateau_length + 12.0;
    let stop = p.r_end() - 8.0;
    let u: Vec<(f64, f64)> = p
        .mesh
        .iter()
        .zip(&p.profile)
        .map(|(&r, s)| (r, s.u1().abs()))
        .collect();
    let peaks: Vec<(f64, f64)> = u
        .windows(3)
        .filter(|w| w[1].0 > start && w[1].0 < stop && w[1].1 > w[0].1 && w[1].1 >= w[2].1)
        .map(|w| (w[1].0, w[1].1.ln()))
        .collect();
    assert!(peaks.len() >= 3, "{} peaks", peaks.len());
    let n = peaks.len() as f64;
    let mx = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let my = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = peaks.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / peaks.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(rate < 0.0);
    assert!(
        (slope - rate).abs() <= 0.1 * rate.abs(),
        "slope {slope}, rate {rate}"
    );
}

/// Halving the mesh twice shrinks the change in the center level by about 2⁴ each time.
#[test]
fn mesh_halving_is_fourth_order() {
    let opts = PulseOptions {
        max_doublings: 0,
        ..Default::default()
    };
    let params = ModelParams::new(0.2, NU, 0.1);
    let coarse = pulse(0.2, 0.1, Phase::Zero, 20.0, 0.1);
    let mid = solve_pulse(&coarse.doubled(), params, &opts).unwrap();
    let fine = solve_pulse(&mid.doubled(), params, &opts).unwrap();
    let d1 = (mid.h_at_center() - coarse.h_at_center()).abs();
    let d2 = (fine.h_at_center() - mid.h_at_center()).abs();
    assert!(d2 < 1e-6, "{d2}");
    let order = (d1 / d2).log2();
    assert!((3.0..=5.5).contains(&order), "observed order {order}");
    let h = hamiltonian(&fine.center(), &params);
    assert_eq!(h, fine.h_at_center());
}

#[test]
fn boundary_conditions_and_residuals() {
    for phase in [Phase::Zero, Phase::Pi] {
        for eps in [0.0, 0.1] {
            let p = pulse(0.2, eps, phase, 20.0, 0.05);
            let c = p.center();
            assert!(c.u2().abs() <= 1e-10 && c.u4().abs() <= 1e-10);
            let far = far_field_bc(0.2).unwrap().apply(p.profile.last().unwrap());
            assert!(far[0].abs() <= 1e-10 && far[1].abs() <= 1e-10, "{far:?}");
            assert!(p.bvp_residual <= 1e-8);
            assert!(p.defect() <= 1e-8);
            assert!(p.verification_residual() <= 1e-4);
        }
    }
}
