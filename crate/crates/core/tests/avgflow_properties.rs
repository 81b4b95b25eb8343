use std::sync::OnceLock;

use proptest::prelude::*;
use rollscape_core::avgflow::{integrate_avg, integrate_level, l_min, ConstantS, FnS, DEFAULT_K};
use rollscape_core::rolls::{continue_rolls, DEFAULT_MODES};
use rollscape_core::svf::{s_grid, SVFGrid};

fn grid() -> &'static SVFGrid {
    static G: OnceLock<SVFGrid> = OnceLock::new();
    G.get_or_init(|| {
        let family =
            continue_rolls((0.19, 0.21), (-0.05, 0.05), (9, 11), 1.6, DEFAULT_MODES).unwrap();
        s_grid(&family)
    })
}

fn nonlinear_s(h: f64, mu: f64) -> f64 {
    -(h - 0.01) + 2.0 * (h - 0.01).powi(3) + 0.5 * (mu - 0.2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With `S ≡ s` the level moves by `-εs ln(L/x)`: linear in `ε` and in `s`.
    #[test]
    fn drift_scales_with_eps_and_s(
        eps in 0.001f64..0.2,
        s in -0.05f64..0.05,
        l in 5.0f64..200.0,
        h_end in -0.01f64..0.01,
    ) {
        let r0 = 1.0;
        let t = integrate_avg(0.2, eps, h_end, l, r0, (-1.0, 1.0), ConstantS(s)).unwrap();
        let t2 = integrate_avg(0.2, 2.0 * eps, h_end, l, r0, (-1.0, 1.0), ConstantS(s)).unwrap();
        let d1 = t.h_final() - h_end;
        let d2 = t2.h_final() - h_end;
        prop_assert!((d1 + eps * s * (l / r0).ln()).abs() <= 1e-9);
        prop_assert!((d2 - 2.0 * d1).abs() <= 1e-9);
    }

    /// `S = -(h - h*)` attracts forward in `x`: `|h - h*|` decays like `(x/x0)^{-ε}`.
    #[test]
    fn equilibrium_attracts_forward(
        eps in 0.01f64..0.3,
        h_star in -0.02f64..0.02,
        offset in -0.02f64..0.02,
    ) {
        let (x0, x1) = (1.0, 500.0);
        let t = integrate_level(0.2, eps, x0, h_star + offset, x1, DEFAULT_K, FnS(|h: f64, _: f64| -(h - h_star))).unwrap();
        let mut last = offset.abs();
        for (x, h) in t.x_samples.iter().zip(&t.h_samples) {
            let gap = (h - h_star).abs();
            prop_assert!(gap <= last + 1e-12);
            prop_assert!((gap - offset.abs() * (x / x0).powf(-eps)).abs() <= 1e-8);
            last = gap;
        }
    }

    /// Plateaus just shorter than `l_min` keep `h` in `K`; just longer ones leave.
    #[test]
    fn l_min_separates(eps in 0.05f64..0.3, b in 0.05f64..0.3, r0 in 0.5f64..2.0) {
        let delta = 1e-3;
        let k = DEFAULT_K;
        let lm = l_min(eps, r0, k.1, delta, b).unwrap();
        let inside = integrate_avg(0.2, eps, -delta, lm * (1.0 - 1e-6), r0, k, ConstantS(-b)).unwrap();
        let outside = integrate_avg(0.2, eps, -delta, lm * (1.0 + 1e-6), r0, k, ConstantS(-b)).unwrap();
        prop_assert!(inside.exited_k.is_none());
        prop_assert!(outside.exited_k.is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Between samples `h` moves in the direction of `εS`.
    #[test]
    fn level_moves_with_eps_s(eps in 0.01f64..0.3, mu in 0.18f64..0.22, h_end in -0.04f64..0.04, l in 10.0f64..300.0) {
        let t = integrate_avg(mu, eps, h_end, l, 1.0, DEFAULT_K, FnS(nonlinear_s)).unwrap();
        for i in 1..t.x_samples.len() {
            let slope = (t.h_samples[i] - t.h_samples[i - 1]) / (t.x_samples[i] - t.x_samples[i - 1]);
            let s = nonlinear_s(t.h_samples[i - 1], mu);
            prop_assert!(slope * s >= 0.0 || s.abs() < 1e-9);
        }
    }

    /// The flow depends on `(ε, x)` only through `ε ln x`.
    #[test]
    fn depends_on_eps_log_x(eps in 0.02f64..0.3, mu in 0.18f64..0.22, h_end in -0.04f64..0.04, l in 5.0f64..100.0) {
        let k = (-1.0, 1.0);
        let a = integrate_level(mu, eps, l, h_end, 1.5, k, FnS(nonlinear_s)).unwrap();
        let b = integrate_level(mu, eps / 2.0, l * l, h_end, 2.25, k, FnS(nonlinear_s)).unwrap();
        prop_assert!((a.h_final() - b.h_final()).abs() <= 1e-6);
    }

    /// From `h(L) = 0`, `|h| ≤ ε max|S| ln(L/x)`, so `L ≤ exp(b̂/ε)` with `b̂ = min|k±| / max_K |S|` keeps `h` in `K`.
    #[test]
    fn short_plateaus_stay_in_k(i in 0usize..9, eps in 0.05f64..0.3) {
        let g = grid();
        let mu = g.mu_values[i];
        let s_max = (0..g.h_values.len()).filter_map(|j| g.s_at(i, j)).fold(0.0f64, |m, s| m.max(s.abs()));
        let b_hat = DEFAULT_K.1.min(-DEFAULT_K.0) / s_max;
        let l = (b_hat / eps).exp().min(1e8);
        prop_assume!(l > 2.0);
        let t = integrate_avg(mu, eps, 0.0, l, 1.0, DEFAULT_K, g).unwrap();
        prop_assert!(t.exited_k.is_none());
        prop_assert!(t.h_samples.iter().all(|h| *h >= DEFAULT_K.0 && *h <= DEFAULT_K.1));
    }
}

#[test]
fn flat_at_zero_eps() {
    for s in [-1.0, 0.3] {
        let t = integrate_avg(0.2, 0.0, 0.02, 80.0, 1.0, DEFAULT_K, ConstantS(s)).unwrap();
        assert!(t.h_samples.iter().all(|&h| h == 0.02));
    }
}
