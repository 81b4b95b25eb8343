//! Dormand–Prince 5(4) with the fourth-order continuous extension.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated from the field when `None`.
    pub h0: Option<f64>,
    /// Largest allowed |h|; `None` means the whole interval.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for RkOptions {
    fn default() -> Self {
        RkOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h0: None,
            h_max: None,
            max_steps: 1_000_000,
        }
    }
}

impl RkOptions {
    pub fn with_tol(tol: f64) -> Self {
        RkOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

/// Output of an integration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Output abscissae: the requested samples, or every accepted step when none were requested.
    pub xs: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub x_end: f64,
    pub y_end: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Set when an event function changed sign; the integration stopped there.
    pub event: Option<f64>,
}

/// Terminal event: integration stops where `g(x, y)` changes sign.
pub struct Event<G> {
    pub g: G,
    /// Bisection tolerance on the location.
    pub x_tol: f64,
}

/// Adaptive Dormand–Prince integration from `x0` to `x1` (either direction).
///
/// `rhs(x, y, dy)` writes the field into `dy`. Output is produced at
/// `samples` by dense interpolation, or at every accepted step when
/// `samples` is empty. Steps shorter than `1e-14·|x1 - x0|` abort.
pub fn rk_integrate<F>(
    rhs: F,
    y0: &[f64],
    x0: f64,
    x1: f64,
    opts: &RkOptions,
    samples: &[f64],
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rk_integrate_with_event(
        rhs,
        y0,
        x0,
        x1,
        opts,
        samples,
        None::<Event<fn(f64, &[f64]) -> f64>>,
    )
}

/// [`rk_integrate`] with an optional terminal event.
pub fn rk_integrate_with_event<F, G>(
    mut rhs: F,
    y0: &[f64],
    x0: f64,
    x1: f64,
    opts: &RkOptions,
    samples: &[f64],
    mut event: Option<Event<G>>,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> f64,
{
    if x0 == x1 {
        return Err(Error::InvalidArgument("rk_integrate needs x0 != x1".into()));
    }
    let n = y0.len();
    let dir = (x1 - x0).signum();
    let span = (x1 - x0).abs();
    let h_min = 1e-14 * span;
    let h_max = opts.h_max.unwrap_or(span).min(span);

    let mut out = Trajectory::default();
    let record_steps = samples.is_empty();
    let mut next_sample = 0usize;
    if record_steps {
        out.xs.push(x0);
        out.ys.push(y0.to_vec());
    } else {
        while next_sample < samples.len() && samples[next_sample] == x0 {
            out.xs.push(x0);
            out.ys.push(y0.to_vec());
            next_sample += 1;
        }
    }

    let mut x = x0;
    let mut y = y0.to_vec();
    let mut k = [
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    ];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut cont = [
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    ];
    rhs(x, &y, &mut k[0]);

    let mut h = match opts.h0 {
        Some(h0) => h0.abs().min(h_max),
        None => initial_step(&mut rhs, x, &y, &k[0], dir, opts, h_max),
    };
    let mut g_old = event.as_mut().map(|e| (e.g)(x, &y));
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let remaining = (x1 - x).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;

        for i in 0..n {
            tmp[i] = y[i] + hs * A21 * k[0][i];
        }
        rhs(x + C2 * hs, &tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A31 * k[0][i] + A32 * k[1][i]);
        }
        rhs(x + C3 * hs, &tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        rhs(x + C4 * hs, &tmp, &mut k[3]);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        rhs(x + C5 * hs, &tmp, &mut k[4]);
        for i in 0..n {
            tmp[i] = y[i]
                + hs * (A61 * k[0][i]
                    + A62 * k[1][i]
                    + A63 * k[2][i]
                    + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        let x_new = if last { x1 } else { x + hs };
        rhs(x_new, &tmp, &mut k[5]);
        for i in 0..n {
            y_new[i] = y[i]
                + hs * (A71 * k[0][i]
                    + A73 * k[2][i]
                    + A74 * k[3][i]
                    + A75 * k[4][i]
                    + A76 * k[5][i]);
        }
        rhs(x_new, &y_new, &mut k[6]);
        let mut err_norm = 0.0;
        for i in 0..n {
            err[i] = hs
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_norm += (err[i] / sc) * (err[i] / sc);
        }
        err_norm = (err_norm / n.max(1) as f64).sqrt();
        steps += 1;

        if !err_norm.is_finite() {
            out.rejected_steps += 1;
            h *= 0.1;
            if h < h_min {
                return Err(Error::StepUnderflow { x, h });
            }
            continue;
        }

        if err_norm <= 1.0 {
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = hs * k[0][i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - hs * k[6][i] - bspl;
                cont[4][i] = hs
                    * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let x_old = x;
            out.accepted_steps += 1;

            let mut stop_at: Option<f64> = None;
            if let (Some(ev), Some(g0)) = (event.as_mut(), g_old) {
                let g1 = (ev.g)(x_new, &y_new);
                if g0 == 0.0 || g0.signum() != g1.signum() {
                    // Bisection on the dense output.
                    let (mut a, mut b) = (x_old, x_new);
                    let mut ga = g0;
                    let mut ya = vec![0.0; n];
                    while (b - a).abs() > ev.x_tol {
                        let m = 0.5 * (a + b);
                        dense(&cont, (m - x_old) / hs, &mut ya);
                        let gm = (ev.g)(m, &ya);
                        if gm == 0.0 || gm.signum() != ga.signum() {
                            b = m;
                        } else {
                            a = m;
                            ga = gm;
                        }
                    }
                    stop_at = Some(b);
                }
                g_old = Some(g1);
            }

            let x_reach = stop_at.unwrap_or(x_new);
            if record_steps {
                if stop_at.is_none() {
                    out.xs.push(x_new);
                    out.ys.push(y_new.clone());
                }
            } else {
                while next_sample < samples.len() && (samples[next_sample] - x_reach) * dir <= 0.0 {
                    let xs = samples[next_sample];
                    let mut ys = vec![0.0; n];
                    dense(&cont, (xs - x_old) / hs, &mut ys);
                    out.xs.push(xs);
                    out.ys.push(ys);
                    next_sample += 1;
                }
            }

            if let Some(xe) = stop_at {
                let mut ye = vec![0.0; n];
                dense(&cont, (xe - x_old) / hs, &mut ye);
                if record_steps {
                    out.xs.push(xe);
                    out.ys.push(ye.clone());
                }
                out.x_end = xe;
                out.y_end = ye;
                out.event = Some(xe);
                return Ok(out);
            }

            x = x_new;
            core::mem::swap(&mut y, &mut y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            if last {
                out.x_end = x;
                out.y_end = y;
                return Ok(out);
            }
            let fac = (0.9 * err_norm.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            h = (h * fac).min(h_max);
        } else {
            out.rejected_steps += 1;
            let fac = (0.9 * err_norm.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
        }
        if h < h_min {
            return Err(Error::StepUnderflow { x, h });
        }
    }
}

#[inline]
fn dense(cont: &[Vec<f64>; 5], theta: f64, out: &mut [f64]) {
    let theta1 = 1.0 - theta;
    for i in 0..out.len() {
        out[i] = cont[0][i]
            + theta
                * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])));
    }
}

fn initial_step<F>(
    rhs: &mut F,
    x: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    opts: &RkOptions,
    h_max: f64,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(sc.iter())
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n.max(1) as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(h_max);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h * b).collect();
    let mut f1 = vec![0.0; n];
    rhs(x + dir * h, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}
