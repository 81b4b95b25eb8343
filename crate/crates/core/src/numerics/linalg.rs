use nalgebra::{Complex, DMatrix, Matrix4, Schur};
#[allow(unused_imports)]
use num_traits::Float;

const SCHUR_MAX_ITER: usize = 400;

/// Eigenvalues of a real 4×4 matrix.
///
/// Uses the real Schur form; when the QR iteration stalls (it can cycle on
/// exactly structured matrices) falls back to the roots of the
/// characteristic polynomial, polished by Newton.
pub fn eigenvalues4(m: &Matrix4<f64>) -> [Complex<f64>; 4] {
    if let Some(schur) = Schur::try_new(*m, f64::EPSILON, SCHUR_MAX_ITER) {
        let ev = schur.complex_eigenvalues();
        return [ev[0], ev[1], ev[2], ev[3]];
    }
    polynomial_roots4(&char_poly4(m))
}

/// Coefficients `c` of `det(λI - M) = λ⁴ + c[3]λ³ + c[2]λ² + c[1]λ + c[0]`
/// (Faddeev–LeVerrier).
fn char_poly4(m: &Matrix4<f64>) -> [f64; 4] {
    let mut c = [0.0; 4];
    let mut mk = Matrix4::<f64>::zeros();
    let id = Matrix4::<f64>::identity();
    let mut ck = 1.0;
    for k in 1..=4 {
        mk = m * mk + id * ck;
        let am = m * mk;
        ck = -am.trace() / k as f64;
        c[4 - k] = ck;
    }
    c
}

/// Aberth–Ehrlich iteration for a monic quartic.
fn polynomial_roots4(c: &[f64; 4]) -> [Complex<f64>; 4] {
    let eval = |z: Complex<f64>| {
        let p = (((z + c[3]) * z + c[2]) * z + c[1]) * z + c[0];
        let dp = ((z * 4.0 + 3.0 * c[3]) * z + 2.0 * c[2]) * z + c[1];
        (p, dp)
    };
    let scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut z: [Complex<f64>; 4] = core::array::from_fn(|k| {
        let t = 0.4 + k as f64 * core::f64::consts::FRAC_PI_2;
        Complex::new(0.5 * scale * t.cos(), 0.5 * scale * t.sin())
    });
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..4 {
            let (p, dp) = eval(z[i]);
            if p.norm_sqr() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut sum = Complex::new(0.0, 0.0);
            for j in 0..4 {
                if j != i {
                    sum += Complex::new(1.0, 0.0) / (z[i] - z[j]);
                }
            }
            let w = ratio / (Complex::new(1.0, 0.0) - ratio * sum);
            z[i] -= w;
            moved = moved.max(w.norm_sqr().sqrt() / (1.0 + z[i].norm_sqr().sqrt()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// Operator norm induced by the max norm: the largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: [Complex<f64>; 4]) -> [Complex<f64>; 4] {
        v.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        v
    }

    fn close(a: [Complex<f64>; 4], b: [Complex<f64>; 4], tol: f64) {
        let (a, b) = (sorted(a), sorted(b));
        for k in 0..4 {
            assert!((a[k] - b[k]).norm_sqr().sqrt() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn diagonal_and_rotation() {
        let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(3.0, -1.0, 0.5, 2.0));
        let want = [3.0, -1.0, 0.5, 2.0].map(|x| Complex::new(x, 0.0));
        close(eigenvalues4(&d), want, 1e-12);
        close(polynomial_roots4(&char_poly4(&d)), want, 1e-10);
        let r = Matrix4::new(
            0.0, -2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        );
        let want = [
            Complex::new(0.0, 2.0),
            Complex::new(0.0, -2.0),
            Complex::new(1.0, 0.0),
            Complex::new(1.0, 0.0),
        ];
        close(eigenvalues4(&r), want, 1e-7);
    }

    #[test]
    fn char_poly_of_companion() {
        // Companion matrix of λ⁴ - 10λ³ + 35λ² - 50λ + 24 = (λ-1)(λ-2)(λ-3)(λ-4).
        let m = Matrix4::new(
            10.0, -35.0, 50.0, -24.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        );
        let c = char_poly4(&m);
        for (got, want) in c.iter().zip([24.0, -50.0, 35.0, -10.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let want = [1.0, 2.0, 3.0, 4.0].map(|x| Complex::new(x, 0.0));
        close(eigenvalues4(&m), want, 1e-9);
        close(polynomial_roots4(&c), want, 1e-9);
    }
}
