//! Banded LU with partial pivoting, in the LAPACK `gbtrf` storage layout.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Column-major band storage with `kl` extra rows reserved for pivoting
/// fill-in: entry `(i, j)` lives at `data[kl + ku + i - j + j * ldab]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.data[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    /// Factorizes in place of a copy.
    pub fn lu(&self) -> Result<BandedLu> {
        let mut ab = self.data.clone();
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let at = |i: usize, j: usize| kv + i - j + j * ldab;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0usize;
            let mut best = ab[at(j, j)].abs();
            for off in 1..=km {
                let v = ab[at(j + off, j)].abs();
                if v > best {
                    best = v;
                    jp = off;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular("banded LU: zero pivot"));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(at(j, c), at(j + jp, c));
                }
            }
            if km > 0 {
                let piv = ab[at(j, j)];
                for off in 1..=km {
                    ab[at(j + off, j)] /= piv;
                }
                for c in (j + 1)..=ju {
                    let a = ab[at(j, c)];
                    if a != 0.0 {
                        for off in 1..=km {
                            let l = ab[at(j + off, j)];
                            ab[at(j + off, c)] -= l * a;
                        }
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
        })
    }
}

/// Factors produced by [`BandedMatrix::lu`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        let at = |i: usize, j: usize| kv + i - j + j * ldab;
        for j in 0..n.saturating_sub(1) {
            let km = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                for off in 1..=km {
                    b[j + off] -= self.ab[at(j + off, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.ab[at(i, j)] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
