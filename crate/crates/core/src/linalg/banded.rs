//! Banded LU with partial pivoting, LAPACK `gbtrf` storage.
//!
//! Entry `(i, j)` lives at `ab[j * ldab + kl + ku + i - j]` with
//! `ldab = 2 kl + ku + 1`; the extra `kl` rows hold the fill-in created by
//! row interchanges.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn from_csr(a: &CsrMatrix) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        let (kl, ku) = a.bandwidths();
        let mut b = Self::zeros(a.nrows(), kl, ku);
        for (i, j, v) in a.triplets() {
            b.add(i, j, v);
        }
        b
    }

    /// Number of stored values for an `n x n` matrix with the given bandwidths.
    pub fn storage_len(n: usize, kl: usize, ku: usize) -> usize {
        (2 * kl + ku + 1) * n
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ldab() + self.kl + self.ku + i - j
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j + self.kl && j <= i + self.ku, "({i}, {j}) outside band");
        let k = self.at(i, j);
        self.ab[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j + self.kl || j > i + self.ku {
            0.0
        } else {
            self.ab[self.at(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.at(i, j)] * x[j];
            }
        }
        y
    }

    /// Factorizes in place.
    pub fn factorize(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let ldab = self.ldab();
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        let scale = self.ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * (kl + ku + 1) as f64;
        let ab = &mut self.ab;
        let idx = |i: usize, j: usize| j * ldab + kv + i - j;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = ab[idx(k, k)].abs();
            for i in k + 1..=last {
                let v = ab[idx(i, k)].abs();
                if v > pmax {
                    p = i;
                    pmax = v;
                }
            }
            if pmax <= tiny || !pmax.is_finite() {
                return Err(Error::SingularMatrix { column: k, pivot: pmax });
            }
            ipiv[k] = p;
            let jmax = (k + kv).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    ab.swap(idx(k, j), idx(p, j));
                }
            }
            let inv = 1.0 / ab[idx(k, k)];
            for i in k + 1..=last {
                ab[idx(i, k)] *= inv;
            }
            for j in k + 1..=jmax {
                let t = ab[idx(k, j)];
                if t == 0.0 {
                    continue;
                }
                let base_l = k * ldab + kv - k;
                let base = j * ldab + kv - j;
                for i in k + 1..=last {
                    ab[base + i] -= ab[base_l + i] * t;
                }
            }
        }
        Ok(BandLu { band: self, ipiv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    band: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.band.n;
        assert_eq!(b.len(), n);
        let (kl, ku) = (self.band.kl, self.band.ku);
        let kv = kl + ku;
        let ldab = self.band.ldab();
        let ab = &self.band.ab;
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let base = k * ldab + kv - k;
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= ab[base + i] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let base = k * ldab + kv - k;
            b[k] /= ab[base + k];
            let bk = b[k];
            if bk != 0.0 {
                for i in k.saturating_sub(kv)..k {
                    b[i] -= ab[base + i] * bk;
                }
            }
        }
    }
}
