use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use super::sparse::CsrMatrix;
use super::{dot, norm2};

/// Anything that can apply itself and its transpose to a vector.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.matvec_transpose(x)
    }
}

impl LinearOperator for CsrMatrix {
    fn nrows(&self) -> usize {
        CsrMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        CsrMatrix::ncols(self)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.matvec_transpose(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

const RESTARTS: u64 = 3;

/// Largest singular value by power iteration on `A^T A`.
///
/// Each of three randomized starts iterates until the eigen-residual
/// `|A^T A v - mu v|` drops below `tol * mu`; the largest estimate wins.
pub fn spectral_norm<A: LinearOperator + ?Sized>(a: &A, tol: f64, max_iter: usize) -> SpectralEstimate {
    let n = a.ncols();
    let mut best = SpectralEstimate {
        value: 0.0,
        converged: n == 0,
        iterations: 0,
    };
    if n == 0 {
        return best;
    }
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + restart);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vn = norm2(&v);
        v.iter_mut().for_each(|x| *x /= vn);
        let mut mu = 0.0;
        let mut converged = false;
        let mut iters = 0;
        for it in 0..max_iter {
            iters = it + 1;
            let w = a.apply_transpose(&a.apply(&v));
            mu = dot(&v, &w);
            let wn = norm2(&w);
            if wn == 0.0 {
                converged = true;
                break;
            }
            let res: f64 = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - mu * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            v = w.iter().map(|x| x / wn).collect();
            if res <= tol * mu {
                converged = true;
                // One more Rayleigh quotient on the updated vector.
                let av = a.apply(&v);
                mu = mu.max(dot(&av, &av));
                break;
            }
        }
        let sigma = mu.max(0.0).sqrt();
        if sigma > best.value || restart == 0 {
            best = SpectralEstimate {
                value: sigma,
                converged,
                iterations: iters,
            };
        }
    }
    best
}
