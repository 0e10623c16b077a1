//! Dense and sparse linear algebra used by the discretization and the
//! evaluation code.

mod banded;
mod dense;
mod krylov;
mod sparse;
mod spectral;

pub use banded::{BandLu, BandMatrix};
pub use dense::{lu_solve, DenseMatrix, LuFactor};
pub use krylov::{gmres, KrylovResult};
pub use sparse::CsrMatrix;
pub use spectral::{spectral_norm, LinearOperator, SpectralEstimate};

use crate::error::{Error, Result};

/// Systems up to this size are solved by dense LU.
pub const DENSE_LIMIT: usize = 200;
/// Band storage (in values) above which the Krylov path is used.
pub const BAND_STORAGE_LIMIT: usize = 40_000_000;
/// Residual contract of [`sparse_solve`].
pub const SOLVE_RTOL: f64 = 1e-8;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Which direct or iterative path [`sparse_solve`] takes for `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePath {
    Dense,
    Banded,
    Krylov,
}

pub fn solve_path(a: &CsrMatrix) -> SolvePath {
    let n = a.nrows();
    if n <= DENSE_LIMIT {
        return SolvePath::Dense;
    }
    let (kl, ku) = a.bandwidths();
    if BandMatrix::storage_len(n, kl, ku) <= BAND_STORAGE_LIMIT {
        SolvePath::Banded
    } else {
        SolvePath::Krylov
    }
}

/// Solves `A u = b` for square nonsingular `A`, guaranteeing
/// `|A u - b| <= 1e-8 |b|`.
pub fn sparse_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::config(format!(
            "sparse_solve: matrix {}x{} with right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let u = match solve_path(a) {
        SolvePath::Dense => {
            let lu = LuFactor::new(&a.to_dense())?;
            let mut u = b.to_vec();
            lu.solve_in_place(&mut u);
            u
        }
        SolvePath::Banded => {
            let lu = BandMatrix::from_csr(a).factorize()?;
            let mut u = b.to_vec();
            lu.solve_in_place(&mut u);
            u
        }
        SolvePath::Krylov => {
            let res = gmres(a, b, 60, 20 * a.nrows().max(1000), 1e-10);
            if !res.converged && res.relative_residual > SOLVE_RTOL {
                return Err(Error::SolverFailure {
                    reason: format!("GMRES stalled after {} iterations", res.iterations),
                    residual: res.relative_residual,
                });
            }
            res.x
        }
    };
    let bn = norm2(b);
    let r: Vec<f64> = a.matvec(&u).iter().zip(b).map(|(p, q)| p - q).collect();
    let rel = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    if !(rel <= SOLVE_RTOL) {
        return Err(Error::SolverFailure {
            reason: "residual above tolerance".into(),
            residual: rel,
        });
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn identity() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(sparse_solve(&CsrMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn laplace_inverse_column() {
        // (T^{-1})_{i,0} = (n - i) / (n + 1) for the (-1, 2, -1) matrix.
        for n in [50, 500] {
            let a = laplace_1d(n);
            let mut b = vec![0.0; n];
            b[0] = 1.0;
            let u = sparse_solve(&a, &b).unwrap();
            for (i, ui) in u.iter().enumerate() {
                let exact = (n - i) as f64 / (n + 1) as f64;
                assert!((ui - exact).abs() < 1e-10);
            }
        }
        assert_eq!(solve_path(&laplace_1d(50)), SolvePath::Dense);
        assert_eq!(solve_path(&laplace_1d(500)), SolvePath::Banded);
    }

    #[test]
    fn krylov_path_meets_contract() {
        let n = 300;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let res = gmres(&a, &b, 60, 20_000, 1e-10);
        let r: Vec<f64> = a.matvec(&res.x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= SOLVE_RTOL * norm2(&b));
    }

    #[test]
    fn shape_mismatch() {
        assert!(sparse_solve(&CsrMatrix::identity(3), &[1.0]).unwrap_err().is_config());
    }
}
