//! Error studies against a fine-scale finite element reference.

use serde::{Deserialize, Serialize};

use super::{pg_lod_solve, LodContext};
use crate::coeff::Coefficient;
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_rhs, assemble_stiffness_for, interpolation_matrix, mass_norm, prolongation};
use crate::linalg::{sparse_solve, CsrMatrix};
use crate::mesh::CartesianMesh;

/// Right-hand side of an error study.
#[derive(Clone, Copy)]
pub enum Load<'a> {
    /// A source function, integrated by quadrature on every level.
    Function(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    /// The fine functional `v -> c . I_h v` for a coarse nodal vector `c`.
    ///
    /// Its coarse load vector is `c` itself, and it vanishes on the kernel
    /// of `I_h`, so the only error of the corrected solution left is the
    /// one caused by truncating the patches.
    Dual(&'a [f64]),
}

impl Load<'_> {
    /// Load vector on the interior nodes of the fine mesh.
    pub fn fine_load(&self, fine: &CartesianMesh, coarse: &CartesianMesh) -> Result<Vec<f64>> {
        match self {
            Load::Function(f) => assemble_rhs(fine, f, fine.level() + 1),
            Load::Dual(c) => {
                check_dual(c, coarse)?;
                Ok(interpolation_matrix(fine, coarse)?.matvec_transpose(c))
            }
        }
    }

    /// Coarse load vector of `ctx`.
    pub fn coarse_load(&self, ctx: &LodContext) -> Result<Vec<f64>> {
        match self {
            Load::Function(f) => ctx.load_vector(f),
            Load::Dual(c) => {
                check_dual(c, ctx.coarse_mesh())?;
                Ok(c.to_vec())
            }
        }
    }
}

fn check_dual(c: &[f64], coarse: &CartesianMesh) -> Result<()> {
    if c.len() != coarse.num_interior_nodes() {
        return Err(Error::config(format!(
            "dual load has {} entries, coarse level {} has {} interior nodes",
            c.len(),
            coarse.level(),
            coarse.num_interior_nodes()
        )));
    }
    Ok(())
}

/// Fine-level Galerkin solution used as the exact solution.
#[derive(Clone, Debug)]
pub struct FineReference {
    pub mesh: CartesianMesh,
    pub u: Vec<f64>,
    pub mass: CsrMatrix,
    pub norm: f64,
}

impl FineReference {
    pub fn new<F: Fn(f64, f64) -> f64>(coeff: &Coefficient, f: F) -> Result<Self> {
        let mesh = coeff.mesh();
        Self::with_load(coeff, &assemble_rhs(&mesh, f, coeff.level() + 1)?)
    }

    /// Reference for a given fine load vector.
    pub fn with_load(coeff: &Coefficient, load: &[f64]) -> Result<Self> {
        let mesh = coeff.mesh();
        let u = if load.iter().all(|&v| v == 0.0) {
            vec![0.0; load.len()]
        } else {
            sparse_solve(&assemble_stiffness_for(&mesh, coeff)?, load)?
        };
        let mass = assemble_mass(&mesh);
        let norm = mass_norm(&mass, &u);
        Ok(Self { mesh, u, mass, norm })
    }

    /// `|v - u|_L2` for fine interior nodal values `v`.
    pub fn error(&self, v: &[f64]) -> f64 {
        let d: Vec<f64> = v.iter().zip(&self.u).map(|(a, b)| a - b).collect();
        mass_norm(&self.mass, &d)
    }

    pub fn relative_error(&self, v: &[f64]) -> f64 {
        let e = self.error(v);
        if self.norm > 0.0 {
            e / self.norm
        } else {
            e
        }
    }
}

/// Relative L2 distance between the coarse function `u` and the reference.
pub fn coarse_l2_error(reference: &FineReference, coarse: &CartesianMesh, u: &[f64]) -> Result<f64> {
    let p = prolongation(coarse, &reference.mesh)?;
    Ok(reference.relative_error(&p.matvec(u)))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub layers: usize,
    /// Relative L2 error of the coarse solution `u_h`.
    pub coarse_error: f64,
    /// Relative L2 error of the corrected solution `(1 - Q) u_h`.
    pub corrected_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayStudy {
    pub rows: Vec<DecayRow>,
    /// Slope of `ln(corrected_error)` over the number of layers.
    pub corrected_slope: f64,
    /// Slope of `ln(coarse_error)` over the number of layers.
    pub coarse_slope: f64,
}

/// Error of the PG-LOD solution as the patch size grows.
pub fn localization_decay_study(
    coarse_level: u32,
    coeff: &Coefficient,
    load: Load<'_>,
    layers: &[usize],
) -> Result<DecayStudy> {
    if layers.len() < 2 {
        return Err(Error::config("layers: need at least two patch sizes"));
    }
    let coarse = CartesianMesh::new(coarse_level)?;
    let reference = FineReference::with_load(coeff, &load.fine_load(&coeff.mesh(), &coarse)?)?;
    let mut rows = Vec::new();
    for &l in layers {
        let ctx = LodContext::new(coarse_level, coeff.level(), l)?;
        let s = ctx.assemble_effective(coeff)?;
        let u = pg_lod_solve(&s, &load.coarse_load(&ctx)?)?;
        let coarse_error = coarse_l2_error(&reference, ctx.coarse_mesh(), &u)?;
        let corrected_error = reference.relative_error(&ctx.reconstruct(coeff, &u)?);
        log::info!("layers {l}: coarse {coarse_error:.3e}, corrected {corrected_error:.3e}");
        rows.push(DecayRow {
            layers: l,
            coarse_error,
            corrected_error,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.layers as f64).collect();
    let yc: Vec<f64> = rows.iter().map(|r| r.corrected_error.ln()).collect();
    let yh: Vec<f64> = rows.iter().map(|r| r.coarse_error.ln()).collect();
    Ok(DecayStudy {
        corrected_slope: fit_slope(&x, &yc),
        coarse_slope: fit_slope(&x, &yh),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    /// Relative L2 error of the coarse solution `u_h`.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `ln(error)` over `ln(h)`.
    pub rate: f64,
}

/// Coarse L2 error of PG-LOD over a range of coarse levels.
pub fn h_convergence_study<F>(
    coarse_levels: &[u32],
    coeff: &Coefficient,
    f: F,
    layers: usize,
) -> Result<ConvergenceStudy>
where
    F: Fn(f64, f64) -> f64 + Copy,
{
    if coarse_levels.len() < 2 {
        return Err(Error::config("coarse_levels: need at least two levels"));
    }
    let reference = FineReference::new(coeff, f)?;
    let mut rows = Vec::new();
    for &level in coarse_levels {
        let ctx = LodContext::new(level, coeff.level(), layers)?;
        let s = ctx.assemble_effective(coeff)?;
        let u = pg_lod_solve(&s, &ctx.load_vector(f)?)?;
        let error = coarse_l2_error(&reference, ctx.coarse_mesh(), &u)?;
        log::info!("level {level}: error {error:.3e}");
        rows.push(ConvergenceRow {
            level,
            h: ctx.coarse_mesh().h(),
            error,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
    Ok(ConvergenceStudy {
        rate: fit_slope(&x, &y),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.7 * v).collect();
        assert!((fit_slope(&x, &y) + 0.7).abs() < 1e-14);
    }
}
