//! Petrov-Galerkin localized orthogonal decomposition.
//!
//! [`LodContext`] fixes the coarse mesh, the fine level and the patch size.
//! It produces element correctors, the per-element local effective matrices
//! and the assembled effective matrix used for the coarse solve.

mod corrector;
mod study;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corrector::{corrector_solve_count, CorrectorProblem, Correctors};
pub use study::{
    coarse_l2_error, fit_slope, h_convergence_study, localization_decay_study, ConvergenceRow, ConvergenceStudy,
    DecayRow, DecayStudy, FineReference, Load,
};

use crate::binio::{LeReader, LeWriter};
use crate::coeff::{restrict, Coefficient};
use crate::error::{Error, Result};
use crate::fem::{assemble_rhs, element_projection};
use crate::linalg::{sparse_solve, CsrMatrix, DenseMatrix};
use crate::mesh::{CartesianMesh, Patch};

/// Where an effective matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Reference,
    Network,
}

/// Dense `N_patch x 4` block contributed by one element.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalEffectiveMatrix {
    matrix: DenseMatrix,
}

impl LocalEffectiveMatrix {
    pub fn new(matrix: DenseMatrix) -> Self {
        assert_eq!(matrix.cols(), 4, "local effective matrices have four columns");
        Self { matrix }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn num_rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Column-major flattening, entry `(i, j)` at `j * rows + i`.
    pub fn flatten(&self) -> Vec<f64> {
        let n = self.matrix.rows();
        let mut out = vec![0.0; 4 * n];
        for j in 0..4 {
            for i in 0..n {
                out[j * n + i] = self.matrix[(i, j)];
            }
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(4) {
            return Err(Error::config(format!(
                "flattened local matrix has length {}, not a positive multiple of 4",
                flat.len()
            )));
        }
        let n = flat.len() / 4;
        Ok(Self::new(DenseMatrix::from_fn(n, 4, |i, j| flat[j * n + i])))
    }

    /// Zeroes rows of local nodes that are not interior mesh nodes and
    /// columns of boundary corners.
    pub fn mask(&mut self, patch: &Patch) {
        for (i, p) in patch.pi().iter().enumerate() {
            for j in 0..4 {
                if p.is_none() || patch.phi()[j].is_none() {
                    self.matrix[(i, j)] = 0.0;
                }
            }
        }
    }
}

/// Global effective matrix on the interior coarse nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveMatrix {
    pub matrix: CsrMatrix,
    pub layers: usize,
    pub provenance: Provenance,
}

const LODS_MAGIC: &[u8; 4] = b"LODS";
const LODS_VERSION: u32 = 1;

impl EffectiveMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Writes sorted coordinate triplets.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = LeWriter::new(BufWriter::new(File::create(path)?));
        w.bytes(LODS_MAGIC)?;
        w.u32(LODS_VERSION)?;
        w.u32(self.matrix.nrows() as u32)?;
        let triplets: Vec<_> = self.matrix.triplets().collect();
        w.u64(triplets.len() as u64)?;
        for (i, j, v) in triplets {
            w.u32(i as u32)?;
            w.u32(j as u32)?;
            w.f64s(&[v])?;
        }
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn load(path: &Path, layers: usize, provenance: Provenance) -> Result<Self> {
        let mut r = LeReader::new(BufReader::new(File::open(path)?));
        r.magic(LODS_MAGIC)?;
        let off = r.offset();
        let version = r.u32("version")?;
        if version != LODS_VERSION {
            return Err(Error::format(off, format!("unsupported version {version}")));
        }
        let m = r.u32("dimension")? as usize;
        let nnz = r.u64("entry count")?;
        let mut t = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for _ in 0..nnz {
            let off = r.offset();
            let i = r.u32("row")? as usize;
            let j = r.u32("column")? as usize;
            let mut v = [0.0];
            r.f64s(&mut v, "value")?;
            if i >= m || j >= m {
                return Err(Error::format(off, format!("entry ({i}, {j}) outside {m}x{m}")));
            }
            if prev.is_some_and(|p| p >= (i, j)) {
                return Err(Error::format(off, "entries not sorted"));
            }
            prev = Some((i, j));
            t.push((i, j, v[0]));
        }
        r.expect_eof()?;
        Ok(Self {
            matrix: CsrMatrix::from_triplets(m, m, &t),
            layers,
            provenance,
        })
    }
}

/// Coarse mesh, fine level and patch size of one LOD discretization.
#[derive(Clone, Debug)]
pub struct LodContext {
    coarse: CartesianMesh,
    eps_level: u32,
    layers: usize,
    projection: DenseMatrix,
}

impl LodContext {
    pub fn new(coarse_level: u32, eps_level: u32, layers: usize) -> Result<Self> {
        let coarse = CartesianMesh::new(coarse_level)?;
        CartesianMesh::new(eps_level)?;
        if eps_level <= coarse_level {
            return Err(Error::config(format!(
                "eps_level ({eps_level}) must exceed coarse_level ({coarse_level})"
            )));
        }
        if layers == 0 {
            return Err(Error::config("layers must be at least 1"));
        }
        let ratio = 1usize << (eps_level - coarse_level);
        Ok(Self {
            coarse,
            eps_level,
            layers,
            projection: element_projection(ratio),
        })
    }

    pub fn coarse_mesh(&self) -> &CartesianMesh {
        &self.coarse
    }

    pub fn fine_mesh(&self) -> CartesianMesh {
        CartesianMesh::new(self.eps_level).expect("validated in new")
    }

    pub fn eps_level(&self) -> u32 {
        self.eps_level
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Fine cells per coarse cell side.
    pub fn ratio(&self) -> usize {
        1 << (self.eps_level - self.coarse.level())
    }

    pub fn num_elements(&self) -> usize {
        self.coarse.num_elements()
    }

    /// Length of a restricted coefficient vector.
    pub fn input_len(&self) -> usize {
        let f = (2 * self.layers + 1) * self.ratio();
        f * f
    }

    /// Number of local coarse nodes of a patch.
    pub fn patch_nodes(&self) -> usize {
        (2 * self.layers + 2) * (2 * self.layers + 2)
    }

    /// Length of a flattened local effective matrix.
    pub fn label_len(&self) -> usize {
        4 * self.patch_nodes()
    }

    pub fn patch(&self, element: usize) -> Result<Patch> {
        Patch::new(&self.coarse, element, self.layers)
    }

    fn check_coeff(&self, coeff: &Coefficient) -> Result<()> {
        if coeff.level() != self.eps_level {
            return Err(Error::config(format!(
                "coefficient level {} does not match eps_level {}",
                coeff.level(),
                self.eps_level
            )));
        }
        Ok(())
    }

    /// Restricted coefficient of every element, in element order.
    pub fn restrictions(&self, coeff: &Coefficient) -> Result<Vec<Vec<f64>>> {
        self.check_coeff(coeff)?;
        (0..self.num_elements())
            .map(|e| restrict(coeff, &self.patch(e)?))
            .collect()
    }

    /// Corrector problem on `patch` for restricted values `local`.
    pub fn corrector_problem(&self, patch: &Patch, local: &[f64]) -> Result<CorrectorProblem> {
        if patch.mesh() != &self.coarse || patch.layers() != self.layers {
            return Err(Error::config("patch does not belong to this discretization"));
        }
        CorrectorProblem::new(patch, local, self.ratio(), &self.projection)
    }

    /// Element correctors for `element`.
    pub fn solve_correctors(&self, coeff: &Coefficient, element: usize) -> Result<Correctors> {
        self.check_coeff(coeff)?;
        let patch = self.patch(element)?;
        self.corrector_problem(&patch, &restrict(coeff, &patch)?)?.solve()
    }

    /// Local effective matrix computed from restricted values only.
    pub fn local_matrix_from_values(&self, patch: &Patch, local: &[f64]) -> Result<LocalEffectiveMatrix> {
        let problem = self.corrector_problem(patch, local)?;
        let correctors = problem.solve()?;
        Ok(LocalEffectiveMatrix::new(problem.effective_matrix(&correctors)))
    }

    pub fn local_matrix(&self, coeff: &Coefficient, element: usize) -> Result<LocalEffectiveMatrix> {
        self.check_coeff(coeff)?;
        let patch = self.patch(element)?;
        self.local_matrix_from_values(&patch, &restrict(coeff, &patch)?)
    }

    /// Local effective matrices of all elements, computed in parallel.
    pub fn local_matrices(&self, coeff: &Coefficient) -> Result<Vec<LocalEffectiveMatrix>> {
        self.check_coeff(coeff)?;
        (0..self.num_elements())
            .into_par_iter()
            .map(|e| self.local_matrix(coeff, e))
            .collect()
    }

    /// Scatters local matrices into the global effective matrix in element order.
    pub fn assemble(&self, locals: &[LocalEffectiveMatrix], provenance: Provenance) -> Result<EffectiveMatrix> {
        if locals.len() != self.num_elements() {
            return Err(Error::config(format!(
                "expected {} local matrices, got {}",
                self.num_elements(),
                locals.len()
            )));
        }
        let mut t = Vec::new();
        for (e, local) in locals.iter().enumerate() {
            if local.num_rows() != self.patch_nodes() {
                return Err(Error::config(format!(
                    "local matrix of element {e} has {} rows, expected {}",
                    local.num_rows(),
                    self.patch_nodes()
                )));
            }
            let patch = self.patch(e)?;
            for (i, pi) in patch.pi().iter().enumerate() {
                let Some(row) = *pi else { continue };
                for (j, phi) in patch.phi().iter().enumerate() {
                    if let Some(col) = *phi {
                        t.push((row, col, local.matrix()[(i, j)]));
                    }
                }
            }
        }
        let m = self.coarse.num_interior_nodes();
        Ok(EffectiveMatrix {
            matrix: CsrMatrix::from_triplets(m, m, &t),
            layers: self.layers,
            provenance,
        })
    }

    pub fn assemble_effective(&self, coeff: &Coefficient) -> Result<EffectiveMatrix> {
        let locals = self.local_matrices(coeff)?;
        self.assemble(&locals, Provenance::Reference)
    }

    /// Coarse load vector `<f, lambda_i>`, integrated on the fine level.
    pub fn load_vector<F: Fn(f64, f64) -> f64>(&self, f: F) -> Result<Vec<f64>> {
        assemble_rhs(&self.coarse, f, self.eps_level + 1)
    }

    /// Patches and element correctors of all elements.
    pub fn element_correctors(&self, coeff: &Coefficient) -> Result<Vec<(Patch, Correctors)>> {
        self.check_coeff(coeff)?;
        (0..self.num_elements())
            .into_par_iter()
            .map(|e| Ok((self.patch(e)?, self.solve_correctors(coeff, e)?)))
            .collect()
    }

    /// Fine interior nodal values of `(1 - Q) u_h` from precomputed correctors.
    pub fn corrected_from(&self, parts: &[(Patch, Correctors)], u: &[f64]) -> Result<Vec<f64>> {
        let m = self.coarse.num_interior_nodes();
        if u.len() != m {
            return Err(Error::config(format!(
                "coarse vector has length {}, expected {m}",
                u.len()
            )));
        }
        let fine = self.fine_mesh();
        let mut out = crate::fem::prolongation(&self.coarse, &fine)?.matvec(u);
        let q = self.ratio();
        for (patch, corr) in parts {
            let nside = patch.side() * q + 1;
            let (ox, oy) = (patch.origin().0 * q as i64, patch.origin().1 * q as i64);
            for j in 0..4 {
                let (Some(node), Some(vals)) = (patch.phi()[j], &corr.values[j]) else {
                    continue;
                };
                let c = u[node];
                if c == 0.0 {
                    continue;
                }
                for (k, v) in vals.iter().enumerate() {
                    if *v == 0.0 {
                        continue;
                    }
                    let (a, b) = ((k % nside) as i64, (k / nside) as i64);
                    if let Some(g) = fine.interior_index(ox + a, oy + b) {
                        out[g] -= c * v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Fine interior nodal values of the corrected function `(1 - Q) u_h`.
    pub fn reconstruct(&self, coeff: &Coefficient, u: &[f64]) -> Result<Vec<f64>> {
        let parts = self.element_correctors(coeff)?;
        self.corrected_from(&parts, u)
    }
}

/// Solves `S_A U = F`.
pub fn pg_lod_solve(s: &EffectiveMatrix, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != s.dim() {
        return Err(Error::config(format!(
            "load vector has length {}, effective matrix is {}x{}",
            f.len(),
            s.dim(),
            s.dim()
        )));
    }
    if f.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; f.len()]);
    }
    sparse_solve(&s.matrix, f)
}

/// Convenience wrapper: effective matrix for `coeff` with `layers` on `mesh`.
pub fn assemble_effective(mesh: &CartesianMesh, coeff: &Coefficient, layers: usize) -> Result<EffectiveMatrix> {
    LodContext::new(mesh.level(), coeff.level(), layers)?.assemble_effective(coeff)
}
