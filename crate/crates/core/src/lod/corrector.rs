//! Patch-local corrector problems and local effective matrices.
//!
//! Everything here works on the fine grid of one patch. Fine nodes are
//! numbered row-major over the `(F + 1) x (F + 1)` patch grid, where
//! `F = (2 layers + 1) * ratio`. Free (unknown) nodes are the ones strictly
//! inside the rectangle of interior patch cells; all others carry the
//! homogeneous Dirichlet condition.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::fem::{shape, STIFFNESS_UNIT};
use crate::linalg::{norm2, BandLu, BandMatrix, DenseMatrix, LuFactor};
use crate::mesh::{Patch, CORNERS};

static CORRECTOR_SOLVES: AtomicUsize = AtomicUsize::new(0);

/// Number of patch corrector solves performed by this process so far.
pub fn corrector_solve_count() -> usize {
    CORRECTOR_SOLVES.load(Ordering::SeqCst)
}

/// The constrained fine-scale problem on one patch.
#[derive(Clone, Debug)]
pub struct CorrectorProblem {
    patch: Patch,
    ratio: usize,
    values: Vec<f64>,
    /// Inclusive range of free fine node coordinates per axis.
    free_x: (usize, usize),
    free_y: (usize, usize),
    stiffness: BandMatrix,
    constraints: Vec<Vec<(usize, f64)>>,
    /// `K_T lambda_j` over all patch fine nodes, `None` for boundary corners.
    element_loads: [Option<Vec<f64>>; 4],
}

/// Element correctors of the four corner basis functions.
#[derive(Clone, Debug)]
pub struct Correctors {
    /// Corrector values on all patch fine nodes.
    pub values: [Option<Vec<f64>>; 4],
    /// Lagrange multipliers of the constraint rows.
    pub multipliers: [Option<Vec<f64>>; 4],
}

impl CorrectorProblem {
    /// Sets up the problem from the patch's fine cell values
    /// (row-major, zeros on exterior cells).
    ///
    /// `projection` is the `4 x (ratio + 1)^2` element projection of the
    /// quasi-interpolation.
    pub fn new(patch: &Patch, values: &[f64], ratio: usize, projection: &DenseMatrix) -> Result<Self> {
        let q = ratio;
        let s = patch.side();
        let fside = s * q;
        if values.len() != fside * fside {
            return Err(Error::config(format!(
                "patch values: expected {} entries, got {}",
                fside * fside,
                values.len()
            )));
        }
        if projection.rows() != 4 || projection.cols() != (q + 1) * (q + 1) {
            return Err(Error::config("projection does not match the refinement ratio"));
        }
        let ((x0, x1), (y0, y1)) = patch.interior_range();
        let free_x = (x0 * q + 1, x1 * q - 1);
        let free_y = (y0 * q + 1, y1 * q - 1);
        let nfx = free_x.1 + 1 - free_x.0;
        let nfy = free_y.1 + 1 - free_y.0;

        let mut prob = Self {
            patch: patch.clone(),
            ratio,
            values: values.to_vec(),
            free_x,
            free_y,
            stiffness: BandMatrix::zeros(nfx * nfy, nfx + 1, nfx + 1),
            constraints: Vec::new(),
            element_loads: [None, None, None, None],
        };

        // Stiffness over free nodes.
        for fy in y0 * q..y1 * q {
            for fx in x0 * q..x1 * q {
                let v = prob.values[fy * fside + fx];
                if v == 0.0 {
                    continue;
                }
                let dofs = CORNERS.map(|(dx, dy)| prob.free_index(fx + dx, fy + dy));
                for (a, da) in dofs.iter().enumerate() {
                    let Some(da) = *da else { continue };
                    for (b, db) in dofs.iter().enumerate() {
                        if let Some(db) = *db {
                            prob.stiffness.add(da, db, v * STIFFNESS_UNIT[a][b]);
                        }
                    }
                }
            }
        }

        // Quasi-interpolation rows of every coarse interior node of the patch.
        let np = q + 1;
        for ny in 0..=s {
            for nx in 0..=s {
                if patch.pi()[ny * (s + 1) + nx].is_none() {
                    continue;
                }
                let mut row = BTreeMap::new();
                for (c, &(dx, dy)) in CORNERS.iter().enumerate() {
                    if nx < dx || ny < dy || nx - dx >= s || ny - dy >= s {
                        continue;
                    }
                    let (cx, cy) = (nx - dx, ny - dy);
                    for b in 0..np {
                        for a in 0..np {
                            let w = 0.25 * projection[(c, b * np + a)];
                            if w == 0.0 {
                                continue;
                            }
                            if let Some(k) = prob.free_index(cx * q + a, cy * q + b) {
                                *row.entry(k).or_insert(0.0) += w;
                            }
                        }
                    }
                }
                let row: Vec<(usize, f64)> = row.into_iter().filter(|&(_, w)| w != 0.0).collect();
                if !row.is_empty() {
                    prob.constraints.push(row);
                }
            }
        }

        // Loads of the center element's corner basis functions.
        let l = patch.layers();
        for j in 0..4 {
            if patch.phi()[j].is_none() {
                continue;
            }
            let mut load = vec![0.0; (fside + 1) * (fside + 1)];
            for sy in 0..q {
                for sx in 0..q {
                    let (fx, fy) = (l * q + sx, l * q + sy);
                    let v = prob.values[fy * fside + fx];
                    let lam =
                        CORNERS.map(|(dx, dy)| shape((sx + dx) as f64 / q as f64, (sy + dy) as f64 / q as f64)[j]);
                    for (a, &(dx, dy)) in CORNERS.iter().enumerate() {
                        let t: f64 = (0..4).map(|b| STIFFNESS_UNIT[a][b] * lam[b]).sum();
                        load[(fy + dy) * (fside + 1) + fx + dx] += v * t;
                    }
                }
            }
            prob.element_loads[j] = Some(load);
        }
        Ok(prob)
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    /// Fine nodes per patch side.
    pub fn fine_nodes_per_side(&self) -> usize {
        self.patch.side() * self.ratio + 1
    }

    pub fn num_free(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Free-node index of patch fine node `(a, b)`.
    pub fn free_index(&self, a: usize, b: usize) -> Option<usize> {
        if a < self.free_x.0 || a > self.free_x.1 || b < self.free_y.0 || b > self.free_y.1 {
            return None;
        }
        let nfx = self.free_x.1 + 1 - self.free_x.0;
        Some((b - self.free_y.0) * nfx + a - self.free_x.0)
    }

    /// Free-node values gathered from a full patch-node vector.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        let side = self.fine_nodes_per_side();
        let mut out = vec![0.0; self.num_free()];
        for b in self.free_y.0..=self.free_y.1 {
            for a in self.free_x.0..=self.free_x.1 {
                out[self.free_index(a, b).unwrap()] = full[b * side + a];
            }
        }
        out
    }

    /// Full patch-node vector with zeros on Dirichlet nodes.
    pub fn scatter(&self, free: &[f64]) -> Vec<f64> {
        let side = self.fine_nodes_per_side();
        let mut out = vec![0.0; side * side];
        for b in self.free_y.0..=self.free_y.1 {
            for a in self.free_x.0..=self.free_x.1 {
                out[b * side + a] = free[self.free_index(a, b).unwrap()];
            }
        }
        out
    }

    /// `K x` on free nodes.
    pub fn stiffness_apply(&self, x: &[f64]) -> Vec<f64> {
        self.gather(&self.patch_stiffness_apply(&self.scatter(x)))
    }

    /// Stiffness of all interior patch cells applied to a full patch-node vector.
    pub fn patch_stiffness_apply(&self, x: &[f64]) -> Vec<f64> {
        let fside = self.patch.side() * self.ratio;
        let nside = fside + 1;
        let mut y = vec![0.0; x.len()];
        for fy in 0..fside {
            for fx in 0..fside {
                let v = self.values[fy * fside + fx];
                if v == 0.0 {
                    continue;
                }
                let nodes = CORNERS.map(|(dx, dy)| (fy + dy) * nside + fx + dx);
                for a in 0..4 {
                    let t: f64 = (0..4).map(|b| STIFFNESS_UNIT[a][b] * x[nodes[b]]).sum();
                    y[nodes[a]] += v * t;
                }
            }
        }
        y
    }

    /// `C x` on free nodes.
    pub fn constraint_apply(&self, x: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * x[k]).sum())
            .collect()
    }

    /// `C^T mu`.
    pub fn constraint_apply_transpose(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_free()];
        for (row, m) in self.constraints.iter().zip(mu) {
            for &(k, w) in row {
                out[k] += w * m;
            }
        }
        out
    }

    /// Load of corner `j` restricted to the free nodes.
    pub fn load(&self, j: usize) -> Option<Vec<f64>> {
        self.element_loads[j].as_ref().map(|l| self.gather(l))
    }

    /// Dense copy of the free-node stiffness matrix.
    pub fn stiffness_dense(&self) -> DenseMatrix {
        let n = self.num_free();
        DenseMatrix::from_fn(n, n, |i, j| self.stiffness.get(i, j))
    }

    /// Dense copy of the constraint matrix.
    pub fn constraints_dense(&self) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(self.num_constraints(), self.num_free());
        for (i, row) in self.constraints.iter().enumerate() {
            for &(k, w) in row {
                c[(i, k)] = w;
            }
        }
        c
    }

    /// Solves `[K C^T; C 0] [x; mu] = [r; 0]` for each right-hand side.
    ///
    /// Uses the Schur complement of the banded stiffness factorization.
    pub fn solve_saddle(&self, rhs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let n = self.num_free();
        let nc = self.num_constraints();
        let lu: BandLu = self.stiffness.clone().factorize().map_err(|e| Error::SolverFailure {
            reason: format!("patch stiffness factorization failed: {e}"),
            residual: f64::NAN,
        })?;
        let mut kc = Vec::with_capacity(nc);
        for row in &self.constraints {
            let mut col = vec![0.0; n];
            for &(k, w) in row {
                col[k] = w;
            }
            lu.solve_in_place(&mut col);
            kc.push(col);
        }
        let mut schur = DenseMatrix::zeros(nc, nc);
        for (i, row) in self.constraints.iter().enumerate() {
            for (k, col) in kc.iter().enumerate() {
                schur[(i, k)] = row.iter().map(|&(p, w)| w * col[p]).sum();
            }
        }
        let slu = if nc > 0 {
            Some(LuFactor::new(&schur).map_err(|e| Error::SolverFailure {
                reason: format!("constraint Schur complement is singular: {e}"),
                residual: f64::NAN,
            })?)
        } else {
            None
        };

        let mut out = Vec::with_capacity(rhs.len());
        for r in rhs {
            if r.len() != n {
                return Err(Error::config(format!(
                    "corrector load has length {}, expected {n}",
                    r.len()
                )));
            }
            let mut y = r.clone();
            lu.solve_in_place(&mut y);
            let mut mu = self.constraint_apply(&y);
            if let Some(slu) = &slu {
                slu.solve_in_place(&mut mu);
            }
            for (m, col) in mu.iter().zip(&kc) {
                for (yi, ci) in y.iter_mut().zip(col) {
                    *yi -= m * ci;
                }
            }
            out.push((y, mu));
        }
        Ok(out)
    }

    /// Element correctors of the center element's corner basis functions.
    pub fn solve(&self) -> Result<Correctors> {
        CORRECTOR_SOLVES.fetch_add(1, Ordering::SeqCst);
        let corners: Vec<usize> = (0..4).filter(|&j| self.element_loads[j].is_some()).collect();
        let loads: Vec<Vec<f64>> = corners.iter().map(|&j| self.load(j).unwrap()).collect();
        let sols = self.solve_saddle(&loads)?;
        let mut values = [None, None, None, None];
        let mut multipliers = [None, None, None, None];
        for (&j, (x, mu)) in corners.iter().zip(sols) {
            values[j] = Some(self.scatter(&x));
            multipliers[j] = Some(mu);
        }
        let correctors = Correctors { values, multipliers };
        let (cres, eres) = self.residuals(&correctors);
        if !(cres <= 1e-9 && eres <= 1e-9) {
            return Err(Error::SolverFailure {
                reason: format!(
                    "corrector residuals too large for element {}: constraint {cres:e}",
                    self.patch.element()
                ),
                residual: eres,
            });
        }
        Ok(correctors)
    }

    /// Largest constraint residual `|C q|_inf` and largest relative residual
    /// of the first block over all corners.
    pub fn residuals(&self, c: &Correctors) -> (f64, f64) {
        let mut cres: f64 = 0.0;
        let mut eres: f64 = 0.0;
        for j in 0..4 {
            let (Some(q), Some(mu), Some(r)) = (&c.values[j], &c.multipliers[j], self.load(j)) else {
                continue;
            };
            let x = self.gather(q);
            let cx = self.constraint_apply(&x);
            cres = cres.max(cx.iter().fold(0.0, |m, v| m.max(v.abs())));
            let kx = self.stiffness_apply(&x);
            let ct = self.constraint_apply_transpose(mu);
            let res: Vec<f64> = kx.iter().zip(&ct).zip(&r).map(|((a, b), c)| a + b - c).collect();
            let rn = norm2(&r);
            eres = eres.max(if rn > 0.0 { norm2(&res) / rn } else { norm2(&res) });
        }
        (cres, eres)
    }

    /// Local effective matrix of the center element.
    ///
    /// Entry `(i, j)` is `a_T(lambda_j, lambda_i) - a_patch(Q_T lambda_j, lambda_i)`
    /// for local coarse node `i` and corner `j`; rows of nodes off the
    /// interior mesh and columns of boundary corners are zero.
    pub fn effective_matrix(&self, correctors: &Correctors) -> DenseMatrix {
        let q = self.ratio;
        let s = self.patch.side();
        let nside = s * q + 1;
        let mut out = DenseMatrix::zeros(self.patch.num_nodes(), 4);
        for j in 0..4 {
            let (Some(load), Some(corr)) = (&self.element_loads[j], &correctors.values[j]) else {
                continue;
            };
            let kq = self.patch_stiffness_apply(corr);
            let w: Vec<f64> = load.iter().zip(&kq).map(|(a, b)| a - b).collect();
            for ny in 0..=s {
                for nx in 0..=s {
                    let i = ny * (s + 1) + nx;
                    if self.patch.pi()[i].is_none() {
                        continue;
                    }
                    let (cx, cy) = (nx * q, ny * q);
                    let mut acc = 0.0;
                    for b in cy.saturating_sub(q)..=(cy + q).min(nside - 1) {
                        let hy = 1.0 - (b as f64 - cy as f64).abs() / q as f64;
                        for a in cx.saturating_sub(q)..=(cx + q).min(nside - 1) {
                            let hx = 1.0 - (a as f64 - cx as f64).abs() / q as f64;
                            acc += hx * hy * w[b * nside + a];
                        }
                    }
                    out[(i, j)] = acc;
                }
            }
        }
        out
    }
}
