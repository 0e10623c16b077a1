//! Bilinear (Q1) finite elements on Cartesian meshes with homogeneous
//! Dirichlet conditions.
//!
//! Element-local quantities use the corner order (SW, SE, NW, NE). Global
//! vectors live on interior nodes in the row-major interior enumeration of
//! [`CartesianMesh`].

use crate::coeff::Coefficient;
use crate::error::{Error, Result};
use crate::linalg::{sparse_solve, CsrMatrix, DenseMatrix, LuFactor};
use crate::mesh::{CartesianMesh, CORNERS};

/// Two-point Gauss-Legendre rule on `[0, 1]`.
pub const GAUSS2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

/// Q1 shape functions on the reference square at `(x, y)`.
#[inline]
pub fn shape(x: f64, y: f64) -> [f64; 4] {
    [(1.0 - x) * (1.0 - y), x * (1.0 - y), (1.0 - x) * y, x * y]
}

/// Gradients of the Q1 shape functions on the reference square.
#[inline]
pub fn shape_grad(x: f64, y: f64) -> [[f64; 2]; 4] {
    [[-(1.0 - y), -(1.0 - x)], [1.0 - y, -x], [-y, 1.0 - x], [y, x]]
}

/// Unit-coefficient stiffness on a square cell (independent of the cell size in 2D).
pub const STIFFNESS_UNIT: [[f64; 4]; 4] = [
    [2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
    [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0],
];

/// `int a grad(phi_i) . grad(phi_j)` over a square cell.
pub fn q1_stiffness(a: f64) -> DenseMatrix {
    DenseMatrix::from_fn(4, 4, |i, j| a * STIFFNESS_UNIT[i][j])
}

/// `int phi_i phi_j` over a square cell of side `h`.
pub fn q1_mass(h: f64) -> DenseMatrix {
    let m1 = [[2.0, 1.0], [1.0, 2.0]];
    DenseMatrix::from_fn(4, 4, |i, j| {
        let (ix, iy) = CORNERS[i];
        let (jx, jy) = CORNERS[j];
        h * h * m1[ix][jx] * m1[iy][jy] / 36.0
    })
}

/// Global stiffness matrix over interior nodes for cell-wise constant values.
///
/// `cell_values` must have one entry per cell of `mesh`; zero entries are
/// allowed (they switch a cell off).
pub fn assemble_stiffness(mesh: &CartesianMesh, cell_values: &[f64]) -> Result<CsrMatrix> {
    if cell_values.len() != mesh.num_elements() {
        return Err(Error::config(format!(
            "stiffness assembly: {} cell values for {} cells",
            cell_values.len(),
            mesh.num_elements()
        )));
    }
    let mut t = Vec::with_capacity(16 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let a = cell_values[e];
        if a == 0.0 {
            continue;
        }
        let dofs = mesh.element_interior_nodes(e);
        for (i, di) in dofs.iter().enumerate() {
            let Some(di) = di else { continue };
            for (j, dj) in dofs.iter().enumerate() {
                if let Some(dj) = dj {
                    t.push((*di, *dj, a * STIFFNESS_UNIT[i][j]));
                }
            }
        }
    }
    let m = mesh.num_interior_nodes();
    Ok(CsrMatrix::from_triplets(m, m, &t))
}

/// Stiffness matrix for a coefficient living exactly on `mesh`.
pub fn assemble_stiffness_for(mesh: &CartesianMesh, coeff: &Coefficient) -> Result<CsrMatrix> {
    if coeff.level() != mesh.level() {
        return Err(Error::config(format!(
            "coefficient level {} does not match mesh level {}",
            coeff.level(),
            mesh.level()
        )));
    }
    assemble_stiffness(mesh, coeff.values())
}

/// Global mass matrix over interior nodes.
pub fn assemble_mass(mesh: &CartesianMesh) -> CsrMatrix {
    let local = q1_mass(mesh.h());
    let mut t = Vec::with_capacity(16 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let dofs = mesh.element_interior_nodes(e);
        for (i, di) in dofs.iter().enumerate() {
            let Some(di) = di else { continue };
            for (j, dj) in dofs.iter().enumerate() {
                if let Some(dj) = dj {
                    t.push((*di, *dj, local[(i, j)]));
                }
            }
        }
    }
    let m = mesh.num_interior_nodes();
    CsrMatrix::from_triplets(m, m, &t)
}

/// Load vector `(int f lambda_i)_i`, integrated with 2x2 Gauss on every cell of
/// the mesh at `quad_level` (which must not be coarser than `mesh`).
pub fn assemble_rhs<F>(mesh: &CartesianMesh, f: F, quad_level: u32) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    if quad_level < mesh.level() {
        return Err(Error::config(format!(
            "quadrature level {quad_level} coarser than mesh level {}",
            mesh.level()
        )));
    }
    let s = 1usize << (quad_level - mesh.level());
    let h = mesh.h();
    let hs = 1.0 / s as f64;
    let mut rhs = vec![0.0; mesh.num_interior_nodes()];
    for e in 0..mesh.num_elements() {
        let dofs = mesh.element_interior_nodes(e);
        if dofs.iter().all(Option::is_none) {
            continue;
        }
        let (ex, ey) = mesh.element_coords(e);
        let mut local = [0.0; 4];
        for sy in 0..s {
            for sx in 0..s {
                for &(gy, wy) in &GAUSS2 {
                    for &(gx, wx) in &GAUSS2 {
                        let xi = (sx as f64 + gx) * hs;
                        let eta = (sy as f64 + gy) * hs;
                        let fv = f((ex as f64 + xi) * h, (ey as f64 + eta) * h);
                        let w = wx * wy * hs * hs * h * h;
                        for (l, phi) in local.iter_mut().zip(shape(xi, eta)) {
                            *l += w * fv * phi;
                        }
                    }
                }
            }
        }
        for (d, l) in dofs.iter().zip(local) {
            if let Some(d) = d {
                rhs[*d] += l;
            }
        }
    }
    Ok(rhs)
}

/// Bilinear prolongation from coarse interior nodes to fine interior nodes.
pub fn prolongation(coarse: &CartesianMesh, fine: &CartesianMesh) -> Result<CsrMatrix> {
    if fine.level() < coarse.level() {
        return Err(Error::config("prolongation target is coarser than source"));
    }
    let q = 1usize << (fine.level() - coarse.level());
    let nf = fine.n() - 1;
    let mut t = Vec::new();
    for fy in 1..fine.n() {
        for fx in 1..fine.n() {
            let row = (fy - 1) * nf + (fx - 1);
            let (cx, rx) = (fx / q, fx % q);
            let (cy, ry) = (fy / q, fy % q);
            let wx = [(cx, 1.0 - rx as f64 / q as f64), (cx + 1, rx as f64 / q as f64)];
            let wy = [(cy, 1.0 - ry as f64 / q as f64), (cy + 1, ry as f64 / q as f64)];
            for &(nx, ax) in &wx {
                for &(ny, ay) in &wy {
                    let w = ax * ay;
                    if w == 0.0 {
                        continue;
                    }
                    if let Some(col) = coarse.interior_index(nx as i64, ny as i64) {
                        t.push((row, col, w));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(
        fine.num_interior_nodes(),
        coarse.num_interior_nodes(),
        &t,
    ))
}

/// Element-wise L2 projection onto Q1 for a fine Q1 function on one coarse cell.
///
/// Returns the `4 x (q+1)^2` matrix mapping fine nodal values of the cell
/// (row-major over the `(q+1) x (q+1)` fine grid) to the four corner values
/// of the projection. The matrix is independent of the cell size.
pub fn element_projection(ratio: usize) -> DenseMatrix {
    let q = ratio;
    let np = q + 1;
    let hs = 1.0 / q as f64;
    let mut b = DenseMatrix::zeros(4, np * np);
    for sy in 0..q {
        for sx in 0..q {
            for &(gy, wy) in &GAUSS2 {
                for &(gx, wx) in &GAUSS2 {
                    let w = wx * wy * hs * hs;
                    let coarse = shape((sx as f64 + gx) * hs, (sy as f64 + gy) * hs);
                    let fine = shape(gx, gy);
                    for (k, &(dx, dy)) in CORNERS.iter().enumerate() {
                        let node = (sy + dy) * np + sx + dx;
                        for c in 0..4 {
                            b[(c, node)] += w * coarse[c] * fine[k];
                        }
                    }
                }
            }
        }
    }
    LuFactor::new(&q1_mass(1.0))
        .expect("reference mass matrix is nonsingular")
        .solve(&b)
}

/// Quasi-interpolation `I_h` as a matrix from fine interior nodes to coarse
/// interior nodes: element-wise L2 projection onto Q1 followed by averaging
/// the four element values at each coarse node.
pub fn interpolation_matrix(fine: &CartesianMesh, coarse: &CartesianMesh) -> Result<CsrMatrix> {
    if fine.level() <= coarse.level() {
        return Err(Error::config(format!(
            "interpolation needs fine level {} > coarse level {}",
            fine.level(),
            coarse.level()
        )));
    }
    let q = 1usize << (fine.level() - coarse.level());
    let proj = element_projection(q);
    let np = q + 1;
    let mut t = Vec::new();
    for row in 0..coarse.num_interior_nodes() {
        let (zx, zy) = coarse.interior_coords(row);
        for (c, &(dx, dy)) in CORNERS.iter().enumerate() {
            // Cell having z as its corner c.
            let (cx, cy) = (zx - dx, zy - dy);
            for b in 0..np {
                for a in 0..np {
                    let w = 0.25 * proj[(c, b * np + a)];
                    if w == 0.0 {
                        continue;
                    }
                    let (gx, gy) = (cx * q + a, cy * q + b);
                    if let Some(col) = fine.interior_index(gx as i64, gy as i64) {
                        t.push((row, col, w));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(
        coarse.num_interior_nodes(),
        fine.num_interior_nodes(),
        &t,
    ))
}

/// Standard Galerkin solution on `mesh` for a coefficient given on the same mesh.
pub fn fem_solve<F>(mesh: &CartesianMesh, coeff: &Coefficient, f: F, quad_level: u32) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    let k = assemble_stiffness_for(mesh, coeff)?;
    let rhs = assemble_rhs(mesh, f, quad_level.max(mesh.level()))?;
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; rhs.len()]);
    }
    sparse_solve(&k, &rhs)
}

/// `sqrt(v^T M v)`.
pub fn mass_norm(mass: &CsrMatrix, v: &[f64]) -> f64 {
    let mv = mass.matvec(v);
    mv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Nodal interpolant of `g` on interior nodes.
pub fn nodal_values<F: Fn(f64, f64) -> f64>(mesh: &CartesianMesh, g: F) -> Vec<f64> {
    (0..mesh.num_interior_nodes())
        .map(|k| {
            let (ix, iy) = mesh.interior_coords(k);
            let (x, y) = mesh.node_position(ix, iy);
            g(x, y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 4x4 Gauss-Legendre rule on [0, 1].
    const GAUSS4: [(f64, f64); 4] = [
        (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
        (0.330_009_478_207_571_9, 0.326_072_577_431_273_07),
        (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
        (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
    ];

    #[test]
    fn stiffness_matches_quadrature() {
        let k = q1_stiffness(1.0);
        for i in 0..4 {
            for j in 0..4 {
                let mut q = 0.0;
                for &(y, wy) in &GAUSS4 {
                    for &(x, wx) in &GAUSS4 {
                        let g = shape_grad(x, y);
                        q += wx * wy * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    }
                }
                assert!((k[(i, j)] - q).abs() < 1e-14);
            }
            assert!((k[(i, i)] - 2.0 / 3.0).abs() < 1e-15);
            assert!(k.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
        let k5 = q1_stiffness(5.0);
        for (a, b) in k5.as_slice().iter().zip(k.as_slice()) {
            assert!((a - 5.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_matches_quadrature() {
        let h = 0.3;
        let m = q1_mass(h);
        assert!((m.as_slice().iter().sum::<f64>() - h * h).abs() < 1e-15);
        for i in 0..4 {
            assert!((m[(i, i)] - h * h / 9.0).abs() < 1e-15);
            for j in 0..4 {
                let mut q = 0.0;
                for &(y, wy) in &GAUSS4 {
                    for &(x, wx) in &GAUSS4 {
                        let s = shape(x, y);
                        q += wx * wy * s[i] * s[j] * h * h;
                    }
                }
                assert!((m[(i, j)] - q).abs() < 1e-15);
                assert_eq!(m[(i, j)], m[(j, i)]);
                assert!(m[(i, j)] > 0.0);
            }
        }
    }

    #[test]
    fn single_interior_node() {
        let mesh = CartesianMesh::new(1).unwrap();
        let k = assemble_stiffness(&mesh, &[1.0; 4]).unwrap();
        assert_eq!(k.nrows(), 1);
        assert!((k.get(0, 0) - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn assembly_matches_dense_triple_loop() {
        let mesh = CartesianMesh::new(3).unwrap();
        let vals: Vec<f64> = (0..64).map(|i| 1.0 + (i % 5) as f64 * 0.7).collect();
        let k = assemble_stiffness(&mesh, &vals).unwrap();
        let m = mesh.num_interior_nodes();
        let mut dense = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                for e in 0..mesh.num_elements() {
                    let nodes = mesh.element_interior_nodes(e);
                    for a in 0..4 {
                        for b in 0..4 {
                            if nodes[a] == Some(i) && nodes[b] == Some(j) {
                                dense[(i, j)] += vals[e] * STIFFNESS_UNIT[a][b];
                            }
                        }
                    }
                }
            }
        }
        assert!(k.to_dense().sub(&dense).max_abs() < 1e-14);
        let kt = k.transpose();
        assert!(k.sub(&kt).max_abs() < 1e-15);
        assert!(k.diagonal().iter().all(|&d| d > 0.0));
        let k3 = assemble_stiffness(&mesh, &vals.iter().map(|v| 3.0 * v).collect::<Vec<_>>()).unwrap();
        assert!(k3.sub(&k.scaled(3.0)).max_abs() < 1e-14);
    }

    #[test]
    fn level_mismatch_rejected() {
        let mesh = CartesianMesh::new(3).unwrap();
        let c = Coefficient::constant(4, 1.0).unwrap();
        assert!(assemble_stiffness_for(&mesh, &c).unwrap_err().is_config());
    }

    #[test]
    fn rhs_of_constant() {
        let mesh = CartesianMesh::new(4).unwrap();
        let f = assemble_rhs(&mesh, |_, _| 1.0, 4).unwrap();
        let h2 = mesh.h() * mesh.h();
        assert!(f.iter().all(|v| (v - h2).abs() < 1e-15));
        let z = assemble_rhs(&mesh, |_, _| 0.0, 6).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_matches_refined_quadrature() {
        use std::f64::consts::PI;
        let mesh = CartesianMesh::new(5).unwrap();
        let f = |x: f64, _y: f64| (2.0 * PI * x).cos();
        let rhs = assemble_rhs(&mesh, f, 8).unwrap();
        // Oracle: 4x4 Gauss on a 16x16 subdivision of every cell.
        let h = mesh.h();
        let s = 16;
        let mut oracle = vec![0.0; mesh.num_interior_nodes()];
        for e in 0..mesh.num_elements() {
            let (ex, ey) = mesh.element_coords(e);
            let dofs = mesh.element_interior_nodes(e);
            for sy in 0..s {
                for sx in 0..s {
                    for &(gy, wy) in &GAUSS4 {
                        for &(gx, wx) in &GAUSS4 {
                            let xi = (sx as f64 + gx) / s as f64;
                            let eta = (sy as f64 + gy) / s as f64;
                            let w = wx * wy * h * h / (s * s) as f64;
                            let fv = f((ex as f64 + xi) * h, (ey as f64 + eta) * h);
                            for (d, phi) in dofs.iter().zip(shape(xi, eta)) {
                                if let Some(d) = d {
                                    oracle[*d] += w * fv * phi;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (a, b) in rhs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn projection_reproduces_bilinears() {
        let q = 4;
        let p = element_projection(q);
        let np = q + 1;
        for c in 0..4 {
            let (dx, dy) = CORNERS[c];
            let vals: Vec<f64> = (0..np * np)
                .map(|k| {
                    let (a, b) = (k % np, k / np);
                    shape(a as f64 / q as f64, b as f64 / q as f64)[c]
                })
                .collect();
            let out = p.matvec(&vals);
            for (k, o) in out.iter().enumerate() {
                let expected = if CORNERS[k] == (dx, dy) { 1.0 } else { 0.0 };
                assert!((o - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn interpolation_is_projective() {
        let coarse = CartesianMesh::new(2).unwrap();
        let fine = CartesianMesh::new(4).unwrap();
        let c = interpolation_matrix(&fine, &coarse).unwrap();
        let p = prolongation(&coarse, &fine).unwrap();
        let cp = c.to_dense().matmul(&p.to_dense());
        let eye = DenseMatrix::identity(coarse.num_interior_nodes());
        assert!(cp.sub(&eye).max_abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_bilinear_function() {
        let coarse = CartesianMesh::new(3).unwrap();
        let fine = CartesianMesh::new(5).unwrap();
        let c = interpolation_matrix(&fine, &coarse).unwrap();
        // x(1-x) y(1-y) restricted to V_h: coarse nodal interpolant, prolongated.
        let g = |x: f64, y: f64| x * (1.0 - x) * y * (1.0 - y);
        let coarse_vals = nodal_values(&coarse, g);
        let fine_vals = prolongation(&coarse, &fine).unwrap().matvec(&coarse_vals);
        let back = c.matvec(&fine_vals);
        for (a, b) in back.iter().zip(&coarse_vals) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_of_ones_deviates_only_near_boundary() {
        let coarse = CartesianMesh::new(3).unwrap();
        let fine = CartesianMesh::new(5).unwrap();
        let c = interpolation_matrix(&fine, &coarse).unwrap();
        let ones = vec![1.0; fine.num_interior_nodes()];
        let out = c.matvec(&ones);
        for (k, v) in out.iter().enumerate() {
            let (x, y) = coarse.interior_coords(k);
            let near = x == 1 || y == 1 || x == coarse.n() - 1 || y == coarse.n() - 1;
            if near {
                assert!((v - 1.0).abs() > 1e-3);
            } else {
                assert!((v - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn interpolation_row_support() {
        let coarse = CartesianMesh::new(2).unwrap();
        let fine = CartesianMesh::new(4).unwrap();
        let c = interpolation_matrix(&fine, &coarse).unwrap();
        for row in 0..coarse.num_interior_nodes() {
            let (zx, zy) = coarse.interior_coords(row);
            for &col in c.row(row).0 {
                let (fx, fy) = fine.interior_coords(col);
                assert!(fx.abs_diff(zx * 4) <= 4 && fy.abs_diff(zy * 4) <= 4);
            }
        }
    }

    #[test]
    fn manufactured_solution_converges_at_order_two() {
        use std::f64::consts::PI;
        let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let f = |x: f64, y: f64| 2.0 * PI * PI * exact(x, y);
        let mut errs = Vec::new();
        for level in 3..=6 {
            let mesh = CartesianMesh::new(level).unwrap();
            let a = Coefficient::constant(level, 1.0).unwrap();
            let u = fem_solve(&mesh, &a, f, 8).unwrap();
            // Error against the interpolant measured on a level-8 mesh.
            let fine = CartesianMesh::new(8).unwrap();
            let uf = prolongation(&mesh, &fine).unwrap().matvec(&u);
            let ex = nodal_values(&fine, exact);
            let d: Vec<f64> = uf.iter().zip(&ex).map(|(a, b)| a - b).collect();
            errs.push(mass_norm(&assemble_mass(&fine), &d));
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.8, "rate {rate} from {errs:?}");
        }
    }

    #[test]
    fn solution_scales_inversely() {
        let mesh = CartesianMesh::new(4).unwrap();
        let a1 = Coefficient::constant(4, 1.0).unwrap();
        let a4 = Coefficient::constant(4, 4.0).unwrap();
        let u1 = fem_solve(&mesh, &a1, |_, _| 1.0, 4).unwrap();
        let u4 = fem_solve(&mesh, &a4, |_, _| 1.0, 4).unwrap();
        for (a, b) in u1.iter().zip(&u4) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
        let z = fem_solve(&mesh, &a1, |_, _| 0.0, 4).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }
}
