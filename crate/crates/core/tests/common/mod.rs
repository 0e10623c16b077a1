//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use lodc::coeff::Coefficient;
use lodc::fem::{assemble_stiffness, assemble_stiffness_for, interpolation_matrix, prolongation};
use lodc::linalg::{lu_solve, CsrMatrix, DenseMatrix};
use lodc::mesh::CartesianMesh;
use lodc::nn::{Architecture, MlpParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Global effective matrix computed from scratch on the global fine grid.
///
/// Each element corrector is found by a dense LU solve of the full block
/// system in global fine numbering, with the constraint rows taken from the
/// globally assembled quasi-interpolation. The corrections are summed into
/// global fine vectors and the matrix is `lambda_i^T K (lambda_j - Q lambda_j)`.
pub fn global_effective_oracle(coarse_level: u32, coeff: &Coefficient, layers: usize) -> DenseMatrix {
    let fine = coeff.mesh();
    let coarse = CartesianMesh::new(coarse_level).unwrap();
    let q = 1usize << (fine.level() - coarse_level);
    let n = coarse.n();
    let nf = fine.num_interior_nodes();
    let m = coarse.num_interior_nodes();
    let k = assemble_stiffness_for(&fine, coeff).unwrap();
    let c = interpolation_matrix(&fine, &coarse).unwrap().to_dense();
    let p = prolongation(&coarse, &fine).unwrap();
    let lambda: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            p.matvec(&e)
        })
        .collect();

    let mut corrections = vec![vec![0.0; nf]; m];
    for ey in 0..n {
        for ex in 0..n {
            let clip = |c: usize| (c.saturating_sub(layers), (c + layers + 1).min(n));
            let ((x0, x1), (y0, y1)) = (clip(ex), clip(ey));
            let mut dofs = Vec::new();
            for gy in y0 * q + 1..y1 * q {
                for gx in x0 * q + 1..x1 * q {
                    dofs.push(fine.interior_index(gx as i64, gy as i64).unwrap());
                }
            }
            let nd = dofs.len();
            let rows: Vec<usize> = (0..m).filter(|&r| dofs.iter().any(|&d| c[(r, d)] != 0.0)).collect();
            let nc = rows.len();
            let mut block = DenseMatrix::zeros(nd + nc, nd + nc);
            for (a, &da) in dofs.iter().enumerate() {
                for (b, &db) in dofs.iter().enumerate() {
                    block[(a, b)] = k.get(da, db);
                }
                for (r, &row) in rows.iter().enumerate() {
                    block[(nd + r, a)] = c[(row, da)];
                    block[(a, nd + r)] = c[(row, da)];
                }
            }

            let mut cell_values = vec![0.0; fine.num_elements()];
            for fy in ey * q..(ey + 1) * q {
                for fx in ex * q..(ex + 1) * q {
                    let idx = fine.element_index(fx, fy);
                    cell_values[idx] = coeff.values()[idx];
                }
            }
            let k_t = assemble_stiffness(&fine, &cell_values).unwrap();
            let corners = coarse.element_interior_nodes(coarse.element_index(ex, ey));
            for node in corners.iter().flatten() {
                let load = k_t.matvec(&lambda[*node]);
                let mut rhs = DenseMatrix::zeros(nd + nc, 1);
                for (a, &da) in dofs.iter().enumerate() {
                    rhs[(a, 0)] = load[da];
                }
                let sol = lu_solve(&block, &rhs).unwrap();
                for (a, &da) in dofs.iter().enumerate() {
                    corrections[*node][da] += sol[(a, 0)];
                }
            }
        }
    }

    let mut s = DenseMatrix::zeros(m, m);
    for j in 0..m {
        let v: Vec<f64> = lambda[j].iter().zip(&corrections[j]).map(|(a, b)| a - b).collect();
        let kv = k.matvec(&v);
        for i in 0..m {
            s[(i, j)] = lambda[i].iter().zip(&kv).map(|(a, b)| a * b).sum();
        }
    }
    s
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).max_abs()
}

pub fn dense(a: &CsrMatrix) -> DenseMatrix {
    a.to_dense()
}

/// `|A - A^T|_inf`.
pub fn asymmetry(a: &DenseMatrix) -> f64 {
    a.sub(&a.transpose()).norm_inf()
}

/// Largest relative deviation between the analytic gradient and central
/// differences of the mean loss.
///
/// Entries are compared relative to `max(|g_a| + |g_fd|, 1e-3 |g|_inf)`, so
/// entries that are zero up to rounding do not produce spurious ratios.
pub fn gradient_check(params: &MlpParameters, x: &[f64], y: &[f64], batch: usize, step: f64) -> f64 {
    let analytic = params.loss_and_grad(x, y, batch);
    let mean = |p: &MlpParameters| {
        let (s, used) = p.loss_sum(x, y, batch);
        s / used as f64
    };
    let scale = analytic.grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) * 1e-3;
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for k in 0..analytic.grad.len() {
        let orig = p.as_slice()[k];
        p.as_mut_slice()[k] = orig + step;
        let plus = mean(&p);
        p.as_mut_slice()[k] = orig - step;
        let minus = mean(&p);
        p.as_mut_slice()[k] = orig;
        let fd = (plus - minus) / (2.0 * step);
        let ga = analytic.grad[k];
        let denom = (ga.abs() + fd.abs()).max(scale).max(f64::MIN_POSITIVE);
        worst = worst.max((ga - fd).abs() / denom);
    }
    worst
}

/// A random small architecture with Glorot weights, random biases, and a
/// random batch whose labels are all nonzero.
pub fn random_gradient_case(seed: u64) -> (MlpParameters, Vec<f64>, Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(2..=5);
    let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=7)).collect();
    let arch = Architecture::new(widths).unwrap();
    let mut p = MlpParameters::init_glorot(&arch, &mut rng);
    for l in 0..arch.num_layers() {
        let (_, b) = p.layer_mut(l);
        b.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
    let batch = rng.gen_range(1..=6);
    let x: Vec<f64> = (0..batch * arch.input_len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let y: Vec<f64> = (0..batch * arch.output_len())
        .map(|_| rng.gen_range(0.5..1.5))
        .collect();
    (p, x, y, batch)
}

/// Singular values by one-sided Jacobi rotations, in no particular order.
pub fn jacobi_singular_values(a: &DenseMatrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(u, v)| u * v).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (u, v) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * u - s * v;
                    cols[q][i] = s * u + c * v;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    cols.iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}
