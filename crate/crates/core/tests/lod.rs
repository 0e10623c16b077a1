mod common;

use common::{asymmetry, global_effective_oracle};
use lodc::coeff::{restrict, sample_multiscale, Coefficient, StreamSeed, UNIT_FIVE};
use lodc::fem::{assemble_mass, fem_solve, mass_norm};
use lodc::linalg::{lu_solve, DenseMatrix};
use lodc::lod::{coarse_l2_error, localization_decay_study, pg_lod_solve, FineReference, Load, LodContext};
use lodc::mesh::CartesianMesh;
use proptest::prelude::*;

fn ms(eps: u32, sample: u64) -> Coefficient {
    sample_multiscale(eps, eps, UNIT_FIVE, &StreamSeed::new(7, 0xFF, sample)).unwrap()
}

#[test]
fn oracle_level_two_unit_coefficient() {
    let c = Coefficient::constant(4, 1.0).unwrap();
    let ctx = LodContext::new(2, 4, 1).unwrap();
    let s = ctx.assemble_effective(&c).unwrap().matrix.to_dense();
    let o = global_effective_oracle(2, &c, 1);
    assert!(s.sub(&o).max_abs() <= 1e-10, "{}", s.sub(&o).max_abs());
}

#[test]
fn oracle_random_coefficients() {
    for (sample, layers) in [(0, 1), (1, 2)] {
        let c = ms(5, sample);
        let ctx = LodContext::new(3, 5, layers).unwrap();
        let s = ctx.assemble_effective(&c).unwrap().matrix.to_dense();
        let o = global_effective_oracle(3, &c, layers);
        let d = s.sub(&o).max_abs();
        assert!(d <= 1e-10, "layers {layers}: {d:e}");
    }
}

#[test]
fn correctors_satisfy_constraints() {
    let c = ms(5, 3);
    let ctx = LodContext::new(3, 5, 2).unwrap();
    for e in [0, 9, 27, 63] {
        let patch = ctx.patch(e).unwrap();
        let prob = ctx.corrector_problem(&patch, &restrict(&c, &patch).unwrap()).unwrap();
        let corr = prob.solve().unwrap();
        let (cres, eres) = prob.residuals(&corr);
        assert!(cres <= 1e-9 && eres <= 1e-9, "{cres:e} {eres:e}");
    }
}

#[test]
fn saddle_solve_matches_dense_block_system() {
    let c = ms(5, 4);
    let ctx = LodContext::new(3, 5, 1).unwrap();
    let patch = ctx.patch(10).unwrap();
    let prob = ctx.corrector_problem(&patch, &restrict(&c, &patch).unwrap()).unwrap();
    let (n, nc) = (prob.num_free(), prob.num_constraints());
    let k = prob.stiffness_dense();
    let cm = prob.constraints_dense();
    let mut block = DenseMatrix::zeros(n + nc, n + nc);
    for i in 0..n {
        for j in 0..n {
            block[(i, j)] = k[(i, j)];
        }
        for r in 0..nc {
            block[(n + r, i)] = cm[(r, i)];
            block[(i, n + r)] = cm[(r, i)];
        }
    }
    let load = prob.load(0).unwrap();
    let mut rhs = DenseMatrix::zeros(n + nc, 1);
    for i in 0..n {
        rhs[(i, 0)] = load[i];
    }
    let x = lu_solve(&block, &rhs).unwrap();
    let ours = prob.solve_saddle(&[load]).unwrap();
    for i in 0..n {
        assert!((ours[0].0[i] - x[(i, 0)]).abs() < 1e-12);
    }
}

#[test]
fn zero_load_gives_zero_corrector() {
    let c = ms(5, 5);
    let ctx = LodContext::new(3, 5, 1).unwrap();
    let patch = ctx.patch(20).unwrap();
    let prob = ctx.corrector_problem(&patch, &restrict(&c, &patch).unwrap()).unwrap();
    let sol = prob.solve_saddle(&[vec![0.0; prob.num_free()]]).unwrap();
    assert!(sol[0].0.iter().all(|&v| v == 0.0));
}

#[test]
fn opposite_corner_correctors_are_mirror_images() {
    let c = Coefficient::constant(6, 1.0).unwrap();
    let ctx = LodContext::new(4, 6, 2).unwrap();
    let mesh = ctx.coarse_mesh();
    let e = mesh.element_index(7, 8);
    let corr = ctx.solve_correctors(&c, e).unwrap();
    let side = ctx.patch(e).unwrap().side() * ctx.ratio() + 1;
    let sw = corr.values[0].as_ref().unwrap();
    let ne = corr.values[3].as_ref().unwrap();
    let scale = sw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for b in 0..side {
        for a in 0..side {
            let mirrored = ne[(side - 1 - b) * side + side - 1 - a];
            assert!((sw[b * side + a] - mirrored).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn full_scale_local_matrix_shape() {
    let c = ms(8, 0);
    let ctx = LodContext::new(5, 8, 2).unwrap();
    let e = ctx.coarse_mesh().element_index(12, 20);
    let s = ctx.local_matrix(&c, e).unwrap();
    assert_eq!((s.matrix().rows(), s.matrix().cols()), (36, 4));
    assert!(s.matrix().as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn column_sums_vanish_on_interior_patch() {
    let c = ms(6, 1);
    let ctx = LodContext::new(4, 6, 1).unwrap();
    let e = ctx.coarse_mesh().element_index(8, 8);
    assert!(ctx.patch(e).unwrap().pi().iter().all(|p| p.is_some()));
    let s = ctx.local_matrix(&c, e).unwrap();
    let scale = s.matrix().max_abs();
    for j in 0..4 {
        let sum: f64 = (0..s.num_rows()).map(|i| s.matrix()[(i, j)]).sum();
        assert!(sum.abs() <= 1e-12 * scale, "column {j}: {sum:e}");
    }
}

#[test]
fn exterior_rows_are_zero() {
    let c = ms(5, 2);
    let ctx = LodContext::new(3, 5, 2).unwrap();
    for e in 0..ctx.num_elements() {
        let patch = ctx.patch(e).unwrap();
        let s = ctx.local_matrix(&c, e).unwrap();
        for (i, p) in patch.pi().iter().enumerate() {
            if p.is_none() {
                assert!((0..4).all(|j| s.matrix()[(i, j)] == 0.0));
            }
        }
    }
}

#[test]
fn sparsity_limited_to_patch_reach() {
    let c = ms(5, 6);
    let layers = 1;
    let ctx = LodContext::new(3, 5, layers).unwrap();
    let s = ctx.assemble_effective(&c).unwrap();
    let mesh = ctx.coarse_mesh();
    for (i, j, v) in s.matrix.triplets() {
        let (ix, iy) = mesh.interior_coords(i);
        let (jx, jy) = mesh.interior_coords(j);
        let far = ix.abs_diff(jx) > layers + 1 || iy.abs_diff(jy) > layers + 1;
        assert!(!far || v == 0.0);
        assert!(!far, "stored entry outside patch reach");
    }
}

#[test]
fn symmetric_when_patches_cover_domain() {
    let c = ms(5, 8);
    let ctx = LodContext::new(3, 5, 8).unwrap();
    let s = ctx.assemble_effective(&c).unwrap().matrix.to_dense();
    assert!(asymmetry(&s) <= 1e-9 * s.norm_inf());
}

#[test]
fn zero_load_zero_solution() {
    let c = ms(5, 0);
    let ctx = LodContext::new(3, 5, 1).unwrap();
    let s = ctx.assemble_effective(&c).unwrap();
    let u = pg_lod_solve(&s, &vec![0.0; s.dim()]).unwrap();
    assert!(u.iter().all(|&v| v == 0.0));
}

#[test]
fn unit_coefficient_close_to_coarse_fem() {
    use std::f64::consts::PI;
    let f = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let c = Coefficient::constant(6, 1.0).unwrap();
    let ctx = LodContext::new(4, 6, 2).unwrap();
    let u = pg_lod_solve(&ctx.assemble_effective(&c).unwrap(), &ctx.load_vector(f).unwrap()).unwrap();
    let mesh = CartesianMesh::new(4).unwrap();
    let fem = fem_solve(&mesh, &Coefficient::constant(4, 1.0).unwrap(), f, 7).unwrap();
    let m = assemble_mass(&mesh);
    let d: Vec<f64> = u.iter().zip(&fem).map(|(a, b)| a - b).collect();
    assert!(mass_norm(&m, &d) < 0.1 * mass_norm(&m, &fem));
}

#[test]
fn error_decreases_with_patch_size() {
    let c = ms(5, 9);
    let study = localization_decay_study(3, &c, Load::Function(&|_, _| 1.0), &[1, 2, 3]).unwrap();
    let e: Vec<f64> = study.rows.iter().map(|r| r.corrected_error).collect();
    assert!(e[2] <= e[0], "{e:?}");
}

#[test]
fn dual_load_isolates_localization_error() {
    let c = ms(5, 10);
    let ones = vec![1.0; 49];
    let study = localization_decay_study(3, &c, Load::Dual(&ones), &[1, 2, 3]).unwrap();
    let e: Vec<f64> = study.rows.iter().map(|r| r.corrected_error).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    assert!(study.corrected_slope < -1.0, "{}", study.corrected_slope);
}

#[test]
fn reconstruction_beats_coarse_solution() {
    let c = ms(6, 2);
    let ctx = LodContext::new(3, 6, 3).unwrap();
    let f = |_: f64, _: f64| 1.0;
    let reference = FineReference::new(&c, f).unwrap();
    let u = pg_lod_solve(&ctx.assemble_effective(&c).unwrap(), &ctx.load_vector(f).unwrap()).unwrap();
    let coarse = coarse_l2_error(&reference, ctx.coarse_mesh(), &u).unwrap();
    let corrected = reference.relative_error(&ctx.reconstruct(&c, &u).unwrap());
    assert!(corrected < coarse, "{corrected:e} vs {coarse:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn homogeneous_in_coefficient(seed in 0u64..1000, scale in 0.5f64..8.0) {
        let c = sample_multiscale(4, 4, UNIT_FIVE, &StreamSeed::new(seed, 0xFF, 0)).unwrap();
        let ctx = LodContext::new(2, 4, 1).unwrap();
        let a = ctx.assemble_effective(&c).unwrap().matrix.to_dense();
        let mut b = ctx.assemble_effective(&c.scaled(scale).unwrap()).unwrap().matrix.to_dense();
        b.scale(1.0 / scale);
        prop_assert!(a.sub(&b).max_abs() <= 1e-10 * a.max_abs());
    }
}
