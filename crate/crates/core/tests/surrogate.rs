use lodc::coeff::{sample_multiscale, Coefficient, StreamSeed, UNIT_FIVE};
use lodc::lod::{LodContext, Provenance};
use lodc::nn::{Architecture, MlpParameters};
use lodc::surrogate::{
    assemble_network_matrix, cross_section, evaluate, spectral_difference, Axis, EvaluateOptions, EvaluationReport,
    LocalMatrixModel, ReferenceModel,
};
use lodc::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ms(eps: u32, sample: u64) -> Coefficient {
    sample_multiscale(eps, eps, UNIT_FIVE, &StreamSeed::new(11, 0xFF, sample)).unwrap()
}

/// Returns stored labels by element index, ignoring the inputs.
struct Lookup {
    labels: Vec<Vec<f64>>,
    input_len: usize,
}

impl LocalMatrixModel for Lookup {
    fn input_len(&self) -> usize {
        self.input_len
    }
    fn output_len(&self) -> usize {
        self.labels[0].len()
    }
    fn predict(&self, _inputs: &[f64], elements: &[usize]) -> Result<Vec<f64>> {
        Ok(elements.iter().flat_map(|&e| self.labels[e].clone()).collect())
    }
}

#[test]
fn label_lookup_reproduces_reference_matrix() {
    let ctx = LodContext::new(3, 5, 1).unwrap();
    let c = ms(5, 0);
    let labels = ctx.local_matrices(&c).unwrap().iter().map(|l| l.flatten()).collect();
    let model = Lookup {
        labels,
        input_len: ctx.input_len(),
    };
    let s = ctx.assemble_effective(&c).unwrap();
    let s_nn = assemble_network_matrix(&ctx, &c, &model).unwrap();
    assert_eq!(s_nn.provenance, Provenance::Network);
    assert_eq!(s.matrix, s_nn.matrix);
}

#[test]
fn random_network_has_reference_sparsity() {
    let ctx = LodContext::new(3, 5, 1).unwrap();
    let c = ms(5, 1);
    let arch = Architecture::new(vec![ctx.input_len(), 20, ctx.label_len()]).unwrap();
    let net = MlpParameters::init_glorot(&arch, &mut ChaCha8Rng::seed_from_u64(3));
    let s = ctx.assemble_effective(&c).unwrap();
    let s_nn = assemble_network_matrix(&ctx, &c, &net).unwrap();
    assert_eq!(s.matrix.pattern(), s_nn.matrix.pattern());
    assert!(s.matrix.sub(&s_nn.matrix).max_abs() > 0.0);
}

#[test]
fn width_mismatch_is_config_error() {
    let ctx = LodContext::new(2, 4, 1).unwrap();
    let c = ms(4, 0);
    let arch = Architecture::new(vec![ctx.input_len() + 1, ctx.label_len()]).unwrap();
    let err = assemble_network_matrix(&ctx, &c, &MlpParameters::zeros(&arch)).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn exact_model_gives_zero_errors() {
    let ctx = LodContext::new(3, 5, 2).unwrap();
    let c = ms(5, 2);
    let opts = EvaluateOptions {
        fine_reference: true,
        ..Default::default()
    };
    let r = evaluate(&ctx, &c, |_, _| 1.0, &ReferenceModel::new(&ctx), &opts).unwrap();
    assert!(r.l2_error <= 1e-12, "{}", r.l2_error);
    assert!(r.spectral_difference <= 1e-12, "{}", r.spectral_difference);
    let fine = r.fine.as_ref().unwrap();
    assert_eq!(fine.reference_error, fine.network_error);
    for cs in &r.cross_sections {
        assert_eq!(cs.coords.len(), ctx.coarse_mesh().n() + 1);
        assert_eq!(cs.reference, cs.network);
    }
}

#[test]
fn report_json_round_trip() {
    let ctx = LodContext::new(2, 4, 1).unwrap();
    let c = ms(4, 3);
    let arch = Architecture::new(vec![ctx.input_len(), ctx.label_len()]).unwrap();
    let net = MlpParameters::init_glorot(&arch, &mut ChaCha8Rng::seed_from_u64(9));
    let opts = EvaluateOptions {
        fine_reference: true,
        ..Default::default()
    };
    let r = evaluate(&ctx, &c, |x, _| x, &net, &opts).unwrap();
    assert!(r.l2_error >= 0.0 && r.spectral_difference >= 0.0);
    let back = EvaluationReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn symmetric_problem_has_equal_cross_sections() {
    let ctx = LodContext::new(3, 5, 2).unwrap();
    let c = Coefficient::constant(5, 1.0).unwrap();
    let s = ctx.assemble_effective(&c).unwrap();
    let u = lodc::lod::pg_lod_solve(&s, &ctx.load_vector(|_, _| 1.0).unwrap()).unwrap();
    let a = cross_section(ctx.coarse_mesh(), &u, Axis::X1, 0.5).unwrap();
    let b = cross_section(ctx.coarse_mesh(), &u, Axis::X2, 0.5).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} {y}");
    }
    assert!(a.values[4] > 0.0);
}

#[test]
fn sparse_and_dense_spectral_difference_agree() {
    let ctx = LodContext::new(3, 5, 1).unwrap();
    let c = ms(5, 4);
    let s = ctx.assemble_effective(&c).unwrap().matrix;
    let t = ctx.assemble_effective(&c.scaled(1.5).unwrap()).unwrap().matrix;
    let (dense, ok) = spectral_difference(&s, &t, 1e-12, 50_000).unwrap();
    assert!(ok);
    // 0.5 * |S|_2 since the matrix scales linearly with the coefficient.
    let (half, _) = spectral_difference(&s, &s.scaled(0.5), 1e-12, 50_000).unwrap();
    assert!((dense - half).abs() <= 1e-9 * dense);
}
