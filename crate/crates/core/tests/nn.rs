mod common;

use common::{gradient_check, random_gradient_case};
use lodc::nn::{default_architecture, AdamState, Architecture, MlpParameters};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(widths: Vec<usize>, seed: u64) -> MlpParameters {
    MlpParameters::init_glorot(
        &Architecture::new(widths).unwrap(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn gradient_matches_finite_differences_small_net() {
    let p = random_net(vec![5, 4, 3], 1);
    let x = random_vec(5 * 3, 2);
    let y: Vec<f64> = random_vec(3 * 3, 3).iter().map(|v| v + 2.0).collect();
    let err = gradient_check(&p, &x, &y, 3, 1e-6);
    assert!(err <= 1e-6, "relative error {err:e}");
}

#[test]
fn gradient_matches_finite_differences_random_architectures() {
    for seed in 100..110 {
        let (p, x, y, batch) = random_gradient_case(seed);
        let err = gradient_check(&p, &x, &y, batch, 1e-6);
        assert!(err <= 1e-5, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn zero_label_pairs_do_not_contribute() {
    let p = random_net(vec![3, 4, 2], 5);
    let x = random_vec(6, 6);
    let y = vec![1.0, 2.0, 0.0, 0.0];
    let both = p.loss_and_grad(&x, &y, 2);
    let first = p.loss_and_grad(&x[..3], &y[..2], 1);
    assert_eq!(both.used, 1);
    assert_eq!(both.skipped, 1);
    assert_eq!(both.loss, first.loss);
    assert_eq!(both.grad, first.grad);
}

#[test]
fn loss_is_invariant_under_pair_order() {
    let p = random_net(vec![4, 6, 3], 7);
    let x = random_vec(4 * 5, 8);
    let y = random_vec(3 * 5, 9);
    let a = p.loss_and_grad(&x, &y, 5);
    let perm = [3, 0, 4, 2, 1];
    let xp: Vec<f64> = perm.iter().flat_map(|&k| x[k * 4..(k + 1) * 4].to_vec()).collect();
    let yp: Vec<f64> = perm.iter().flat_map(|&k| y[k * 3..(k + 1) * 3].to_vec()).collect();
    let b = p.loss_and_grad(&xp, &yp, 5);
    assert!((a.loss - b.loss).abs() <= 1e-14 * a.loss);
    for (u, v) in a.grad.iter().zip(&b.grad) {
        assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
    }
}

#[test]
fn batched_forward_equals_single_forwards() {
    let p = random_net(vec![6, 8, 8, 4], 10);
    let x = random_vec(6 * 7, 11);
    let all = p.forward(&x, 7);
    for k in 0..7 {
        let one = p.forward(&x[k * 6..(k + 1) * 6], 1);
        for (a, b) in one.iter().zip(&all[k * 4..(k + 1) * 4]) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn bias_free_network_is_positively_homogeneous() {
    let mut p = random_net(vec![5, 7, 3], 12);
    for l in 0..2 {
        p.layer_mut(l).1.iter_mut().for_each(|b| *b = 0.0);
    }
    let x = random_vec(5 * 2, 13);
    let base = p.forward(&x, 2);
    for c in [0.5, 3.0] {
        let xs: Vec<f64> = x.iter().map(|v| c * v).collect();
        for (a, b) in p.forward(&xs, 2).iter().zip(&base) {
            assert!((a - c * b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.lodn");
    let p = random_net(vec![4, 3, 2], 14);
    p.save(&path, 7).unwrap();
    let (q, epochs) = MlpParameters::load(&path).unwrap();
    assert_eq!(epochs, 7);
    assert_eq!(p, q);
    let (r, _) = MlpParameters::load_expecting(&path, p.architecture()).unwrap();
    assert_eq!(p, r);
}

#[test]
fn checkpoint_architecture_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.lodn");
    random_net(vec![4, 3, 2], 15).save(&path, 1).unwrap();
    let other = Architecture::new(vec![4, 5, 2]).unwrap();
    let err = MlpParameters::load_expecting(&path, &other).unwrap_err();
    assert!(matches!(err, lodc::Error::ArchitectureMismatch { .. }));
    assert!(err.is_config());
}

#[test]
fn truncated_checkpoint_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.lodn");
    random_net(vec![4, 3, 2], 16).save(&path, 1).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(MlpParameters::load(&path), Err(lodc::Error::Format { .. })));
    std::fs::write(&path, b"NOPE").unwrap();
    assert!(matches!(MlpParameters::load(&path), Err(lodc::Error::Format { .. })));
}

#[test]
fn adam_state_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("opt.loda");
    let mut s = AdamState::new(3);
    let mut p = vec![1.0, 2.0, 3.0];
    s.update(&mut p, &[0.1, -0.2, 0.3], 1e-3);
    s.save(&path).unwrap();
    assert_eq!(AdamState::load(&path).unwrap(), s);
}

#[test]
fn default_architecture_at_full_scale() {
    let arch = default_architecture(1600, 144, 3).unwrap();
    assert_eq!(arch.widths(), &[1600, 1600, 800, 800, 400, 400, 144, 144, 144]);
    assert_eq!(arch.num_params(), 5_063_504);
}

#[test]
fn glorot_is_seeded() {
    assert_eq!(random_net(vec![9, 9, 9], 3), random_net(vec![9, 9, 9], 3));
    assert_ne!(random_net(vec![9, 9, 9], 3), random_net(vec![9, 9, 9], 4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_check_property(seed in 0u64..1_000_000) {
        let (p, x, y, batch) = random_gradient_case(seed);
        let err = gradient_check(&p, &x, &y, batch, 1e-6);
        prop_assert!(err <= 1e-5, "relative error {:e}", err);
    }

    #[test]
    fn loss_is_nonnegative_and_zero_at_target(seed in 0u64..1_000_000) {
        let (p, x, _, batch) = random_gradient_case(seed);
        let y = p.forward(&x, batch);
        let g = p.loss_and_grad(&x, &y, batch);
        prop_assert!(g.loss >= 0.0);
        if g.used > 0 {
            prop_assert_eq!(g.loss, 0.0);
            prop_assert!(g.grad.iter().all(|v| *v == 0.0));
        }
    }
}
