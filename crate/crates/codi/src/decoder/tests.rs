use super::*;
use crate::sensing::Modality;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(seed: u64) -> DecoderConfig {
    DecoderConfig {
        in_channels: 1,
        width_factor: 1,
        depth: 1,
        base_filters: 2,
        height: 8,
        width: 8,
        input_scale: 1.0,
        seed,
    }
}

fn mri_config(seed: u64) -> DecoderConfig {
    DecoderConfig::for_modality(Modality::Mri, 64, 1, seed)
}

#[test]
fn zero_input_yields_finite_correct_shape() {
    let net = DecoderNet::new(mri_config(1)).unwrap();
    let input = SceneTensor::new(Modality::Mri, Array3::zeros((2, 64, 64))).unwrap();
    let (recon, bottleneck) = net.decode(&input).unwrap();
    assert_eq!(recon.data.dim(), (2, 64, 64));
    assert!(recon.data.iter().all(|v| v.is_finite()));
    assert!(bottleneck.values.iter().all(|v| v.is_finite()));
    // depth 3 on 64x64 with 8 base filters: bottleneck is (64, 8, 8).
    assert_eq!(bottleneck.values.dim(), (64, 8, 8));
}

#[test]
fn decode_is_deterministic() {
    let net = DecoderNet::new(tiny_config(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = SceneTensor::new(
        Modality::Spc,
        Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0)),
    )
    .unwrap();
    let (r1, b1) = net.decode(&input).unwrap();
    let (r2, b2) = net.decode(&input).unwrap();
    assert_eq!(r1.data, r2.data);
    assert_eq!(b1.values, b2.values);
}

#[test]
fn same_config_same_seed_identical_bottlenecks() {
    let a = DecoderNet::new(tiny_config(7)).unwrap();
    let b = DecoderNet::new(tiny_config(7)).unwrap();
    assert_eq!(a.params(), b.params());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let input = SceneTensor::new(
        Modality::Spc,
        Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0)),
    )
    .unwrap();
    let (_, ba) = a.decode(&input).unwrap();
    let (_, bb) = b.decode(&input).unwrap();
    assert_eq!(ba.values, bb.values);
}

#[test]
fn indivisible_dims_rejected_at_construction() {
    let mut cfg = tiny_config(1);
    cfg.height = 9;
    assert!(DecoderNet::new(cfg).is_err());
    let mut cfg = tiny_config(1);
    cfg.depth = 4;
    cfg.height = 8;
    cfg.width = 8;
    // 8 / 2^4 = 0: deeper than the image.
    assert!(DecoderNet::new(cfg).is_err());
}

#[test]
fn wrong_input_shape_rejected_at_call() {
    let net = DecoderNet::new(tiny_config(4)).unwrap();
    let input = SceneTensor::new(Modality::Spc, Array3::zeros((1, 16, 16))).unwrap();
    assert!(net.decode(&input).is_err());
}

#[test]
fn param_l2_examples() {
    let mut net = DecoderNet::new(tiny_config(5)).unwrap();
    let n = net.n_params();
    net.set_params(vec![0.0; n]).unwrap();
    assert_eq!(net.param_l2(), 0.0);
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    p[1] = -2.0;
    net.set_params(p).unwrap();
    assert_eq!(net.param_l2(), 5.0);

    // Brute-force accumulation oracle over the flat list.
    let net = DecoderNet::new(tiny_config(6)).unwrap();
    let mut acc = 0.0;
    for p in net.params() {
        acc += p * p;
    }
    assert!((net.param_l2() - acc).abs() <= 1e-12 * acc.max(1.0));
}

#[test]
fn tiny_net_is_under_5k_params() {
    let net = DecoderNet::new(tiny_config(9)).unwrap();
    assert!(net.n_params() <= 5000, "tiny net has {}", net.n_params());
}

#[test]
fn parameter_gradients_match_finite_differences() {
    // Loss ||decode(x) - t||^2 on the tiny net; 50 random coordinates.
    let net = DecoderNet::new(tiny_config(10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let input = Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let target = Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let loss_of = |net: &DecoderNet| -> f64 {
        let (r, _, _) = net.forward_cached(&input).unwrap();
        r.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let (recon, _, tape) = net.forward_cached(&input).unwrap();
    let d_recon = (&recon - &target) * 2.0;
    let (grads, _) = net.backward(&tape, &d_recon, None);
    let n = net.n_params();
    let h = 1e-6;
    for t in 0..50 {
        let k = (rng.gen_range(0..n as u64)) as usize;
        let mut plus = net.clone();
        plus.params_mut()[k] += h;
        let mut minus = net.clone();
        minus.params_mut()[k] -= h;
        let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
        let rel = (fd - grads[k]).abs() / grads[k].abs().max(1e-3);
        assert!(rel < 1e-4, "coord {k} (trial {t}): fd {fd} vs {}", grads[k]);
    }
}

#[test]
fn input_gradients_match_finite_differences() {
    let net = DecoderNet::new(tiny_config(12)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let input = Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let target = Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let loss_of = |input: &Array3<f64>| -> f64 {
        let (r, _, _) = net.forward_cached(input).unwrap();
        r.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let (recon, _, tape) = net.forward_cached(&input).unwrap();
    let d_recon = (&recon - &target) * 2.0;
    let (_, d_input) = net.backward(&tape, &d_recon, None);
    let h = 1e-6;
    for t in 0..40 {
        let k = rng.gen_range(0..input.len());
        let mut plus = input.clone();
        plus.as_slice_mut().unwrap()[k] += h;
        let mut minus = input.clone();
        minus.as_slice_mut().unwrap()[k] -= h;
        let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
        let a = d_input.as_slice().unwrap()[k];
        let rel = (fd - a).abs() / a.abs().max(1e-3);
        assert!(rel < 1e-4, "coord {k} (trial {t}): fd {fd} vs {a}");
    }
}

#[test]
fn bottleneck_injection_gradients_match_finite_differences() {
    // Scalar probe s(theta) = <g_b, bottleneck(theta, x)>: backward with
    // d_bottleneck = g_b and d_recon = 0 must match finite differences.
    let net = DecoderNet::new(tiny_config(14)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let input = Array3::from_shape_fn((1, 8, 8), |_| rng.gen_range(-1.0..1.0));
    let (recon, bottleneck, tape) = net.forward_cached(&input).unwrap();
    let g_b = Array3::from_shape_fn(bottleneck.values.dim(), |_| rng.gen_range(-1.0..1.0));
    let probe = |net: &DecoderNet| -> f64 {
        let (_, b, _) = net.forward_cached(&input).unwrap();
        b.values.iter().zip(g_b.iter()).map(|(a, c)| a * c).sum()
    };
    let d_recon = Array3::zeros(recon.dim());
    let (grads, _) = net.backward(&tape, &d_recon, Some(&g_b));
    let n = net.n_params();
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..80 {
        let k = rng.gen_range(0..n);
        // Decoder-side parameters see no gradient from the bottleneck probe;
        // both analytic and fd agree they are zero, which makes the relative
        // comparison vacuous, so bias the check toward nonzero entries.
        if grads[k] == 0.0 {
            continue;
        }
        let mut plus = net.clone();
        plus.params_mut()[k] += h;
        let mut minus = net.clone();
        minus.params_mut()[k] -= h;
        let fd = (probe(&plus) - probe(&minus)) / (2.0 * h);
        let rel = (fd - grads[k]).abs() / grads[k].abs().max(1e-3);
        assert!(rel < 1e-4, "coord {k}: fd {fd} vs {}", grads[k]);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn bottleneck_shape_matches_between_twin_configs() {
    // Precondition of the feature-alignment loss: two nets sharing a config
    // produce shape-equal bottlenecks for any shared input.
    let a = DecoderNet::new(mri_config(20)).unwrap();
    let b = DecoderNet::new(mri_config(21)).unwrap();
    let input = SceneTensor::new(Modality::Mri, Array3::zeros((2, 64, 64))).unwrap();
    let (_, ba) = a.decode(&input).unwrap();
    let (_, bb) = b.decode(&input).unwrap();
    assert_eq!(ba.values.dim(), bb.values.dim());
}

#[test]
fn checksum_tracks_parameter_bits() {
    let net = DecoderNet::new(tiny_config(22)).unwrap();
    let c1 = net.checksum();
    let mut other = net.clone();
    assert_eq!(c1, other.checksum());
    other.params_mut()[0] = f64::from_bits(net.params()[0].to_bits() ^ 1);
    assert_ne!(c1, other.checksum());
}
