//! Property tests over the operator algebra and diagnostics.

use codi::analysis::{mutual_coherence, spectral_band_correlation};
use codi::sensing::{
    add_awgn, af_regularizer, binarize, BinarizeMode, CassiEncoder, MeasValues, Measurement,
    Modality, MriEncoder, SceneTensor, SensingOperator, SpcEncoder,
};
use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn operator_for(modality: Modality, dims: usize, seed: u64) -> SensingOperator {
    match modality {
        Modality::Mri => SensingOperator::Mri(
            MriEncoder::seeded(dims, 2.0, BinarizeMode::Heaviside, seed).unwrap(),
        ),
        Modality::Spc => SensingOperator::Spc(
            SpcEncoder::seeded(dims, dims * dims / 3 + 1, BinarizeMode::Sign, seed).unwrap(),
        ),
        Modality::Cassi => SensingOperator::Cassi(
            CassiEncoder::seeded(dims, dims, 3, 1, BinarizeMode::Heaviside, seed).unwrap(),
        ),
    }
}

fn random_scene(op: &SensingOperator, seed: u64) -> SceneTensor {
    let (c, h, w) = op.scene_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SceneTensor {
        modality: op.modality(),
        data: Array3::from_shape_fn((c, h, w), |_| rng.gen_range(-1.0..1.0)),
    }
}

fn random_measurement(op: &SensingOperator, seed: u64) -> Measurement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = op.measurement_len();
    let values = match op.modality() {
        Modality::Mri => MeasValues::Complex(Array1::from_shape_fn(len, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })),
        _ => MeasValues::Real(Array1::from_shape_fn(len, |_| rng.gen_range(-1.0..1.0))),
    };
    Measurement {
        modality: op.modality(),
        values,
        snr_db: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn binarize_alphabet_and_shape(seed in 0u64..5000, rows in 1usize..6, cols in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-2.0..2.0));
        let h = binarize(BinarizeMode::Heaviside, &w);
        let s = binarize(BinarizeMode::Sign, &w);
        prop_assert_eq!(h.dim(), w.dim());
        prop_assert!(h.iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert!(s.iter().all(|&v| v == -1.0 || v == 1.0));
        prop_assert_eq!(binarize(BinarizeMode::Real, &w), w);
    }

    #[test]
    fn adjoint_identity_random_operators(seed in 0u64..2000, pick in 0usize..3) {
        let modality = [Modality::Mri, Modality::Spc, Modality::Cassi][pick];
        let dims = if modality == Modality::Mri { 8 } else { 4 };
        let op = operator_for(modality, dims, seed);
        let x = random_scene(&op, seed ^ 0xabcd);
        let y = random_measurement(&op, seed ^ 0x1234);
        let ax = op.forward(&x).unwrap();
        let aty = op.adjoint(&y).unwrap();
        let (lhs, rhs): (Complex64, Complex64) = match (&ax.values, &y.values) {
            (MeasValues::Real(a), MeasValues::Real(b)) => {
                let lhs = a.iter().zip(b.iter()).map(|(u, v)| u * v).sum::<f64>();
                let rhs = x.data.iter().zip(aty.data.iter()).map(|(u, v)| u * v).sum::<f64>();
                (Complex64::new(lhs, 0.0), Complex64::new(rhs, 0.0))
            }
            (MeasValues::Complex(a), MeasValues::Complex(b)) => {
                let lhs: Complex64 = a.iter().zip(b.iter()).map(|(u, v)| u * v.conj()).sum();
                let xc = x.as_complex().unwrap();
                let yc = aty.as_complex().unwrap();
                let rhs: Complex64 = xc.iter().zip(yc.iter()).map(|(u, v)| u * v.conj()).sum();
                (lhs, rhs)
            }
            _ => unreachable!(),
        };
        let xn = x.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn = y.values.norm_sqr().sqrt();
        prop_assert!((lhs - rhs).norm() <= 1e-6 * (xn * yn + 1.0));
    }

    #[test]
    fn forward_is_linear(seed in 0u64..2000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let op = operator_for(Modality::Cassi, 4, seed);
        let x1 = random_scene(&op, seed ^ 0x11);
        let x2 = random_scene(&op, seed ^ 0x22);
        let mut combo = x1.clone();
        combo.data.iter_mut().zip(x2.data.iter()).for_each(|(a, &b)| *a = alpha * *a + beta * b);
        let y = op.forward(&combo).unwrap();
        let y1 = op.forward(&x1).unwrap();
        let y2 = op.forward(&x2).unwrap();
        if let (MeasValues::Real(c), MeasValues::Real(a), MeasValues::Real(b)) =
            (&y.values, &y1.values, &y2.values)
        {
            let scale = c.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
            for i in 0..c.len() {
                prop_assert!((c[i] - (alpha * a[i] + beta * b[i])).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn af_regularizer_zero_iff_exact_budget(active in 0usize..=64) {
        let mut mask = Array2::zeros((8, 8));
        for k in 0..active {
            mask.as_slice_mut().unwrap()[k] = 1.0;
        }
        let v = af_regularizer(&mask, 4.0, 1.0).unwrap();
        if active == 16 {
            prop_assert_eq!(v, 0.0);
        } else {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn normalized_band_correlation_is_bounded(seed in 0u64..2000, bands in 2usize..5) {
        let enc = CassiEncoder::seeded(4, 4, bands, 1, BinarizeMode::Real, seed).unwrap();
        // Shift weights positive so no aperture is degenerate.
        let mut enc = enc;
        enc.weights.mapv_inplace(|v| v.abs() + 0.05);
        let (g, gn, avg) = spectral_band_correlation(&enc).unwrap();
        for i in 0..bands {
            prop_assert!((gn[[i, i]] - 1.0).abs() < 1e-10);
            for j in 0..bands {
                prop_assert!(gn[[i, j]].abs() <= 1.0 + 1e-10);
                prop_assert!((g[[i, j]] - g[[j, i]]).abs() < 1e-10);
            }
        }
        prop_assert!((0.0..=1.0 + 1e-12).contains(&avg));
    }

    #[test]
    fn coherence_bounded_and_scale_invariant(seed in 0u64..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((5, 7), |_| rng.gen_range(0.1..1.0));
        let mu = mutual_coherence(&a).unwrap();
        prop_assert!((0.0..=1.0).contains(&mu));
        let scaled = a.mapv(|v| 7.5 * v);
        prop_assert!((mutual_coherence(&scaled).unwrap() - mu).abs() < 1e-10);
    }

    #[test]
    fn awgn_noise_level_tracks_snr(seed in 0u64..500, snr_db in 10.0f64..40.0) {
        let m = 2048usize;
        let y = Measurement {
            modality: Modality::Spc,
            values: MeasValues::Real(Array1::from_elem(m, 0.5)),
            snr_db: None,
        };
        let noisy = add_awgn(&y, snr_db, seed).unwrap();
        let signal = y.values.norm_sqr();
        let eta: f64 = match (&noisy.values, &y.values) {
            (MeasValues::Real(a), MeasValues::Real(b)) => {
                a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
            }
            _ => unreachable!(),
        };
        let realized_snr = 10.0 * (signal / eta).log10();
        // Concentration: well within a dB at this length.
        prop_assert!((realized_snr - snr_db).abs() < 1.0);
    }
}
