use super::*;
use crate::sensing::{BinarizeMode, CassiEncoder, MriEncoder, SpcEncoder};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn coherence_examples() {
    // Identity: orthogonal columns.
    let eye = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 1.0 } else { 0.0 });
    assert_eq!(mutual_coherence(&eye).unwrap(), 0.0);

    // Columns (1,0) and (1,1): 1/sqrt(2) after normalization.
    let mut a = Array2::zeros((2, 2));
    a[[0, 0]] = 1.0;
    a[[0, 1]] = 1.0;
    a[[1, 1]] = 1.0;
    let mu = mutual_coherence(&a).unwrap();
    assert!((mu - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);

    // Duplicated column: parallel columns.
    let mut d = Array2::zeros((3, 2));
    for i in 0..3 {
        d[[i, 0]] = (i + 1) as f64;
        d[[i, 1]] = 2.0 * (i + 1) as f64;
    }
    assert!((mutual_coherence(&d).unwrap() - 1.0).abs() < 1e-12);

    // Zero column errors and names the column.
    let mut z = Array2::zeros((2, 3));
    z[[0, 0]] = 1.0;
    z[[1, 2]] = 1.0;
    let err = mutual_coherence(&z).unwrap_err().to_string();
    assert!(err.contains("column 1"), "{err}");
}

#[test]
fn coherence_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Array2::from_shape_fn((5, 8), |_| rng.gen_range(-1.0..1.0));
    let mu = mutual_coherence(&a).unwrap();
    // Swap two columns.
    let mut b = a.clone();
    for i in 0..5 {
        b.swap([i, 2], [i, 6]);
    }
    assert!((mutual_coherence(&b).unwrap() - mu).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&mu));
}

#[test]
fn condition_examples() {
    let eye = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 1.0 } else { 0.0 });
    let (kappa, sigma, norm) = condition_and_spectrum(&eye).unwrap();
    assert_eq!(kappa, 1.0);
    assert!(sigma.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    assert!(norm.iter().all(|&s| (s - 1.0).abs() < 1e-12));

    let mut d = Array2::zeros((2, 2));
    d[[0, 0]] = 3.0;
    d[[1, 1]] = 1.0;
    let (kappa, _, _) = condition_and_spectrum(&d).unwrap();
    assert!((kappa - 3.0).abs() < 1e-12);

    // Rank-deficient: infinity sentinel.
    let mut r = Array2::zeros((2, 3));
    for j in 0..3 {
        r[[0, j]] = (j + 1) as f64;
        r[[1, j]] = (j + 1) as f64;
    }
    let (kappa, _, _) = condition_and_spectrum(&r).unwrap();
    assert!(kappa.is_infinite());
}

#[test]
fn spectrum_matches_gram_eigen_oracle_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = Array2::from_shape_fn((8, 16), |_| rng.gen_range(-1.0..1.0));
    let (_, sigma, _) = condition_and_spectrum(&a).unwrap();
    let gram = a.dot(&a.t());
    let eig = sym_eigenvalues(&gram);
    for (s, e) in sigma.iter().zip(eig.iter()) {
        assert!((s - e.max(0.0).sqrt()).abs() < 1e-8);
    }
}

#[test]
fn gram_section_examples() {
    // Scaled selection rows: A^T A diagonal 0/1 pattern (times the scale^2).
    let mut sel = Array2::zeros((2, 5));
    sel[[0, 1]] = 1.0;
    sel[[1, 3]] = 1.0;
    let g = gram_section(&sel, 5).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let expected = if i == j && (i == 1 || i == 3) { 1.0 } else { 0.0 };
            assert_eq!(g[[i, j]], expected);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Array2::from_shape_fn((6, 9), |_| rng.gen_range(-1.0..1.0));
    let g = gram_section(&a, 4).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let direct: f64 = (0..6).map(|r| a[[r, i]] * a[[r, j]]).sum();
            assert!((g[[i, j]] - direct).abs() < 1e-12);
            assert!((g[[i, j]] - g[[j, i]]).abs() < 1e-10);
        }
    }
    assert!(gram_section(&a, 0).is_err());
}

#[test]
fn band_correlation_full_aperture_counts_overlap() {
    // Phi = 1 everywhere, N = M = 4, L = 3: G[i][j] = N * (M - |i-j|).
    let enc = CassiEncoder::with_apertures(
        Array3::from_elem((1, 4, 4), 1.0),
        3,
        BinarizeMode::Heaviside,
    );
    let (g, gn, _) = spectral_band_correlation(&enc).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let lag = (i as isize - j as isize).unsigned_abs();
            let expected = 4.0 * (4.0 - lag as f64);
            assert_eq!(g[[i, j]], expected);
        }
        assert!((gn[[i, i]] - 1.0).abs() < 1e-12);
    }
    assert_eq!(g[[0, 0]], 16.0); // N * M on the diagonal
}

#[test]
fn band_correlation_matches_dense_footprint_oracle() {
    // Oracle: materialize each band's detector footprint densely and take
    // elementwise products.
    let enc = CassiEncoder::seeded(4, 4, 3, 2, BinarizeMode::Heaviside, 9).unwrap();
    let phi = enc.apertures();
    let (snaps, n, m) = phi.dim();
    let bands = enc.bands;
    let dw = enc.detector_width();
    let (g, gn, avg) = spectral_band_correlation(&enc).unwrap();
    let mut expected = Array2::<f64>::zeros((bands, bands));
    for i in 0..bands {
        for j in 0..bands {
            let mut acc = 0.0;
            for s in 0..snaps {
                let mut si = Array2::<f64>::zeros((n, dw));
                let mut sj = Array2::<f64>::zeros((n, dw));
                for r in 0..n {
                    for p in 0..m {
                        si[[r, p + i]] = phi[[s, r, p]];
                        sj[[r, p + j]] = phi[[s, r, p]];
                    }
                }
                acc += si.iter().zip(sj.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
            expected[[i, j]] = acc;
        }
    }
    for i in 0..bands {
        for j in 0..bands {
            assert!((g[[i, j]] - expected[[i, j]]).abs() < 1e-10);
            assert!((g[[i, j]] - g[[j, i]]).abs() < 1e-10);
            assert!(gn[[i, j]].abs() <= 1.0 + 1e-12);
        }
    }
    assert!((0.0..=1.0).contains(&avg));
}

#[test]
fn band_correlation_rejects_empty_aperture() {
    let enc = CassiEncoder::with_apertures(
        Array3::zeros((1, 4, 4)),
        3,
        BinarizeMode::Real,
    );
    assert!(spectral_band_correlation(&enc).is_err());
}

#[test]
fn fft_magnitude_examples() {
    // Constant aperture: single DC peak, centered by the shift.
    let ca = Array2::from_elem((8, 8), 1.0);
    let mag = ca_fft_magnitude(&ca);
    assert!((mag[[4, 4]] - 64.0).abs() < 1e-9);
    let total: f64 = mag.iter().sum();
    assert!((total - 64.0).abs() < 1e-9);

    // Single-pixel aperture: flat magnitude.
    let mut imp = Array2::zeros((8, 8));
    imp[[0, 0]] = 1.0;
    let mag = ca_fft_magnitude(&imp);
    assert!(mag.iter().all(|&v| (v - 1.0).abs() < 1e-12));

    // Parseval under the unnormalized transform: sum |F phi|^2 = n sum phi^2.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ca = Array2::from_shape_fn((8, 8), |_| rng.gen_range(0.0..1.0));
    let mag = ca_fft_magnitude(&ca);
    let lhs: f64 = mag.iter().map(|v| v * v).sum();
    let rhs: f64 = 64.0 * ca.iter().map(|v| v * v).sum::<f64>();
    assert!((lhs - rhs).abs() < 1e-8 * rhs);
}

#[test]
fn mri_report_matches_dense_complex_oracle() {
    let enc = MriEncoder::seeded(4, 2.0, BinarizeMode::Heaviside, 11).unwrap();
    let report = mri_report_for_test(&enc);
    let a = dense_complex_matrix(&enc);
    let (m, n) = a.dim();
    // Dense complex coherence.
    let mut best: f64 = 0.0;
    let mut norms = vec![0.0f64; n];
    for j in 0..n {
        norms[j] = (0..m).map(|i| a[[i, j]].norm_sqr()).sum::<f64>().sqrt();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let inner: num_complex::Complex64 =
                (0..m).map(|r| a[[r, i]].conj() * a[[r, j]]).sum();
            best = best.max(inner.norm() / (norms[i] * norms[j]));
        }
    }
    assert!(
        (report.mutual_coherence - best).abs() < 1e-10,
        "structural {} vs dense {best}",
        report.mutual_coherence
    );
    // Gram section magnitude against the dense Gram.
    let w = report.gram_section.nrows();
    for u in 0..w {
        for v in 0..w {
            let entry: num_complex::Complex64 =
                (0..m).map(|r| a[[r, u]].conj() * a[[r, v]]).sum();
            assert!(
                (report.gram_section[[u, v]] - entry.norm()).abs() < 1e-10,
                "({u},{v})"
            );
        }
    }
    // Masked orthonormal DFT rows are orthonormal: all singular values 1.
    assert!(report.singular_values.iter().all(|&s| s == 1.0));
    assert_eq!(report.singular_values.len(), m);
    assert_eq!(report.condition_number, 1.0);
}

fn mri_report_for_test(enc: &MriEncoder) -> EncoderReport {
    encoder_report(&crate::sensing::SensingOperator::Mri(enc.clone()), 16).unwrap()
}

#[test]
fn cassi_report_matches_dense_oracle() {
    let enc = CassiEncoder::seeded(3, 4, 3, 2, BinarizeMode::Heaviside, 12).unwrap();
    let dense = enc.dense_matrix();
    let report =
        encoder_report(&crate::sensing::SensingOperator::Cassi(enc.clone()), 10).unwrap();
    // Spectrum against the one-sided Jacobi on the dense matrix.
    let dense_sigma = singular_values(&dense);
    assert_eq!(report.singular_values.len(), dense_sigma.len());
    for (a, b) in report.singular_values.iter().zip(dense_sigma.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    // Gram section against dense columns.
    let g = report.gram_section.clone();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let direct: f64 = (0..dense.nrows()).map(|r| dense[[r, i]] * dense[[r, j]]).sum();
            assert!((g[[i, j]] - direct).abs() < 1e-10, "({i},{j})");
        }
    }
    // Coherence against the dense computation (skipping zero columns the
    // same way the structural path does).
    let (m, n) = dense.dim();
    let mut best: f64 = 0.0;
    for i in 0..n {
        let ni: f64 = (0..m).map(|r| dense[[r, i]] * dense[[r, i]]).sum();
        if ni == 0.0 {
            continue;
        }
        for j in (i + 1)..n {
            let nj: f64 = (0..m).map(|r| dense[[r, j]] * dense[[r, j]]).sum();
            if nj == 0.0 {
                continue;
            }
            let inner: f64 = (0..m).map(|r| dense[[r, i]] * dense[[r, j]]).sum();
            best = best.max(inner.abs() / (ni * nj).sqrt());
        }
    }
    assert!(
        (report.mutual_coherence - best).abs() < 1e-10,
        "structural {} vs dense {best}",
        report.mutual_coherence
    );
}

#[test]
fn spc_report_fields() {
    let enc = SpcEncoder::seeded(4, 6, BinarizeMode::Sign, 13).unwrap();
    let report = encoder_report(&crate::sensing::SensingOperator::Spc(enc), 8).unwrap();
    assert_eq!(report.modality, "spc");
    assert!(report.mutual_coherence <= 1.0);
    assert!(report.condition_number >= 1.0);
    assert_eq!(report.gram_section.dim(), (8, 8));
    assert!(report.fft_magnitude.is_some());
    assert!(report.spectral_band_corr.is_none());
    let json = report.to_json();
    assert!(json["singular_values"].as_array().is_some());
}

#[test]
fn gram_via_backproject_matches_dense_gram() {
    // For every real modality, A^T A from forward/adjoint equals the dense
    // construction (n <= 64).
    let ops = vec![
        crate::sensing::SensingOperator::Spc(
            SpcEncoder::seeded(4, 5, BinarizeMode::Sign, 20).unwrap(),
        ),
        crate::sensing::SensingOperator::Cassi(
            CassiEncoder::seeded(4, 4, 2, 1, BinarizeMode::Heaviside, 21).unwrap(),
        ),
    ];
    for op in ops {
        let dense = dense_matrix(&op).unwrap();
        let gram_dense = dense.t().dot(&dense);
        let gram_op = gram_via_backproject(&op).unwrap();
        assert_eq!(gram_dense.dim(), gram_op.dim());
        for (a, b) in gram_dense.iter().zip(gram_op.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
    // MRI against the dense complex matrix.
    let enc = MriEncoder::seeded(4, 2.0, BinarizeMode::Heaviside, 22).unwrap();
    let a = dense_complex_matrix(&enc);
    let op = crate::sensing::SensingOperator::Mri(enc);
    let n = 16;
    // Complex Gram via backproject on complex unit vectors equals A^H A.
    for k in 0..n {
        let mut data = Array3::zeros((2, 4, 4));
        data.as_slice_mut().unwrap()[k] = 1.0; // real unit vector
        let e = crate::sensing::SceneTensor {
            modality: crate::sensing::Modality::Mri,
            data,
        };
        let col = op.backproject(&e).unwrap();
        let cc = col.as_complex().unwrap();
        for r in 0..n {
            let expected: num_complex::Complex64 =
                (0..a.nrows()).map(|i| a[[i, r]].conj() * a[[i, k]]).sum();
            let got = cc.as_slice().unwrap()[r];
            assert!((expected - got).norm() < 1e-8, "entry ({r},{k})");
        }
    }
}
