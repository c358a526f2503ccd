//! Encoder-quality diagnostics and image-quality metrics.
//!
//! Diagnostics follow the sensing-matrix view of each encoder: mutual
//! coherence over l2-normalized columns, the singular spectrum and condition
//! number, windowed sections of the Gram matrix `A^T A`, the spectral-band
//! correlation of a spectral imager, and the Fourier magnitude of a coded
//! aperture. MRI and CASSI operators are never materialized densely at full
//! size; their diagnostics use the operators' structure (mask
//! autocorrelation, detector-sharing column pairs), which the tests pin
//! against dense constructions on small instances.

mod metrics;
mod svd;

pub use metrics::{psnr, sam, scene_quality, ssim, SSIM_K1, SSIM_K2, SSIM_WINDOW};
pub use svd::{singular_values, sym_eigenvalues};

use crate::error::{CoreError, Result};
use crate::fourier::{fft2_raw, fftshift2};
use crate::sensing::{CassiEncoder, MriEncoder, SensingOperator, SpcEncoder};
use ndarray::{Array2, Array3};
use num_complex::Complex64;

/// Threshold under which the condition number reports the infinity sentinel.
pub const RANK_TOL: f64 = 1e-12;

/// Maximum absolute inner product between distinct l2-normalized columns.
pub fn mutual_coherence(a: &Array2<f64>) -> Result<f64> {
    let (m, n) = a.dim();
    if n < 2 {
        return Err(CoreError::Invalid(
            "mutual coherence needs at least two columns".into(),
        ));
    }
    let mut normalized = a.clone();
    for j in 0..n {
        let norm = (0..m).map(|i| a[[i, j]] * a[[i, j]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CoreError::Invalid(format!("column {j} is zero")));
        }
        for i in 0..m {
            normalized[[i, j]] /= norm;
        }
    }
    let gram = normalized.t().dot(&normalized);
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(gram[[i, j]].abs());
        }
    }
    // Clamp rounding excursions above 1 from the normalization.
    Ok(best.min(1.0))
}

/// Singular spectrum plus the condition number `sigma_max / sigma_min`.
/// Returns `(condition, descending sigma, sigma / sigma_max)`.
pub fn condition_and_spectrum(a: &Array2<f64>) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if a.iter().all(|&v| v == 0.0) {
        return Err(CoreError::Invalid("zero matrix has no spectrum".into()));
    }
    let sigma = singular_values(a);
    Ok(spectrum_summary(sigma))
}

fn spectrum_summary(sigma: Vec<f64>) -> (f64, Vec<f64>, Vec<f64>) {
    let smax = sigma[0];
    let smin = *sigma.last().unwrap();
    let condition = if smin <= RANK_TOL * smax {
        f64::INFINITY
    } else {
        smax / smin
    };
    let normalized = sigma.iter().map(|s| s / smax).collect();
    (condition, sigma, normalized)
}

/// Top-left `window x window` block of `A^T A`.
pub fn gram_section(a: &Array2<f64>, window: usize) -> Result<Array2<f64>> {
    let (m, n) = a.dim();
    if window == 0 {
        return Err(CoreError::Invalid("window must be positive".into()));
    }
    let w = window.min(n);
    let mut out = Array2::zeros((w, w));
    for i in 0..w {
        for j in 0..w {
            out[[i, j]] = (0..m).map(|r| a[[r, i]] * a[[r, j]]).sum();
        }
    }
    Ok(out)
}

/// Spectral band correlation of a CASSI encoder.
///
/// Band `i`'s detector footprint is the aperture shifted by `i` columns;
/// `G[i][j]` sums the products of the footprints over their overlapping
/// detector positions (accumulated over snapshots), which is the trace
/// pairing of the per-band sub-operators. Returns `(G, normalized G, mean
/// absolute off-diagonal of the normalized matrix)`.
pub fn spectral_band_correlation(enc: &CassiEncoder) -> Result<(Array2<f64>, Array2<f64>, f64)> {
    let phi = enc.apertures();
    let (snaps, n, m) = phi.dim();
    let bands = enc.bands;
    let mut g = Array2::<f64>::zeros((bands, bands));
    for i in 0..bands {
        for j in i..bands {
            let d = i as isize - j as isize; // column lag of band i relative to j
            let mut acc = 0.0;
            for s in 0..snaps {
                for r in 0..n {
                    for p in 0..m {
                        let q = p as isize + d;
                        if q >= 0 && (q as usize) < m {
                            acc += phi[[s, r, p]] * phi[[s, r, q as usize]];
                        }
                    }
                }
            }
            g[[i, j]] = acc;
            g[[j, i]] = acc;
        }
    }
    if (0..bands).any(|i| g[[i, i]] == 0.0) {
        return Err(CoreError::Invalid(
            "degenerate all-zero coded aperture".into(),
        ));
    }
    let mut normalized = Array2::<f64>::zeros((bands, bands));
    for i in 0..bands {
        for j in 0..bands {
            normalized[[i, j]] = g[[i, j]] / (g[[i, i]] * g[[j, j]]).sqrt();
        }
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..bands {
        for j in 0..bands {
            if i != j {
                acc += normalized[[i, j]].abs();
                count += 1;
            }
        }
    }
    let avg = if count > 0 { acc / count as f64 } else { 0.0 };
    Ok((g, normalized, avg))
}

/// Centered magnitude of the unnormalized 2-D DFT of a coded aperture.
pub fn ca_fft_magnitude(ca: &Array2<f64>) -> Array2<f64> {
    let complex = ca.mapv(|v| Complex64::new(v, 0.0));
    let f = fft2_raw(&complex);
    fftshift2(&f.mapv(|v| v.norm()))
}

/// Diagnostic bundle for one encoder.
#[derive(Debug, Clone)]
pub struct EncoderReport {
    pub modality: String,
    pub mutual_coherence: f64,
    pub condition_number: f64,
    pub singular_values: Vec<f64>,
    pub normalized_singular_values: Vec<f64>,
    pub gram_section: Array2<f64>,
    pub spectral_band_corr: Option<Array2<f64>>,
    pub normalized_band_corr: Option<Array2<f64>>,
    pub avg_band_corr: Option<f64>,
    pub fft_magnitude: Option<Array2<f64>>,
}

impl EncoderReport {
    pub fn to_json(&self) -> serde_json::Value {
        let mat = |m: &Array2<f64>| -> serde_json::Value {
            serde_json::json!(m
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect::<Vec<_>>())
        };
        serde_json::json!({
            "modality": self.modality,
            "mutual_coherence": self.mutual_coherence,
            "condition_number": if self.condition_number.is_finite() {
                serde_json::json!(self.condition_number)
            } else {
                serde_json::json!("inf")
            },
            "singular_values": self.singular_values,
            "normalized_singular_values": self.normalized_singular_values,
            "gram_section": mat(&self.gram_section),
            "spectral_band_corr": self.spectral_band_corr.as_ref().map(mat),
            "normalized_band_corr": self.normalized_band_corr.as_ref().map(mat),
            "avg_band_corr": self.avg_band_corr,
            "fft_magnitude": self.fft_magnitude.as_ref().map(mat),
        })
    }
}

/// MRI mask diagnostics via the autocorrelation identity: the Gram of the
/// masked Fourier operator satisfies `(A^H A)[u, v] = c[(v - u) mod grid]`
/// with `c` the inverse DFT of the mask over `n`; coherence is the largest
/// nonzero-lag magnitude over `c[0]`.
fn mri_mask_autocorr(mask: &Array2<f64>) -> Array2<Complex64> {
    let n = mask.len() as f64;
    let complex = mask.mapv(|v| Complex64::new(v, 0.0));
    // Unnormalized inverse DFT = conj(fft(conj(x))); mask is real.
    fft2_raw(&complex).mapv(|v| v.conj() / n)
}

fn mri_report(enc: &MriEncoder) -> Result<EncoderReport> {
    let mask = enc.mask();
    let active = mask.iter().filter(|&&v| v != 0.0).count();
    if active == 0 {
        return Err(CoreError::Invalid("empty mask has no diagnostics".into()));
    }
    let (h, w) = mask.dim();
    let n = h * w;
    let corr = mri_mask_autocorr(&mask);
    let c0 = corr[[0, 0]].re; // = active / n
    let mut coherence: f64 = 0.0;
    for i in 0..h {
        for j in 0..w {
            if i == 0 && j == 0 {
                continue;
            }
            coherence = coherence.max(corr[[i, j]].norm() / c0);
        }
    }
    // Rows of Phi F are orthonormal scaled selections: all singular values 1.
    let sigma = vec![1.0; active];
    let (condition, singular_values, normalized) = spectrum_summary(sigma);
    let window = 16.min(n);
    let mut gram = Array2::zeros((window, window));
    for u in 0..window {
        for v in 0..window {
            // Pixel index difference maps to a 2-D lag on the grid.
            let (ui, uj) = (u / w, u % w);
            let (vi, vj) = (v / w, v % w);
            let di = (vi + h - ui) % h;
            let dj = (vj + w - uj) % w;
            gram[[u, v]] = corr[[di, dj]].norm();
        }
    }
    Ok(EncoderReport {
        modality: "mri".into(),
        mutual_coherence: coherence.min(1.0),
        condition_number: condition,
        singular_values,
        normalized_singular_values: normalized,
        gram_section: gram,
        spectral_band_corr: None,
        normalized_band_corr: None,
        avg_band_corr: None,
        fft_magnitude: Some(mask.clone()),
    })
}

fn spc_report(enc: &SpcEncoder, window: usize) -> Result<EncoderReport> {
    let a = enc.matrix();
    let coherence = mutual_coherence(&a)?;
    let (condition, sigma, normalized) = condition_and_spectrum(&a)?;
    let gram = gram_section(&a, window)?;
    let side = enc.img_side();
    let first_ca = Array2::from_shape_fn((side, side), |(i, j)| a[[0, i * side + j]]);
    Ok(EncoderReport {
        modality: "spc".into(),
        mutual_coherence: coherence,
        condition_number: condition,
        singular_values: sigma,
        normalized_singular_values: normalized,
        gram_section: gram,
        spectral_band_corr: None,
        normalized_band_corr: None,
        avg_band_corr: None,
        fft_magnitude: Some(ca_fft_magnitude(&first_ca)),
    })
}

/// CASSI columns are detector-sparse: column `(l, r, p)` hits detector pixel
/// `(r, p + l)` in every snapshot, so two columns interact only when they
/// share a detector pixel. Coherence, the Gram section and the spectrum all
/// follow from the per-pixel snapshot blocks.
fn cassi_report(enc: &CassiEncoder, window: usize) -> Result<EncoderReport> {
    let phi = enc.apertures();
    let (snaps, n, m) = phi.dim();
    let bands = enc.bands;
    let dw = enc.detector_width();

    let col_norm_sq = |r: usize, p: usize| -> f64 {
        (0..snaps).map(|s| phi[[s, r, p]] * phi[[s, r, p]]).sum()
    };
    let col_inner = |r: usize, p: usize, p2: usize| -> f64 {
        (0..snaps).map(|s| phi[[s, r, p]] * phi[[s, r, p2]]).sum()
    };

    // Mutual coherence over columns sharing a detector pixel; zero columns
    // (aperture pixels blocked in every snapshot) sense nothing and are
    // skipped.
    let mut coherence: f64 = 0.0;
    for r in 0..n {
        for c in 0..dw {
            for li in 0..bands {
                let pi = c as isize - li as isize;
                if pi < 0 || pi >= m as isize {
                    continue;
                }
                for lj in (li + 1)..bands {
                    let pj = c as isize - lj as isize;
                    if pj < 0 || pj >= m as isize {
                        continue;
                    }
                    let ni = col_norm_sq(r, pi as usize);
                    let nj = col_norm_sq(r, pj as usize);
                    if ni == 0.0 || nj == 0.0 {
                        continue;
                    }
                    let inner = col_inner(r, pi as usize, pj as usize).abs();
                    coherence = coherence.max(inner / (ni * nj).sqrt());
                }
            }
        }
    }
    // Spectrum: A A^T decomposes into per-detector-pixel snapshot blocks
    // M[s, s'] = sum_l phi_s[r, c-l] phi_s'[r, c-l]; singular values are the
    // square roots of their eigenvalues.
    let mut sigma = Vec::with_capacity(snaps * n * dw);
    for r in 0..n {
        for c in 0..dw {
            let mut block = Array2::<f64>::zeros((snaps, snaps));
            for s in 0..snaps {
                for s2 in 0..snaps {
                    let mut acc = 0.0;
                    for l in 0..bands {
                        let p = c as isize - l as isize;
                        if p >= 0 && p < m as isize {
                            acc += phi[[s, r, p as usize]] * phi[[s2, r, p as usize]];
                        }
                    }
                    block[[s, s2]] = acc;
                }
            }
            for ev in sym_eigenvalues(&block) {
                sigma.push(ev.max(0.0).sqrt());
            }
        }
    }
    sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
    if sigma.is_empty() || sigma[0] == 0.0 {
        return Err(CoreError::Invalid(
            "degenerate all-zero coded aperture".into(),
        ));
    }
    let (condition, singular_values, normalized) = spectrum_summary(sigma);

    // Gram section over the first `window` scene columns (band-major order):
    // <col_q, col_q'> = [r = r' and p + l = p' + l'] * sum_s phi_s[r,p] phi_s[r,p'].
    let w = window.min(bands * n * m);
    let mut gram = Array2::zeros((w, w));
    let col_of = |q: usize| -> (usize, usize, usize) {
        let l = q / (n * m);
        let rem = q % (n * m);
        (l, rem / m, rem % m)
    };
    for qi in 0..w {
        for qj in 0..w {
            let (li, ri, pi) = col_of(qi);
            let (lj, rj, pj) = col_of(qj);
            if ri == rj && pi + li == pj + lj {
                gram[[qi, qj]] = col_inner(ri, pi, pj);
            }
        }
    }

    let (g, gn, avg) = spectral_band_correlation(enc)?;
    let first = Array2::from_shape_fn((n, m), |(i, j)| phi[[0, i, j]]);
    Ok(EncoderReport {
        modality: "cassi".into(),
        mutual_coherence: coherence.min(1.0),
        condition_number: condition,
        singular_values,
        normalized_singular_values: normalized,
        gram_section: gram,
        spectral_band_corr: Some(g),
        normalized_band_corr: Some(gn),
        avg_band_corr: Some(avg),
        fft_magnitude: Some(ca_fft_magnitude(&first)),
    })
}

/// Assemble the diagnostic bundle for any operator.
pub fn encoder_report(op: &SensingOperator, window: usize) -> Result<EncoderReport> {
    match op {
        SensingOperator::Mri(m) => mri_report(m),
        SensingOperator::Spc(s) => spc_report(s, window),
        SensingOperator::Cassi(c) => cassi_report(c, window),
    }
}

/// Dense real sensing matrix of an operator, for small instances and tests.
/// MRI is excluded (its dense operator is complex); see
/// [`dense_complex_matrix`].
pub fn dense_matrix(op: &SensingOperator) -> Result<Array2<f64>> {
    match op {
        SensingOperator::Mri(_) => Err(CoreError::Invalid(
            "mri dense operator is complex; use dense_complex_matrix".into(),
        )),
        SensingOperator::Spc(s) => Ok(s.matrix()),
        SensingOperator::Cassi(c) => Ok(c.dense_matrix()),
    }
}

/// Dense complex sensing matrix of an MRI operator (selected rows of the
/// masked orthonormal DFT); for small instances and tests.
pub fn dense_complex_matrix(enc: &MriEncoder) -> Array2<Complex64> {
    let mask = enc.mask();
    let (h, w) = mask.dim();
    let n = h * w;
    let rows: Vec<usize> = (0..n)
        .filter(|&k| mask.as_slice().unwrap()[k] != 0.0)
        .collect();
    let mut a = Array2::from_elem((rows.len(), n), Complex64::new(0.0, 0.0));
    for (out_r, &k) in rows.iter().enumerate() {
        let (ki, kj) = (k / w, k % w);
        for c in 0..n {
            let (ci, cj) = (c / w, c % w);
            let ph = -2.0
                * std::f64::consts::PI
                * ((ki * ci) as f64 / h as f64 + (kj * cj) as f64 / w as f64);
            a[[out_r, c]] = Complex64::from_polar(1.0 / (n as f64).sqrt(), ph);
        }
    }
    a
}

/// `A^T A` of a scene-sized operator assembled by applying
/// `backproject` to unit basis vectors; oracle-grade, small instances only.
pub fn gram_via_backproject(op: &SensingOperator) -> Result<Array2<f64>> {
    let (c, h, w) = op.scene_shape();
    let n = c * h * w;
    let mut gram = Array2::zeros((n, n));
    for k in 0..n {
        let mut data = Array3::zeros((c, h, w));
        data.as_slice_mut().unwrap()[k] = 1.0;
        let e = crate::sensing::SceneTensor {
            modality: op.modality(),
            data,
        };
        let col = op.backproject(&e)?;
        for (r, v) in col.data.iter().enumerate() {
            gram[[r, k]] = *v;
        }
    }
    Ok(gram)
}

#[cfg(test)]
mod tests;
