//! Image-quality metrics: PSNR, windowed SSIM and the spectral angle mapper.

use crate::error::{CoreError, Result};
use crate::sensing::{Modality, SceneTensor};
use ndarray::{Array3, ArrayView2};

/// SSIM stabilization constants (k1, k2) and window side used at desk scale.
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 7;

/// Peak signal-to-noise ratio in dB: `10 log10(peak^2 / MSE)`. Zero error
/// returns the `f64::INFINITY` sentinel.
pub fn psnr(x: &Array3<f64>, reference: &Array3<f64>, peak: f64) -> Result<f64> {
    if x.dim() != reference.dim() {
        return Err(CoreError::Shape(format!(
            "psnr inputs {:?} vs {:?}",
            x.dim(),
            reference.dim()
        )));
    }
    if peak <= 0.0 {
        return Err(CoreError::Invalid("psnr peak must be positive".into()));
    }
    let mse = x
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn ssim_channel(x: &ArrayView2<f64>, y: &ArrayView2<f64>, peak: f64) -> f64 {
    let (h, w) = x.dim();
    let win = SSIM_WINDOW.min(h).min(w);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let area = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=(h - win) {
        for j in 0..=(w - win) {
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for di in 0..win {
                for dj in 0..win {
                    let a = x[[i + di, j + dj]];
                    let b = y[[i + di, j + dj]];
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let mx = sx / area;
            let my = sy / area;
            let vx = sxx / area - mx * mx;
            let vy = syy / area - my * my;
            let cxy = sxy / area - mx * my;
            let val = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += val;
            count += 1;
        }
    }
    total / count as f64
}

/// Mean SSIM over sliding uniform windows, averaged across channels.
pub fn ssim(x: &Array3<f64>, reference: &Array3<f64>) -> Result<f64> {
    if x.dim() != reference.dim() {
        return Err(CoreError::Shape(format!(
            "ssim inputs {:?} vs {:?}",
            x.dim(),
            reference.dim()
        )));
    }
    let (c, _, _) = x.dim();
    let mut acc = 0.0;
    for ch in 0..c {
        acc += ssim_channel(
            &x.index_axis(ndarray::Axis(0), ch),
            &reference.index_axis(ndarray::Axis(0), ch),
            1.0,
        );
    }
    Ok(acc / c as f64)
}

fn sam_at(cube: &Array3<f64>, reference: &Array3<f64>, i: usize, j: usize) -> Result<f64> {
    let bands = cube.dim().0;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for l in 0..bands {
        let a = cube[[l, i, j]];
        let b = reference[[l, i, j]];
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::Invalid(format!(
            "sam undefined for zero spectral vector at ({i}, {j})"
        )));
    }
    let cosine = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(cosine.acos())
}

/// Spectral angle (radians) between the spectra of two cubes at one pixel,
/// or the mean over all pixels when `pixel` is `None`.
pub fn sam(
    cube: &Array3<f64>,
    reference: &Array3<f64>,
    pixel: Option<(usize, usize)>,
) -> Result<f64> {
    if cube.dim() != reference.dim() {
        return Err(CoreError::Shape(format!(
            "sam inputs {:?} vs {:?}",
            cube.dim(),
            reference.dim()
        )));
    }
    let (_, h, w) = cube.dim();
    match pixel {
        Some((i, j)) => {
            if i >= h || j >= w {
                return Err(CoreError::Invalid(format!("pixel ({i}, {j}) out of range")));
            }
            sam_at(cube, reference, i, j)
        }
        None => {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    acc += sam_at(cube, reference, i, j)?;
                }
            }
            Ok(acc / (h * w) as f64)
        }
    }
}

/// PSNR/SSIM between a reconstruction and its target using the convention
/// applied throughout training: MRI compares magnitude images, the other
/// modalities compare all channels; peak 1.0 for normalized data.
pub fn scene_quality(recon: &SceneTensor, target: &SceneTensor) -> Result<(f64, f64)> {
    match target.modality {
        Modality::Mri => {
            let mag = |s: &SceneTensor| -> Array3<f64> {
                let (_, h, w) = s.data.dim();
                let mut out = Array3::zeros((1, h, w));
                for i in 0..h {
                    for j in 0..w {
                        out[[0, i, j]] =
                            (s.data[[0, i, j]].powi(2) + s.data[[1, i, j]].powi(2)).sqrt();
                    }
                }
                out
            };
            let rm = mag(recon);
            let tm = mag(target);
            Ok((psnr(&rm, &tm, 1.0)?, ssim(&rm, &tm)?))
        }
        _ => Ok((
            psnr(&recon.data, &target.data, 1.0)?,
            ssim(&recon.data, &target.data)?,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_examples() {
        let x = Array3::from_elem((1, 4, 4), 0.5);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        // MSE 0.01 at peak 1 -> exactly 20 dB.
        let mut y = x.clone();
        y.mapv_inplace(|v| v + 0.1);
        let p = psnr(&x, &y, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-12);
        assert!(psnr(&x, &y, 0.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array3::from_shape_fn((1, 16, 16), |_| rng.gen_range(0.0..1.0));
        let mut last = f64::INFINITY;
        for level in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let noisy = x.mapv(|v| v + level * rng.gen_range(-1.0..1.0f64));
            let p = psnr(&noisy, &x, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array3::from_shape_fn((2, 12, 12), |_| rng.gen_range(0.0..1.0));
        let s = ssim(&x, &x).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let y = x.mapv(|v| 1.0 - v);
        assert!(ssim(&x, &y).unwrap() < 1.0);
    }

    #[test]
    fn sam_examples() {
        let mut a = Array3::zeros((2, 1, 1));
        a[[0, 0, 0]] = 1.0;
        let mut b = Array3::zeros((2, 1, 1));
        b[[1, 0, 0]] = 1.0;
        // Orthogonal two-band spectra: pi/2.
        let angle = sam(&a, &b, Some((0, 0))).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(sam(&a, &a, None).unwrap(), 0.0);
        let zero = Array3::zeros((2, 1, 1));
        assert!(sam(&a, &zero, Some((0, 0))).is_err());
    }
}
