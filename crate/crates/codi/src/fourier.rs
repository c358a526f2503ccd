//! 2-D discrete Fourier transforms used by the MRI forward model and the
//! coded-aperture spectrum diagnostics.
//!
//! The MRI operator uses the orthonormal convention (scale `1/sqrt(n)` in both
//! directions) so that `ifft2(fft2(x)) == x` and the adjoint of a masked FFT
//! is exactly the zero-filled inverse FFT. The aperture diagnostics use the
//! raw unnormalized transform, for which Parseval reads
//! `sum |F x|^2 = n * sum |x|^2`.

use ndarray::Array2;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

type PlanKey = (usize, bool); // (length, inverse)

static PLANS: Lazy<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut plans = PLANS.lock().unwrap();
    plans
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

fn transform_rows(a: &mut Array2<Complex64>, inverse: bool) {
    let cols = a.ncols();
    let fft = plan(cols, inverse);
    for mut row in a.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        fft.process(slice);
    }
}

fn fft2_with_scale(a: &Array2<Complex64>, inverse: bool, scale: f64) -> Array2<Complex64> {
    let mut out = a.clone();
    transform_rows(&mut out, inverse);
    out = out.reversed_axes().as_standard_layout().to_owned();
    transform_rows(&mut out, inverse);
    out = out.reversed_axes().as_standard_layout().to_owned();
    if scale != 1.0 {
        out.mapv_inplace(|v| v * scale);
    }
    out
}

/// Orthonormal 2-D DFT.
pub fn fft2_ortho(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = (a.nrows() * a.ncols()) as f64;
    fft2_with_scale(a, false, 1.0 / n.sqrt())
}

/// Orthonormal inverse 2-D DFT; exact inverse of [`fft2_ortho`].
pub fn ifft2_ortho(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = (a.nrows() * a.ncols()) as f64;
    fft2_with_scale(a, true, 1.0 / n.sqrt())
}

/// Unnormalized 2-D DFT.
pub fn fft2_raw(a: &Array2<Complex64>) -> Array2<Complex64> {
    fft2_with_scale(a, false, 1.0)
}

/// Swap quadrants so the zero-frequency bin sits at the center of the grid.
pub fn fftshift2(a: &Array2<f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            out[[(i + h / 2) % h, (j + w / 2) % w]] = a[[i, j]];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(n: usize, m: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, m), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn ortho_roundtrip() {
        let a = random_grid(8, 8, 3);
        let back = ifft2_ortho(&fft2_ortho(&a));
        for (x, y) in a.iter().zip(back.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn ortho_preserves_energy() {
        let a = random_grid(16, 16, 4);
        let f = fft2_ortho(&a);
        let ea: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        let ef: f64 = f.iter().map(|v| v.norm_sqr()).sum();
        assert!((ea - ef).abs() < 1e-10 * ea);
    }

    #[test]
    fn matches_dense_dft() {
        // Oracle: explicit O(n^2) DFT sum with the orthonormal scale.
        let n = 6;
        let a = random_grid(n, n, 5);
        let f = fft2_ortho(&a);
        for k in 0..n {
            for l in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let ph = -2.0 * std::f64::consts::PI
                            * ((k * i) as f64 + (l * j) as f64)
                            / n as f64;
                        acc += a[[i, j]] * Complex64::from_polar(1.0, ph);
                    }
                }
                acc /= n as f64;
                assert!((acc - f[[k, l]]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn shift_centers_dc() {
        let mut a = Array2::zeros((4, 4));
        a[[0, 0]] = 1.0;
        let s = fftshift2(&a);
        assert_eq!(s[[2, 2]], 1.0);
    }
}
