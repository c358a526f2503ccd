//! Single-coil MRI: an undersampling mask over k-space composed with the
//! orthonormal 2-D Fourier transform, `A = Phi F`.
//!
//! The mask is kept as a binary grid applied pointwise in k-space, which is
//! equivalent to the row-selection matrix form without materializing an
//! `n x n` operator. Measurements are the selected k-space samples in
//! row-major mask order, so `backproject(x) = F^H diag(phi) F x`.

use super::{
    binarize, BinarizeMode, MeasValues, Measurement, Modality, SceneTensor,
};
use crate::error::{CoreError, Result};
use crate::fourier::{fft2_ortho, ifft2_ortho};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct MriEncoder {
    /// Latent mask weights on the k-space grid (n x n).
    pub weights: Array2<f64>,
    pub mode: BinarizeMode,
    /// Target acceleration factor; the transmittance regularizer pulls the
    /// mask toward `1/accel` active entries.
    pub accel: f64,
}

impl MriEncoder {
    /// Seeded latent weights. The spread is kept narrow (entries within
    /// +-0.1) so adaptive steps of size ~lr can actually flip mask entries
    /// within a desk-scale budget, and the distribution is shifted so the
    /// deployed mask starts at the target transmittance `1/accel`; the
    /// unconstrained phase explores freely from that feasible point.
    pub fn seeded(grid: usize, accel: f64, mode: BinarizeMode, seed: u64) -> Result<Self> {
        if accel <= 0.0 {
            return Err(CoreError::Config(format!(
                "acceleration factor must be positive, got {accel}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Array2::from_shape_fn((grid, grid), |_| rng.gen_range(-0.1..0.1));
        if mode == BinarizeMode::Heaviside {
            let mut sorted: Vec<f64> = weights.iter().cloned().collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let keep = ((grid * grid) as f64 / accel).round() as usize;
            let cut = sorted[(sorted.len() - keep.clamp(1, sorted.len())).min(sorted.len() - 1)];
            weights.mapv_inplace(|v| v - cut);
        }
        Ok(MriEncoder {
            weights,
            mode,
            accel,
        })
    }

    pub fn with_mask(mask: Array2<f64>, accel: f64) -> Self {
        MriEncoder {
            // Heaviside of (mask - 0.5) reproduces a given binary mask.
            weights: mask.mapv(|v| v - 0.5),
            mode: BinarizeMode::Heaviside,
            accel,
        }
    }

    pub fn grid(&self) -> usize {
        self.weights.nrows()
    }

    /// Deployed mask `Phi = binarize(W)`.
    pub fn mask(&self) -> Array2<f64> {
        binarize(self.mode, &self.weights)
    }

    /// Fraction of active entries in the deployed mask.
    pub fn transmittance(&self) -> f64 {
        let m = self.mask();
        m.sum() / m.len() as f64
    }

    pub fn measurement_len(&self) -> usize {
        match self.mode {
            // Selected-sample count for a binary mask.
            BinarizeMode::Heaviside | BinarizeMode::Sign => {
                self.mask().iter().filter(|&&v| v != 0.0).count()
            }
            // A real-valued mask weights every sample; keep the full grid.
            BinarizeMode::Real => self.weights.len(),
        }
    }

    pub fn forward(&self, x: &SceneTensor) -> Result<Measurement> {
        let img = x.as_complex()?;
        if img.dim() != self.weights.dim() {
            return Err(CoreError::Shape(format!(
                "mask grid {:?} vs image grid {:?}",
                self.weights.dim(),
                img.dim()
            )));
        }
        let kspace = fft2_ortho(&img);
        let mask = self.mask();
        let values: Vec<Complex64> = match self.mode {
            BinarizeMode::Real => kspace
                .iter()
                .zip(mask.iter())
                .map(|(k, &m)| k * m)
                .collect(),
            _ => kspace
                .iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m != 0.0)
                .map(|(k, &m)| k * m)
                .collect(),
        };
        Ok(Measurement {
            modality: Modality::Mri,
            values: MeasValues::Complex(Array1::from_vec(values)),
            snr_db: None,
        })
    }

    pub fn adjoint(&self, y: &Measurement) -> Result<SceneTensor> {
        let vals = match &y.values {
            MeasValues::Complex(v) => v,
            MeasValues::Real(_) => {
                return Err(CoreError::Invalid("mri measurements are complex".into()))
            }
        };
        let mask = self.mask();
        let (h, w) = mask.dim();
        let mut kspace = Array2::from_elem((h, w), Complex64::new(0.0, 0.0));
        match self.mode {
            BinarizeMode::Real => {
                for (idx, (k, &m)) in kspace.iter_mut().zip(mask.iter()).enumerate() {
                    *k = vals[idx] * m;
                }
            }
            _ => {
                // Zero-fill the selected samples back onto the grid.
                let mut it = vals.iter();
                for (k, &m) in kspace.iter_mut().zip(mask.iter()) {
                    if m != 0.0 {
                        *k = *it.next().expect("length checked") * m;
                    }
                }
            }
        }
        let img = ifft2_ortho(&kspace);
        Ok(SceneTensor::from_complex(&img))
    }

    /// `A^T A x`. For a binary mask the row-selection composition reduces to
    /// a single pointwise multiply, `F^H diag(phi) F x`; a real-valued mask
    /// weights each sample in both the forward and adjoint passes, giving
    /// `F^H diag(phi^2) F x`.
    pub fn backproject(&self, x: &SceneTensor) -> Result<SceneTensor> {
        let img = x.as_complex()?;
        if img.dim() != self.weights.dim() {
            return Err(CoreError::Shape(format!(
                "mask grid {:?} vs image grid {:?}",
                self.weights.dim(),
                img.dim()
            )));
        }
        let mask = self.mask();
        let mut kspace = fft2_ortho(&img);
        match self.mode {
            BinarizeMode::Real => {
                for (k, &m) in kspace.iter_mut().zip(mask.iter()) {
                    *k *= m * m;
                }
            }
            _ => {
                for (k, &m) in kspace.iter_mut().zip(mask.iter()) {
                    *k *= m;
                }
            }
        }
        let out = ifft2_ortho(&kspace);
        Ok(SceneTensor::from_complex(&out))
    }

    /// Gradient of a loss with respect to the mask given
    /// `g = dL/d(backproject(x))`. Under the selection model (binary masks)
    /// the mask enters once and `dPhi = Re(Fx .* conj(Fg))`; under a
    /// real-valued mask the product rule adds the factor `2 phi`.
    pub fn backproject_grad(&self, x: &SceneTensor, g: &SceneTensor) -> Result<Array2<f64>> {
        let fx = fft2_ortho(&x.as_complex()?);
        let fg = fft2_ortho(&g.as_complex()?);
        let base = Array2::from_shape_fn(fx.dim(), |idx| (fx[idx] * fg[idx].conj()).re);
        Ok(match self.mode {
            BinarizeMode::Real => {
                let mask = self.mask();
                Array2::from_shape_fn(base.dim(), |idx| 2.0 * mask[idx] * base[idx])
            }
            _ => base,
        })
    }
}
