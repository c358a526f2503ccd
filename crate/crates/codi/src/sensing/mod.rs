//! Differentiable forward models for the three imaging modalities.
//!
//! Each operator maps a scene to coded measurements, `y = A x`, and exposes
//! the exact linear adjoint `A^T` plus the composition `backproject = A^T A`,
//! which is what the reconstruction decoder consumes. Encoders carry latent
//! real weights `W`; the deployed encoder is `binarize(W)` under the
//! operator's mode, and gradients pass through the binarization unchanged
//! (straight-through: `dL/dW = dL/dPhi`).

mod cassi;
mod mri;
mod spc;

pub use cassi::CassiEncoder;
pub use mri::MriEncoder;
pub use spc::SpcEncoder;

use crate::error::{CoreError, Result};
use ndarray::{Array1, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Imaging modality tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Mri,
    Spc,
    Cassi,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Mri => write!(f, "mri"),
            Modality::Spc => write!(f, "spc"),
            Modality::Cassi => write!(f, "cassi"),
        }
    }
}

/// A ground-truth signal: channels x height x width.
///
/// MRI scenes carry 2 channels (real/imaginary parts of a complex image),
/// SPC scenes 1 channel, and spectral scenes one channel per band.
#[derive(Debug, Clone)]
pub struct SceneTensor {
    pub modality: Modality,
    pub data: Array3<f64>,
}

impl SceneTensor {
    pub fn new(modality: Modality, data: Array3<f64>) -> Result<Self> {
        let channels = data.dim().0;
        match modality {
            Modality::Mri if channels != 2 => {
                return Err(CoreError::Shape(format!(
                    "mri scene needs 2 channels, got {channels}"
                )))
            }
            Modality::Spc if channels != 1 => {
                return Err(CoreError::Shape(format!(
                    "spc scene needs 1 channel, got {channels}"
                )))
            }
            Modality::Cassi if channels < 1 => {
                return Err(CoreError::Shape("cassi scene needs >= 1 band".into()))
            }
            _ => {}
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Invalid("scene contains non-finite entries".into()));
        }
        Ok(SceneTensor { modality, data })
    }

    /// View an MRI scene as a complex image.
    pub fn as_complex(&self) -> Result<ndarray::Array2<Complex64>> {
        if self.modality != Modality::Mri {
            return Err(CoreError::Invalid("complex view is mri-only".into()));
        }
        let (_, h, w) = self.data.dim();
        Ok(ndarray::Array2::from_shape_fn((h, w), |(i, j)| {
            Complex64::new(self.data[[0, i, j]], self.data[[1, i, j]])
        }))
    }

    /// Pack a complex image into the two-channel MRI layout.
    pub fn from_complex(img: &ndarray::Array2<Complex64>) -> Self {
        let (h, w) = img.dim();
        let mut data = Array3::zeros((2, h, w));
        for i in 0..h {
            for j in 0..w {
                data[[0, i, j]] = img[[i, j]].re;
                data[[1, i, j]] = img[[i, j]].im;
            }
        }
        SceneTensor {
            modality: Modality::Mri,
            data,
        }
    }
}

/// Encoder binarization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinarizeMode {
    /// Weights used as-is (relaxed, real-valued encoder).
    Real,
    /// Heaviside step: entries in {0, 1}. Tie rule: H(0) = 1.
    Heaviside,
    /// Sign: entries in {-1, 1}. Tie rule: sign(0) = 1.
    Sign,
}

/// Element-wise binarization. The forward value is `H(w)` or `sign(w)`; the
/// backward contract is the straight-through identity, i.e. callers propagate
/// `dL/dPhi` to `W` unchanged.
pub fn binarize_value(mode: BinarizeMode, w: f64) -> f64 {
    match mode {
        BinarizeMode::Real => w,
        BinarizeMode::Heaviside => {
            if w >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        BinarizeMode::Sign => {
            if w >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Binarize a whole array, preserving shape.
pub fn binarize<D: ndarray::Dimension>(
    mode: BinarizeMode,
    w: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    w.mapv(|v| binarize_value(mode, v))
}

/// Straight-through gradient of `binarize`: the Jacobian is treated as the
/// identity, so upstream gradients pass through unchanged.
pub fn ste_grad<D: ndarray::Dimension>(
    d_phi: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    d_phi.clone()
}

/// Measurement values; complex for MRI, real otherwise.
#[derive(Debug, Clone)]
pub enum MeasValues {
    Real(Array1<f64>),
    Complex(Array1<Complex64>),
}

impl MeasValues {
    pub fn len(&self) -> usize {
        match self {
            MeasValues::Real(v) => v.len(),
            MeasValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm_sqr(&self) -> f64 {
        match self {
            MeasValues::Real(v) => v.iter().map(|x| x * x).sum(),
            MeasValues::Complex(v) => v.iter().map(|x| x.norm_sqr()).sum(),
        }
    }
}

/// Coded projections of a scene.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub modality: Modality,
    pub values: MeasValues,
    /// SNR of noise applied to these values, if any.
    pub snr_db: Option<f64>,
}

/// A parameterized sensing operator `A_Phi` with apply/adjoint.
#[derive(Debug, Clone)]
pub enum SensingOperator {
    Mri(MriEncoder),
    Spc(SpcEncoder),
    Cassi(CassiEncoder),
}

impl SensingOperator {
    pub fn modality(&self) -> Modality {
        match self {
            SensingOperator::Mri(_) => Modality::Mri,
            SensingOperator::Spc(_) => Modality::Spc,
            SensingOperator::Cassi(_) => Modality::Cassi,
        }
    }

    /// Scene shape (channels, height, width) this operator acts on.
    pub fn scene_shape(&self) -> (usize, usize, usize) {
        match self {
            SensingOperator::Mri(m) => (2, m.grid(), m.grid()),
            SensingOperator::Spc(s) => (1, s.img_side(), s.img_side()),
            SensingOperator::Cassi(c) => c.scene_shape(),
        }
    }

    /// Declared measurement length.
    pub fn measurement_len(&self) -> usize {
        match self {
            SensingOperator::Mri(m) => m.measurement_len(),
            SensingOperator::Spc(s) => s.rows(),
            SensingOperator::Cassi(c) => c.measurement_len(),
        }
    }

    pub fn forward(&self, x: &SceneTensor) -> Result<Measurement> {
        self.check_scene(x)?;
        match self {
            SensingOperator::Mri(m) => m.forward(x),
            SensingOperator::Spc(s) => s.forward(x),
            SensingOperator::Cassi(c) => c.forward(x),
        }
    }

    pub fn adjoint(&self, y: &Measurement) -> Result<SceneTensor> {
        if y.modality != self.modality() {
            return Err(CoreError::Shape(format!(
                "measurement modality {} does not match operator {}",
                y.modality,
                self.modality()
            )));
        }
        if y.values.len() != self.measurement_len() {
            return Err(CoreError::Shape(format!(
                "measurement length {} does not match operator length {}",
                y.values.len(),
                self.measurement_len()
            )));
        }
        match self {
            SensingOperator::Mri(m) => m.adjoint(y),
            SensingOperator::Spc(s) => s.adjoint(y),
            SensingOperator::Cassi(c) => c.adjoint(y),
        }
    }

    /// `A^T A x`, the decoder's input in every pipeline.
    pub fn backproject(&self, x: &SceneTensor) -> Result<SceneTensor> {
        self.check_scene(x)?;
        match self {
            SensingOperator::Mri(m) => m.backproject(x),
            SensingOperator::Spc(s) => s.backproject(x),
            SensingOperator::Cassi(c) => c.backproject(x),
        }
    }

    /// Gradient of a scalar loss with respect to the deployed encoder, given
    /// the upstream gradient `g = dL/d(backproject(x))`. By the
    /// straight-through contract this is also the gradient with respect to the
    /// latent weights `W`.
    pub fn backproject_grad(&self, x: &SceneTensor, g: &SceneTensor) -> Result<EncoderGrad> {
        self.check_scene(x)?;
        self.check_scene(g)?;
        match self {
            SensingOperator::Mri(m) => Ok(EncoderGrad::Mri(m.backproject_grad(x, g)?)),
            SensingOperator::Spc(s) => Ok(EncoderGrad::Spc(s.backproject_grad(x, g)?)),
            SensingOperator::Cassi(c) => Ok(EncoderGrad::Cassi(c.backproject_grad(x, g)?)),
        }
    }

    /// Flat view of the latent weights.
    pub fn weights(&self) -> &[f64] {
        match self {
            SensingOperator::Mri(m) => m.weights.as_slice().unwrap(),
            SensingOperator::Spc(s) => s.weights.as_slice().unwrap(),
            SensingOperator::Cassi(c) => c.weights.as_slice().unwrap(),
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            SensingOperator::Mri(m) => m.weights.as_slice_mut().unwrap(),
            SensingOperator::Spc(s) => s.weights.as_slice_mut().unwrap(),
            SensingOperator::Cassi(c) => c.weights.as_slice_mut().unwrap(),
        }
    }

    pub fn mode(&self) -> BinarizeMode {
        match self {
            SensingOperator::Mri(m) => m.mode,
            SensingOperator::Spc(s) => s.mode,
            SensingOperator::Cassi(c) => c.mode,
        }
    }

    /// Digest of the latent weights; used to detect frozen-parameter
    /// violations bit-exactly.
    pub fn checksum(&self) -> String {
        crate::io::checksum_f64(self.weights())
    }

    fn check_scene(&self, x: &SceneTensor) -> Result<()> {
        if x.modality != self.modality() {
            return Err(CoreError::Shape(format!(
                "scene modality {} does not match operator {}",
                x.modality,
                self.modality()
            )));
        }
        let want = self.scene_shape();
        if x.data.dim() != want {
            return Err(CoreError::Shape(format!(
                "scene shape {:?} does not match operator {:?}",
                x.data.dim(),
                want
            )));
        }
        Ok(())
    }
}

/// Per-modality encoder gradient, shaped like the latent weights.
#[derive(Debug, Clone)]
pub enum EncoderGrad {
    Mri(ndarray::Array2<f64>),
    Spc(ndarray::Array2<f64>),
    Cassi(Array3<f64>),
}

impl EncoderGrad {
    pub fn as_flat(&self) -> &[f64] {
        match self {
            EncoderGrad::Mri(a) => a.as_slice().unwrap(),
            EncoderGrad::Spc(a) => a.as_slice().unwrap(),
            EncoderGrad::Cassi(a) => a.as_slice().unwrap(),
        }
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        match self {
            EncoderGrad::Mri(a) => a.as_slice_mut().unwrap(),
            EncoderGrad::Spc(a) => a.as_slice_mut().unwrap(),
            EncoderGrad::Cassi(a) => a.as_slice_mut().unwrap(),
        }
    }

    pub fn zeros_like(op: &SensingOperator) -> Self {
        match op {
            SensingOperator::Mri(m) => {
                EncoderGrad::Mri(ndarray::Array2::zeros(m.weights.dim()))
            }
            SensingOperator::Spc(s) => {
                EncoderGrad::Spc(ndarray::Array2::zeros(s.weights.dim()))
            }
            SensingOperator::Cassi(c) => EncoderGrad::Cassi(Array3::zeros(c.weights.dim())),
        }
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &EncoderGrad) {
        let dst = self.as_flat_mut();
        let src = other.as_flat();
        assert_eq!(dst.len(), src.len());
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d += alpha * s;
        }
    }
}

/// Transmittance regularizer pushing a binary mask toward the target
/// acceleration factor: `tau * (sum(Phi)/n - 1/AF)^4`.
pub fn af_regularizer(mask: &ndarray::Array2<f64>, af: f64, tau: f64) -> Result<f64> {
    if af <= 0.0 {
        return Err(CoreError::Config(format!(
            "acceleration factor must be positive, got {af}"
        )));
    }
    let n = mask.len() as f64;
    let gap = mask.sum() / n - 1.0 / af;
    Ok(tau * gap.powi(4))
}

/// Analytic gradient of [`af_regularizer`] with respect to the mask entries.
/// Flows to the latent weights unchanged through the straight-through rule.
pub fn af_regularizer_grad(
    mask: &ndarray::Array2<f64>,
    af: f64,
    tau: f64,
) -> Result<ndarray::Array2<f64>> {
    if af <= 0.0 {
        return Err(CoreError::Config(format!(
            "acceleration factor must be positive, got {af}"
        )));
    }
    let n = mask.len() as f64;
    let gap = mask.sum() / n - 1.0 / af;
    let per_entry = tau * 4.0 * gap.powi(3) / n;
    Ok(ndarray::Array2::from_elem(mask.dim(), per_entry))
}

/// Additive white Gaussian noise at a target SNR (dB), deterministic in the
/// seed. `snr_db = f64::INFINITY` disables noise and returns the input
/// unchanged. The noise variance is chosen so that
/// `10 log10(|y|^2 / E|eta|^2) = snr_db`.
pub fn add_awgn(y: &Measurement, snr_db: f64, seed: u64) -> Result<Measurement> {
    if snr_db.is_nan() {
        return Err(CoreError::Invalid("snr_db must not be NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(y.clone());
    }
    let signal = y.values.norm_sqr();
    if signal == 0.0 {
        return Err(CoreError::Invalid(
            "cannot add noise at a fixed SNR to a zero signal".into(),
        ));
    }
    let m = y.values.len() as f64;
    let noise_power = signal * 10f64.powf(-snr_db / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let values = match &y.values {
        MeasValues::Real(v) => {
            let sigma = (noise_power / m).sqrt();
            MeasValues::Real(v.mapv(|x| {
                let g: f64 = normal.sample(&mut rng);
                x + sigma * g
            }))
        }
        MeasValues::Complex(v) => {
            // Per-entry complex variance noise_power/m, split across re/im.
            let sigma = (noise_power / (2.0 * m)).sqrt();
            MeasValues::Complex(v.mapv(|x| {
                let gr: f64 = normal.sample(&mut rng);
                let gi: f64 = normal.sample(&mut rng);
                x + Complex64::new(sigma * gr, sigma * gi)
            }))
        }
    };
    Ok(Measurement {
        modality: y.modality,
        values,
        snr_db: Some(snr_db),
    })
}
