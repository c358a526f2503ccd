//! Single-disperser coded aperture snapshot spectral imager.
//!
//! Per snapshot, every spectral band is modulated by the coded aperture and
//! sheared across the detector: band `l` lands shifted by `l` columns, so a
//! scene of shape (L, N, M) produces a detector of shape (N, M + L - 1).
//! Multi-snapshot acquisitions stack one detector per aperture. Binary
//! apertures use the Heaviside alphabet {0, 1}.

use super::{binarize, BinarizeMode, MeasValues, Measurement, Modality, SceneTensor};
use crate::error::{CoreError, Result};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CassiEncoder {
    /// Latent coded apertures, shape (snapshots, N, M).
    pub weights: Array3<f64>,
    pub mode: BinarizeMode,
    /// Number of spectral bands the operator expects.
    pub bands: usize,
}

impl CassiEncoder {
    pub fn seeded(
        rows: usize,
        cols: usize,
        bands: usize,
        snapshots: usize,
        mode: BinarizeMode,
        seed: u64,
    ) -> Result<Self> {
        if bands == 0 {
            return Err(CoreError::Config("cassi needs >= 1 band".into()));
        }
        if snapshots == 0 {
            return Err(CoreError::Config("cassi needs >= 1 snapshot".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Array3::from_shape_fn((snapshots, rows, cols), |_| rng.gen_range(-0.5..0.5));
        Ok(CassiEncoder {
            weights,
            mode,
            bands,
        })
    }

    /// Fix the apertures to a given stack (e.g. a blue-noise pattern).
    pub fn with_apertures(apertures: Array3<f64>, bands: usize, mode: BinarizeMode) -> Self {
        let weights = match mode {
            BinarizeMode::Heaviside => apertures.mapv(|v| v - 0.5),
            _ => apertures,
        };
        CassiEncoder {
            weights,
            mode,
            bands,
        }
    }

    pub fn snapshots(&self) -> usize {
        self.weights.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let (_, n, m) = self.weights.dim();
        (n, m)
    }

    pub fn scene_shape(&self) -> (usize, usize, usize) {
        let (n, m) = self.spatial();
        (self.bands, n, m)
    }

    pub fn detector_width(&self) -> usize {
        let (_, m) = self.spatial();
        m + self.bands - 1
    }

    pub fn measurement_len(&self) -> usize {
        let (n, _) = self.spatial();
        self.snapshots() * n * self.detector_width()
    }

    /// Deployed apertures `Phi = binarize(W)`.
    pub fn apertures(&self) -> Array3<f64> {
        binarize(self.mode, &self.weights)
    }

    pub fn forward(&self, x: &SceneTensor) -> Result<Measurement> {
        let (bands, n, m) = x.data.dim();
        let (wn, wm) = self.spatial();
        if bands != self.bands || n != wn || m != wm {
            return Err(CoreError::Shape(format!(
                "scene {:?} vs aperture ({wn}, {wm}) with {} bands",
                x.data.dim(),
                self.bands
            )));
        }
        let phi = self.apertures();
        let dw = self.detector_width();
        let mut values = Vec::with_capacity(self.measurement_len());
        for s in 0..self.snapshots() {
            let mut det = Array2::<f64>::zeros((n, dw));
            for l in 0..bands {
                for i in 0..n {
                    for j in 0..m {
                        det[[i, j + l]] += phi[[s, i, j]] * x.data[[l, i, j]];
                    }
                }
            }
            values.extend(det.iter().cloned());
        }
        Ok(Measurement {
            modality: Modality::Cassi,
            values: MeasValues::Real(Array1::from_vec(values)),
            snr_db: None,
        })
    }

    pub fn adjoint(&self, y: &Measurement) -> Result<SceneTensor> {
        let vals = match &y.values {
            MeasValues::Real(v) => v,
            MeasValues::Complex(_) => {
                return Err(CoreError::Invalid("cassi measurements are real".into()))
            }
        };
        let (n, m) = self.spatial();
        let dw = self.detector_width();
        let phi = self.apertures();
        let mut out = Array3::<f64>::zeros((self.bands, n, m));
        for s in 0..self.snapshots() {
            let base = s * n * dw;
            for l in 0..self.bands {
                for i in 0..n {
                    for j in 0..m {
                        out[[l, i, j]] += phi[[s, i, j]] * vals[base + i * dw + (j + l)];
                    }
                }
            }
        }
        SceneTensor::new(Modality::Cassi, out)
    }

    pub fn backproject(&self, x: &SceneTensor) -> Result<SceneTensor> {
        let y = self.forward(x)?;
        self.adjoint(&y)
    }

    /// Gradient with respect to the deployed apertures for
    /// `g = dL/d(backproject(x))`. With `D_s` the detector of `x` under
    /// aperture `s` and `G_s` the detector of `g`, the product rule over the
    /// two aperture factors gives
    /// `dPhi_s[i,j] = sum_l g[l,i,j] D_s[i,j+l] + sum_l x[l,i,j] G_s[i,j+l]`.
    pub fn backproject_grad(&self, x: &SceneTensor, g: &SceneTensor) -> Result<Array3<f64>> {
        let (bands, n, m) = x.data.dim();
        let phi = self.apertures();
        let dw = self.detector_width();
        let mut grad = Array3::<f64>::zeros(self.weights.dim());
        for s in 0..self.snapshots() {
            let mut det_x = Array2::<f64>::zeros((n, dw));
            let mut det_g = Array2::<f64>::zeros((n, dw));
            for l in 0..bands {
                for i in 0..n {
                    for j in 0..m {
                        det_x[[i, j + l]] += phi[[s, i, j]] * x.data[[l, i, j]];
                        det_g[[i, j + l]] += phi[[s, i, j]] * g.data[[l, i, j]];
                    }
                }
            }
            for i in 0..n {
                for j in 0..m {
                    let mut acc = 0.0;
                    for l in 0..bands {
                        acc += g.data[[l, i, j]] * det_x[[i, j + l]];
                        acc += x.data[[l, i, j]] * det_g[[i, j + l]];
                    }
                    grad[[s, i, j]] = acc;
                }
            }
        }
        Ok(grad)
    }

    /// Dense sensing matrix, rows = stacked detectors, columns = vec(scene)
    /// in (band, row, col) order. Intended for small instances and oracles.
    pub fn dense_matrix(&self) -> Array2<f64> {
        let (n, m) = self.spatial();
        let bands = self.bands;
        let dw = self.detector_width();
        let phi = self.apertures();
        let rows = self.measurement_len();
        let cols = bands * n * m;
        let mut a = Array2::<f64>::zeros((rows, cols));
        for s in 0..self.snapshots() {
            for l in 0..bands {
                for i in 0..n {
                    for j in 0..m {
                        let r = s * n * dw + i * dw + (j + l);
                        let c = l * n * m + i * m + j;
                        a[[r, c]] = phi[[s, i, j]];
                    }
                }
            }
        }
        a
    }
}
