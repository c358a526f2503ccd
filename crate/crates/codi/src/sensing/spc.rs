//! Single-pixel camera: each measurement is the inner product of one coded
//! aperture with the vectorized scene, `y = A vec(x)` with `A` the stacked
//! row-vectorized apertures. Binary apertures use the sign alphabet {-1, 1}.

use super::{binarize, BinarizeMode, MeasValues, Measurement, Modality, SceneTensor};
use crate::error::{CoreError, Result};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SpcEncoder {
    /// Latent aperture rows, shape (m, n) with n = side * side.
    pub weights: Array2<f64>,
    pub mode: BinarizeMode,
    /// Scene side length; n = side^2.
    pub side: usize,
}

impl SpcEncoder {
    pub fn seeded(side: usize, rows: usize, mode: BinarizeMode, seed: u64) -> Result<Self> {
        if rows == 0 {
            return Err(CoreError::Config("spc encoder needs at least one row".into()));
        }
        let n = side * side;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Unit variance: real-valued rows carry the same expected norm as the
        // sign alphabet's rows, so teacher and student Gram matrices live on
        // one scale.
        let bound = 3f64.sqrt();
        let weights = Array2::from_shape_fn((rows, n), |_| rng.gen_range(-bound..bound));
        Ok(SpcEncoder { weights, mode, side })
    }

    /// Build an encoder from explicit rows (e.g. a Hadamard subset).
    pub fn from_rows(rows: Array2<f64>, side: usize, mode: BinarizeMode) -> Result<Self> {
        if rows.ncols() != side * side {
            return Err(CoreError::Shape(format!(
                "row length {} != n = {}",
                rows.ncols(),
                side * side
            )));
        }
        Ok(SpcEncoder {
            weights: rows,
            mode,
            side,
        })
    }

    pub fn rows(&self) -> usize {
        self.weights.nrows()
    }

    pub fn img_side(&self) -> usize {
        self.side
    }

    /// m/n, the fraction of measurements relative to the signal dimension.
    pub fn compression_ratio(&self) -> f64 {
        self.rows() as f64 / (self.side * self.side) as f64
    }

    /// Deployed sensing matrix `A = binarize(W)`.
    pub fn matrix(&self) -> Array2<f64> {
        binarize(self.mode, &self.weights)
    }

    fn vec_scene(x: &SceneTensor) -> Result<Array1<f64>> {
        let (_, h, w) = x.data.dim();
        Ok(Array1::from_iter(x.data.iter().cloned()).into_shape_with_order(h * w)?)
    }

    pub fn forward(&self, x: &SceneTensor) -> Result<Measurement> {
        let v = Self::vec_scene(x)?;
        if v.len() != self.weights.ncols() {
            return Err(CoreError::Shape(format!(
                "scene length {} != row length {}",
                v.len(),
                self.weights.ncols()
            )));
        }
        let a = self.matrix();
        Ok(Measurement {
            modality: Modality::Spc,
            values: MeasValues::Real(a.dot(&v)),
            snr_db: None,
        })
    }

    pub fn adjoint(&self, y: &Measurement) -> Result<SceneTensor> {
        let vals = match &y.values {
            MeasValues::Real(v) => v,
            MeasValues::Complex(_) => {
                return Err(CoreError::Invalid("spc measurements are real".into()))
            }
        };
        let a = self.matrix();
        let back = a.t().dot(vals);
        let data = Array3::from_shape_vec((1, self.side, self.side), back.to_vec())?;
        SceneTensor::new(Modality::Spc, data)
    }

    pub fn backproject(&self, x: &SceneTensor) -> Result<SceneTensor> {
        let y = self.forward(x)?;
        self.adjoint(&y)
    }

    /// Gradient with respect to the deployed matrix for
    /// `g = dL/d(backproject(x))`: with `u = A x`,
    /// `dA = u g^T + (A g) x^T`.
    pub fn backproject_grad(&self, x: &SceneTensor, g: &SceneTensor) -> Result<Array2<f64>> {
        let xv = Self::vec_scene(x)?;
        let gv = Self::vec_scene(g)?;
        let a = self.matrix();
        let u = a.dot(&xv);
        let ag = a.dot(&gv);
        let mut grad = Array2::zeros(a.dim());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                grad[[i, j]] = u[i] * gv[j] + ag[i] * xv[j];
            }
        }
        Ok(grad)
    }
}

impl From<ndarray::ShapeError> for CoreError {
    fn from(e: ndarray::ShapeError) -> Self {
        CoreError::Shape(e.to_string())
    }
}
