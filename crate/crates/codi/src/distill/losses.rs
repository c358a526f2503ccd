//! Knowledge-transfer loss functions.
//!
//! Batch convention: squared norms are summed over the batch and divided by
//! `B`. The Gram-alignment losses have no per-sample dependence, so their
//! `1/B` factor divides a single squared Frobenius norm.

use super::DistillPlan;
use crate::decoder::FeatureMap;
use crate::error::{CoreError, Result};
use crate::fourier::fft2_ortho;
use ndarray::{Array2, Array3};
use num_complex::Complex64;

/// Mean over the batch of per-sample squared reconstruction errors.
pub fn task_loss(recons: &[Array3<f64>], targets: &[Array3<f64>]) -> Result<f64> {
    if recons.len() != targets.len() || recons.is_empty() {
        return Err(CoreError::Shape("batch lengths differ or empty".into()));
    }
    let mut acc = 0.0;
    for (r, t) in recons.iter().zip(targets.iter()) {
        if r.dim() != t.dim() {
            return Err(CoreError::Shape(format!(
                "reconstruction {:?} vs target {:?}",
                r.dim(),
                t.dim()
            )));
        }
        acc += r
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(acc / recons.len() as f64)
}

/// Bottleneck feature alignment: `(1/B) sum_i ||T_i - S_i||^2`.
pub fn decoder_kd_loss(student: &[FeatureMap], teacher: &[FeatureMap], b: usize) -> Result<f64> {
    if student.len() != teacher.len() || student.is_empty() || b == 0 {
        return Err(CoreError::Shape("feature batch lengths differ or empty".into()));
    }
    let mut acc = 0.0;
    for (s, t) in student.iter().zip(teacher.iter()) {
        if s.values.dim() != t.values.dim() {
            return Err(CoreError::Shape(format!(
                "bottleneck {:?} vs {:?}: decoder configurations differ",
                s.values.dim(),
                t.values.dim()
            )));
        }
        acc += s
            .values
            .iter()
            .zip(t.values.iter())
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>();
    }
    Ok(acc / b as f64)
}

fn check_mask_grids(student: &Array2<f64>, teacher: &Array2<f64>) -> Result<()> {
    if student.dim() != teacher.dim() {
        return Err(CoreError::Shape(format!(
            "mask grids {:?} vs {:?}",
            student.dim(),
            teacher.dim()
        )));
    }
    Ok(())
}

/// Sum over the batch of `|F x|^2` grids; the shared ingredient of the MRI
/// encoder loss and its gradient.
fn kspace_power_sum(batch: &[Array2<Complex64>], grid: (usize, usize)) -> Result<Array2<f64>> {
    let mut power = Array2::<f64>::zeros(grid);
    for x in batch {
        if x.dim() != grid {
            return Err(CoreError::Shape(format!(
                "scene grid {:?} vs mask grid {:?}",
                x.dim(),
                grid
            )));
        }
        let fx = fft2_ortho(x);
        for (p, v) in power.iter_mut().zip(fx.iter()) {
            *p += v.norm_sqr();
        }
    }
    Ok(power)
}

/// MRI encoder loss: `(1/B) sum_i ||F^H Phi_s F x_i - F^H Phi_t F x_i||^2`.
/// With the orthonormal transform this equals
/// `(1/B) sum_k (Phi_s - Phi_t)_k^2 sum_i |F x_i|_k^2`.
pub fn mri_encoder_loss(
    student_mask: &Array2<f64>,
    teacher_mask: &Array2<f64>,
    batch: &[Array2<Complex64>],
    b: usize,
) -> Result<f64> {
    check_mask_grids(student_mask, teacher_mask)?;
    if batch.is_empty() || b == 0 {
        return Err(CoreError::Shape("empty batch".into()));
    }
    let power = kspace_power_sum(batch, student_mask.dim())?;
    let mut acc = 0.0;
    for ((s, t), p) in student_mask
        .iter()
        .zip(teacher_mask.iter())
        .zip(power.iter())
    {
        let d = s - t;
        acc += d * d * p;
    }
    Ok(acc / b as f64)
}

/// Gradient of [`mri_encoder_loss`] with respect to the student mask:
/// `(2/B) (Phi_s - Phi_t) .* sum_i |F x_i|^2`. Passes to the latent weights
/// through the straight-through rule; the frozen teacher receives nothing.
pub fn mri_encoder_loss_grad(
    student_mask: &Array2<f64>,
    teacher_mask: &Array2<f64>,
    batch: &[Array2<Complex64>],
    b: usize,
) -> Result<Array2<f64>> {
    check_mask_grids(student_mask, teacher_mask)?;
    let power = kspace_power_sum(batch, student_mask.dim())?;
    let scale = 2.0 / b as f64;
    Ok(Array2::from_shape_fn(student_mask.dim(), |idx| {
        scale * (student_mask[idx] - teacher_mask[idx]) * power[idx]
    }))
}

/// SPC encoder loss: `(1/B) ||W_s^T W_s - A_t^T A_t||_F^2` over the n x n
/// Gram matrices. `student_rows` is the pre-binarization matrix.
pub fn spc_encoder_loss(
    student_rows: &Array2<f64>,
    teacher_rows: &Array2<f64>,
    b: usize,
) -> Result<f64> {
    if student_rows.ncols() != teacher_rows.ncols() {
        return Err(CoreError::Shape(format!(
            "column counts {} vs {}",
            student_rows.ncols(),
            teacher_rows.ncols()
        )));
    }
    if b == 0 {
        return Err(CoreError::Shape("batch size must be positive".into()));
    }
    let diff = gram_diff(student_rows, teacher_rows);
    Ok(diff.iter().map(|v| v * v).sum::<f64>() / b as f64)
}

fn gram_diff(student_rows: &Array2<f64>, teacher_rows: &Array2<f64>) -> Array2<f64> {
    let gs = student_rows.t().dot(student_rows);
    let gt = teacher_rows.t().dot(teacher_rows);
    gs - gt
}

/// Gradient of [`spc_encoder_loss`] with respect to the student rows:
/// `(4/B) W_s (W_s^T W_s - A_t^T A_t)`.
pub fn spc_encoder_loss_grad(
    student_rows: &Array2<f64>,
    teacher_rows: &Array2<f64>,
    b: usize,
) -> Result<Array2<f64>> {
    if student_rows.ncols() != teacher_rows.ncols() {
        return Err(CoreError::Shape(format!(
            "column counts {} vs {}",
            student_rows.ncols(),
            teacher_rows.ncols()
        )));
    }
    let diff = gram_diff(student_rows, teacher_rows);
    Ok(student_rows.dot(&diff) * (4.0 / b as f64))
}

/// CASSI encoder loss on diagonalized apertures: the Gram difference reduces
/// elementwise to `sum_s W_s^2 - sum_s Phi_t_s^2`, so the loss is
/// `(1/B) sum_ij (sum_s W_s[ij]^2 - sum_s Phi_t_s[ij]^2)^2`. Snapshot counts
/// may differ (the teacher may hold more); spatial shapes must match.
pub fn cassi_encoder_loss(
    student_cas: &Array3<f64>,
    teacher_cas: &Array3<f64>,
    b: usize,
) -> Result<f64> {
    let diff = cassi_sq_diff(student_cas, teacher_cas)?;
    if b == 0 {
        return Err(CoreError::Shape("batch size must be positive".into()));
    }
    Ok(diff.iter().map(|v| v * v).sum::<f64>() / b as f64)
}

fn cassi_sq_diff(student_cas: &Array3<f64>, teacher_cas: &Array3<f64>) -> Result<Array2<f64>> {
    let (_, sn, sm) = student_cas.dim();
    let (_, tn, tm) = teacher_cas.dim();
    if (sn, sm) != (tn, tm) {
        return Err(CoreError::Shape(format!(
            "aperture shapes ({sn}, {sm}) vs ({tn}, {tm})"
        )));
    }
    let mut diff = Array2::<f64>::zeros((sn, sm));
    for i in 0..sn {
        for j in 0..sm {
            let s2: f64 = (0..student_cas.dim().0)
                .map(|s| student_cas[[s, i, j]] * student_cas[[s, i, j]])
                .sum();
            let t2: f64 = (0..teacher_cas.dim().0)
                .map(|s| teacher_cas[[s, i, j]] * teacher_cas[[s, i, j]])
                .sum();
            diff[[i, j]] = s2 - t2;
        }
    }
    Ok(diff)
}

/// Gradient of [`cassi_encoder_loss`] with respect to the student apertures:
/// `(4/B) (sum_s W_s^2 - sum_s Phi_t_s^2) .* W_s` per snapshot.
pub fn cassi_encoder_loss_grad(
    student_cas: &Array3<f64>,
    teacher_cas: &Array3<f64>,
    b: usize,
) -> Result<Array3<f64>> {
    let diff = cassi_sq_diff(student_cas, teacher_cas)?;
    let scale = 4.0 / b as f64;
    Ok(Array3::from_shape_fn(student_cas.dim(), |(s, i, j)| {
        scale * diff[[i, j]] * student_cas[[s, i, j]]
    }))
}

/// Unweighted loss components of one step. `reg_tau` carries the already
/// weighted transmittance penalty `tau * R_tau`; `mu_l2` is the raw decoder
/// parameter norm for the explicit-regularizer mode (omitted when weight
/// decay lives in the optimizer).
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub task: f64,
    pub dec: f64,
    pub enc: f64,
    pub reg_tau: f64,
    pub mu_l2: Option<f64>,
}

/// Assemble the total objective
/// `lambda1 task + lambda2 dec + lambda3 enc + tau R_tau (+ mu ||Theta||^2)`.
pub fn kd_total_loss(parts: &LossParts, plan: &DistillPlan) -> Result<f64> {
    plan.validate()?;
    let mut total = plan.lambda1 * parts.task
        + plan.lambda2 * parts.dec
        + plan.lambda3() * parts.enc
        + parts.reg_tau;
    if let Some(l2) = parts.mu_l2 {
        total += plan.weight_decay * l2;
    }
    Ok(total)
}
