//! The training engine: end-to-end optimization (teacher and baseline) and
//! student distillation under a frozen teacher.
//!
//! Per batch, every sample's forward/backward runs independently (in
//! parallel); gradients are folded in sample order so runs are
//! bit-reproducible. The decoder step receives `lambda1 dL_task/dTheta +
//! lambda2 dL_DEC/dTheta` (weight decay decoupled in the optimizer); the
//! encoder step receives `lambda1 dL_task/dPhi + lambda2 dL_DEC/dPhi +
//! lambda3 dL_ENC/dPhi + tau dR_tau/dPhi`. The encoder-alignment loss never
//! touches decoder parameters by construction.

use super::losses::{
    cassi_encoder_loss, cassi_encoder_loss_grad, mri_encoder_loss, mri_encoder_loss_grad,
    spc_encoder_loss, spc_encoder_loss_grad,
};
use super::{DistillPlan, EpochRecord, Role, TrainedSystem};
use crate::analysis::scene_quality;
use crate::decoder::DecoderNet;
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::optim::AdamState;
use crate::par;
use crate::sensing::{af_regularizer, af_regularizer_grad, EncoderGrad, SceneTensor, SensingOperator};
use ndarray::Array3;

/// Loss-term weights of one training run; end-to-end training is
/// `{task: 1, dec: 0, enc: 0}`.
#[derive(Debug, Clone, Copy)]
pub struct StepWeights {
    pub task: f64,
    pub dec: f64,
    pub enc: f64,
}

impl StepWeights {
    pub fn e2e() -> Self {
        StepWeights {
            task: 1.0,
            dec: 0.0,
            enc: 0.0,
        }
    }

    pub fn from_plan(plan: &DistillPlan) -> Self {
        StepWeights {
            task: plan.lambda1,
            dec: plan.lambda2,
            enc: plan.lambda3(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seeded per-epoch shuffle, independent of everything but (seed, epoch).
fn shuffle_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut state = splitmix64(seed ^ (epoch as u64 + 1).wrapping_mul(0xD1B54A32D192ED03));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        state = splitmix64(state);
        let j = (state % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

struct SampleOut {
    task: f64,
    dec: f64,
    d_theta: Vec<f64>,
    d_phi: EncoderGrad,
}

fn sample_pass(
    op: &SensingOperator,
    net: &DecoderNet,
    x: &SceneTensor,
    b: usize,
    weights: &StepWeights,
    teacher: Option<(&SensingOperator, &DecoderNet)>,
) -> Result<SampleOut> {
    let bp = op.backproject(x)?;
    let (recon, bottleneck, tape) = net.forward_cached(&bp.data)?;
    let task: f64 = recon
        .iter()
        .zip(x.data.iter())
        .map(|(a, t)| (a - t) * (a - t))
        .sum();
    let task_scale = 2.0 * weights.task / b as f64;
    let d_recon = Array3::from_shape_fn(recon.dim(), |idx| {
        task_scale * (recon[idx] - x.data[idx])
    });
    let mut dec = 0.0;
    let mut d_bott: Option<Array3<f64>> = None;
    if let Some((t_op, t_net)) = teacher {
        let t_bp = t_op.backproject(x)?;
        let (_, t_features) = t_net.decode(&t_bp)?;
        if t_features.values.dim() != bottleneck.values.dim() {
            return Err(CoreError::Shape(format!(
                "bottleneck {:?} vs teacher {:?}: decoder configurations differ",
                bottleneck.values.dim(),
                t_features.values.dim()
            )));
        }
        dec = bottleneck
            .values
            .iter()
            .zip(t_features.values.iter())
            .map(|(s, t)| (s - t) * (s - t))
            .sum();
        let dec_scale = 2.0 * weights.dec / b as f64;
        d_bott = Some(Array3::from_shape_fn(bottleneck.values.dim(), |idx| {
            dec_scale * (bottleneck.values[idx] - t_features.values[idx])
        }));
    }
    let (d_theta, d_input) = net.backward(&tape, &d_recon, d_bott.as_ref());
    let d_input_scene = SceneTensor {
        modality: x.modality,
        data: d_input,
    };
    let d_phi = op.backproject_grad(x, &d_input_scene)?;
    Ok(SampleOut {
        task,
        dec,
        d_theta,
        d_phi,
    })
}

/// Encoder-alignment loss and its gradient for the current batch.
fn encoder_alignment(
    op: &SensingOperator,
    teacher_op: &SensingOperator,
    batch: &[&SceneTensor],
    b: usize,
) -> Result<(f64, EncoderGrad)> {
    match (op, teacher_op) {
        (SensingOperator::Mri(s), SensingOperator::Mri(t)) => {
            let student_mask = s.mask();
            let teacher_mask = t.mask();
            let complex: Vec<ndarray::Array2<num_complex::Complex64>> = batch
                .iter()
                .map(|x| x.as_complex())
                .collect::<Result<_>>()?;
            let loss = mri_encoder_loss(&student_mask, &teacher_mask, &complex, b)?;
            let grad = mri_encoder_loss_grad(&student_mask, &teacher_mask, &complex, b)?;
            Ok((loss, EncoderGrad::Mri(grad)))
        }
        (SensingOperator::Spc(s), SensingOperator::Spc(t)) => {
            let teacher_rows = t.matrix();
            let loss = spc_encoder_loss(&s.weights, &teacher_rows, b)?;
            let grad = spc_encoder_loss_grad(&s.weights, &teacher_rows, b)?;
            Ok((loss, EncoderGrad::Spc(grad)))
        }
        (SensingOperator::Cassi(s), SensingOperator::Cassi(t)) => {
            let teacher_cas = t.apertures();
            let loss = cassi_encoder_loss(&s.weights, &teacher_cas, b)?;
            let grad = cassi_encoder_loss_grad(&s.weights, &teacher_cas, b)?;
            Ok((loss, EncoderGrad::Cassi(grad)))
        }
        _ => Err(CoreError::Config(
            "student and teacher modalities differ".into(),
        )),
    }
}

fn validate_epoch(
    op: &SensingOperator,
    net: &DecoderNet,
    val: &[SceneTensor],
) -> Result<(f64, f64)> {
    if val.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let scores = par::map_collect(val, |x| -> Result<(f64, f64)> {
        let bp = op.backproject(x)?;
        let (recon, _) = net.decode(&bp)?;
        scene_quality(&recon, x)
    });
    let mut psnr_acc = 0.0;
    let mut ssim_acc = 0.0;
    for s in &scores {
        let (p, s2) = s.as_ref().map_err(|e| CoreError::Invalid(e.to_string()))?;
        psnr_acc += p;
        ssim_acc += s2;
    }
    Ok((psnr_acc / val.len() as f64, ssim_acc / val.len() as f64))
}

pub(crate) fn run_training(
    op: SensingOperator,
    net: DecoderNet,
    data: &Dataset,
    plan: &DistillPlan,
    weights: StepWeights,
    teacher: Option<(&SensingOperator, &DecoderNet)>,
    role: Role,
) -> Result<TrainedSystem> {
    run_training_inner(op, net, data, plan, weights, teacher, role, false)
}

#[allow(clippy::too_many_arguments)]
fn run_training_inner(
    mut op: SensingOperator,
    mut net: DecoderNet,
    data: &Dataset,
    plan: &DistillPlan,
    weights: StepWeights,
    teacher: Option<(&SensingOperator, &DecoderNet)>,
    role: Role,
    freeze_encoder: bool,
) -> Result<TrainedSystem> {
    if data.train.is_empty() {
        return Err(CoreError::Config("empty training split".into()));
    }
    for x in data.train.iter().chain(data.val.iter()) {
        if x.modality != op.modality() {
            return Err(CoreError::Config(format!(
                "dataset modality {} does not match operator {}",
                x.modality,
                op.modality()
            )));
        }
    }
    let mut theta_opt = AdamState::new(
        net.n_params(),
        plan.optimizer,
        plan.learning_rate,
        plan.weight_decay,
    );
    // Alg. 1 applies no weight decay on the encoder path.
    let mut phi_opt = AdamState::new(
        op.weights().len(),
        plan.optimizer,
        plan.learning_rate,
        0.0,
    );
    let mut history = Vec::with_capacity(plan.epochs);
    for epoch in 0..plan.epochs {
        let tau = plan.tau.at(epoch);
        let order = shuffle_indices(data.train.len(), plan.seed, epoch);
        let mut epoch_task = 0.0;
        let mut epoch_dec = 0.0;
        let mut epoch_enc = 0.0;
        let mut epoch_reg = 0.0;
        let mut epoch_total = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(plan.batch_size).enumerate() {
            let batch: Vec<&SceneTensor> = chunk.iter().map(|&i| &data.train[i]).collect();
            let b = batch.len();
            let outs = par::map_collect(&batch, |x| {
                sample_pass(&op, &net, x, b, &weights, teacher)
            });
            let mut task_sum = 0.0;
            let mut dec_sum = 0.0;
            let mut d_theta = vec![0.0; net.n_params()];
            let mut d_phi = EncoderGrad::zeros_like(&op);
            for out in outs {
                let out = out?;
                task_sum += out.task;
                dec_sum += out.dec;
                for (dst, src) in d_theta.iter_mut().zip(out.d_theta.iter()) {
                    *dst += src;
                }
                d_phi.scaled_add(1.0, &out.d_phi);
            }
            let task = task_sum / b as f64;
            let dec = dec_sum / b as f64;
            let mut enc = 0.0;
            if let Some((t_op, _)) = teacher {
                let (enc_loss, enc_grad) = encoder_alignment(&op, t_op, &batch, b)?;
                enc = enc_loss;
                if weights.enc != 0.0 {
                    d_phi.scaled_add(weights.enc, &enc_grad);
                }
            }
            let mut reg = 0.0;
            if !freeze_encoder {
                if let SensingOperator::Mri(m) = &op {
                    let mask = m.mask();
                    reg = af_regularizer(&mask, m.accel, tau)?;
                    let reg_grad = af_regularizer_grad(&mask, m.accel, tau)?;
                    d_phi.scaled_add(1.0, &EncoderGrad::Mri(reg_grad));
                }
            }
            let total = weights.task * task + weights.dec * dec + weights.enc * enc + reg;
            if !total.is_finite() {
                return Err(CoreError::Diverged {
                    epoch,
                    batch: batch_idx,
                    detail: format!(
                        "task {task:.3e}, dec {dec:.3e}, enc {enc:.3e}, reg {reg:.3e}"
                    ),
                });
            }
            theta_opt.step(net.params_mut(), &d_theta);
            if !freeze_encoder {
                phi_opt.step(op.weights_mut(), d_phi.as_flat());
            }
            epoch_task += task;
            epoch_dec += dec;
            epoch_enc += enc;
            epoch_reg += reg;
            epoch_total += total;
            batches += 1;
        }
        let nb = batches as f64;
        let (val_psnr, val_ssim) = validate_epoch(&op, &net, &data.val)?;
        history.push(EpochRecord {
            epoch,
            task: epoch_task / nb,
            dec: epoch_dec / nb,
            enc: epoch_enc / nb,
            reg: epoch_reg / nb,
            total: epoch_total / nb,
            val_psnr,
            val_ssim,
        });
    }
    Ok(TrainedSystem {
        op,
        net,
        history,
        role,
    })
}

/// Stage 2 (and the baseline): jointly optimize encoder and decoder on the
/// reconstruction objective, with the two-phase transmittance schedule for
/// MRI masks.
pub fn train_e2e(
    op: SensingOperator,
    net: DecoderNet,
    data: &Dataset,
    plan: &DistillPlan,
    role: Role,
) -> Result<TrainedSystem> {
    if plan.epochs < 1 || plan.batch_size < 1 {
        return Err(CoreError::Config("epochs and batch size must be >= 1".into()));
    }
    if plan.learning_rate <= 0.0 {
        return Err(CoreError::Config("learning rate must be positive".into()));
    }
    run_training(op, net, data, plan, StepWeights::e2e(), None, role)
}

/// Train only the decoder against a frozen encoder (fixed-pattern
/// comparisons). The encoder weights never move and the transmittance
/// regularizer is skipped (it is constant under a frozen mask).
pub fn train_decoder_only(
    op: SensingOperator,
    net: DecoderNet,
    data: &Dataset,
    plan: &DistillPlan,
    role: Role,
) -> Result<TrainedSystem> {
    run_training_inner(op, net, data, plan, StepWeights::e2e(), None, role, true)
}

/// Stage 3: train the student under the frozen teacher's guidance. The
/// teacher must have been trained; its parameters are checksummed before and
/// after and any change is a hard failure.
pub fn distill_student(
    student_op: SensingOperator,
    student_net: DecoderNet,
    teacher: &TrainedSystem,
    data: &Dataset,
    plan: &DistillPlan,
) -> Result<TrainedSystem> {
    plan.validate()?;
    if teacher.history.is_empty() {
        return Err(CoreError::Precondition(
            "teacher has no training history; train it before distilling".into(),
        ));
    }
    if teacher.op.modality() != student_op.modality() {
        return Err(CoreError::Config(
            "student and teacher modalities differ".into(),
        ));
    }
    let op_sum_before = teacher.op.checksum();
    let net_sum_before = teacher.net.checksum();
    let trained = run_training(
        student_op,
        student_net,
        data,
        plan,
        StepWeights::from_plan(plan),
        Some((&teacher.op, &teacher.net)),
        Role::Student,
    )?;
    if teacher.op.checksum() != op_sum_before || teacher.net.checksum() != net_sum_before {
        return Err(CoreError::Precondition(
            "frozen teacher parameters changed during distillation".into(),
        ));
    }
    Ok(trained)
}

/// One ablation cell: which transfer terms were active and the system they
/// produced.
#[derive(Debug)]
pub struct AblationCell {
    pub enc_on: bool,
    pub dec_on: bool,
    pub system: TrainedSystem,
}

/// Loss-component ablation: run the student once per on/off combination of
/// the two transfer terms. A disabled term's weight mass is redistributed
/// proportionally over the active terms; with both off the run reduces to
/// the end-to-end baseline and is tagged as such.
pub fn ablate(
    student_op: &SensingOperator,
    student_net: &DecoderNet,
    teacher: &TrainedSystem,
    data: &Dataset,
    plan: &DistillPlan,
) -> Result<Vec<AblationCell>> {
    plan.validate()?;
    if teacher.history.is_empty() {
        return Err(CoreError::Precondition(
            "teacher has no training history; train it before ablating".into(),
        ));
    }
    let mut cells = Vec::with_capacity(4);
    for (enc_on, dec_on) in [(true, true), (true, false), (false, true), (false, false)] {
        let op = student_op.clone();
        let net = student_net.clone();
        let system = if !enc_on && !dec_on {
            train_e2e(op, net, data, plan, Role::Baseline)?
        } else {
            let l1 = plan.lambda1;
            let l2 = if dec_on { plan.lambda2 } else { 0.0 };
            let l3 = if enc_on { plan.lambda3() } else { 0.0 };
            let mass = l1 + l2 + l3;
            let weights = StepWeights {
                task: l1 / mass,
                dec: l2 / mass,
                enc: l3 / mass,
            };
            run_training(
                op,
                net,
                data,
                plan,
                weights,
                Some((&teacher.op, &teacher.net)),
                Role::Student,
            )?
        };
        cells.push(AblationCell {
            enc_on,
            dec_on,
            system,
        });
    }
    Ok(cells)
}
