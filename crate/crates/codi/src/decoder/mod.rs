//! Encoder-decoder reconstruction network with a bottleneck feature tap.
//!
//! The architecture is a compact U-Net: `depth` down/up levels of two 3x3
//! conv+ReLU blocks, 2x2 max pooling on the way down, nearest upsampling and
//! skip concatenation on the way up, and a linear 1x1 head. The filter count
//! at level `i` is `base_filters * width_factor * 2^i`; `width_factor` plays
//! the role of the per-modality width multiplier. Parameters live in one flat
//! `Vec<f64>`, which keeps the optimizer, checksums, serialization and
//! finite-difference checks trivial. Forward and backward are hand-written;
//! the backward pass optionally accepts an extra gradient injected at the
//! bottleneck, which is how the feature-alignment loss reaches the weights.

mod layers;

pub(crate) use layers::ConvSpec;
use layers::{
    concat_channels, conv_backward, conv_forward, maxpool_backward, maxpool_forward,
    split_channels, upsample_backward, upsample_forward, ConvTape, PoolTape,
};

use crate::error::{CoreError, Result};
use crate::sensing::{Modality, SceneTensor};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Reconstruction-network configuration.
///
/// `height`/`width` fix the spatial dims the network will be applied to so
/// that divisibility by `2^depth` can be rejected at construction instead of
/// at call time. `input_scale` is a fixed pre-scaling applied to the
/// backprojection (1.0 for MRI, `1/n` for the single-pixel camera whose
/// backprojections grow with the scene size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub in_channels: usize,
    pub width_factor: usize,
    pub depth: usize,
    pub base_filters: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_input_scale")]
    pub input_scale: f64,
    pub seed: u64,
}

fn default_input_scale() -> f64 {
    1.0
}

impl DecoderConfig {
    /// Paper-style defaults per modality at desk scale: depth 3, 8 filters
    /// per width unit, width factor 1/4/2 for MRI/SPC/CASSI.
    pub fn for_modality(modality: Modality, side: usize, bands: usize, seed: u64) -> Self {
        let (c, wf, scale) = match modality {
            Modality::Mri => (2, 1, 1.0),
            Modality::Spc => (1, 4, 1.0 / (side * side) as f64),
            Modality::Cassi => (bands, 2, 1.0),
        };
        DecoderConfig {
            in_channels: c,
            width_factor: wf,
            depth: 3,
            base_filters: 8,
            height: side,
            width: side,
            input_scale: scale,
            seed,
        }
    }

    fn filters(&self, level: usize) -> usize {
        self.base_filters * self.width_factor * (1 << level)
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels < 1 || self.width_factor < 1 || self.depth < 1 || self.base_filters < 1
        {
            return Err(CoreError::Config(
                "in_channels, width_factor, depth, base_filters must all be >= 1".into(),
            ));
        }
        let div = 1usize << self.depth;
        if self.height % div != 0 || self.width % div != 0 {
            return Err(CoreError::Config(format!(
                "spatial dims {}x{} not divisible by 2^depth = {div}",
                self.height, self.width
            )));
        }
        if self.height / div == 0 || self.width / div == 0 {
            return Err(CoreError::Config("network deeper than the image".into()));
        }
        if !self.input_scale.is_finite() || self.input_scale == 0.0 {
            return Err(CoreError::Config("input_scale must be finite non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct UNetPlan {
    enc: Vec<[ConvSpec; 2]>,
    bott: [ConvSpec; 2],
    /// Stored in execution order, deepest level first.
    dec: Vec<DecStage>,
    head: ConvSpec,
    n_params: usize,
}

#[derive(Debug, Clone)]
struct DecStage {
    level: usize,
    reduce: ConvSpec,
    conv1: ConvSpec,
    conv2: ConvSpec,
}

fn build_plan(cfg: &DecoderConfig) -> UNetPlan {
    let mut offset = 0usize;
    let mut conv = |c_in: usize, c_out: usize, k: usize| {
        let spec = ConvSpec {
            w_start: offset,
            b_start: offset + c_out * c_in * k * k,
            c_in,
            c_out,
            k,
        };
        offset += spec.n_params();
        spec
    };
    let mut enc = Vec::new();
    let mut prev = cfg.in_channels;
    for i in 0..cfg.depth {
        let f = cfg.filters(i);
        enc.push([conv(prev, f, 3), conv(f, f, 3)]);
        prev = f;
    }
    let fb = cfg.filters(cfg.depth);
    let bott = [conv(prev, fb, 3), conv(fb, fb, 3)];
    let mut dec = Vec::new();
    for level in (0..cfg.depth).rev() {
        let f = cfg.filters(level);
        let above = cfg.filters(level + 1);
        dec.push(DecStage {
            level,
            reduce: conv(above, f, 3),
            conv1: conv(2 * f, f, 3),
            conv2: conv(f, f, 3),
        });
    }
    let head = conv(cfg.filters(0), cfg.in_channels, 1);
    UNetPlan {
        enc,
        bott,
        dec,
        head,
        n_params: offset,
    }
}

/// Intermediate feature map; `[b]` tags the bottleneck.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub values: Array3<f64>,
}

/// Forward records for one decode pass.
pub struct Tape {
    enc: Vec<(ConvTape, ConvTape, PoolTape)>,
    bott: (ConvTape, ConvTape),
    dec: Vec<(ConvTape, ConvTape, ConvTape)>,
    head: ConvTape,
}

#[derive(Debug, Clone)]
pub struct DecoderNet {
    pub config: DecoderConfig,
    plan: UNetPlan,
    params: Vec<f64>,
}

impl DecoderNet {
    /// Build a network with seeded fan-in-scaled uniform initialization.
    pub fn new(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let plan = build_plan(&config);
        let mut params = vec![0.0; plan.n_params];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init_conv = |spec: &ConvSpec, params: &mut [f64]| {
            let fan_in = (spec.c_in * spec.k * spec.k) as f64;
            let bound = 1.0 / fan_in.sqrt();
            let w_len = spec.c_out * spec.c_in * spec.k * spec.k;
            for p in params[spec.w_start..spec.w_start + w_len].iter_mut() {
                *p = rng.gen_range(-bound..bound);
            }
            for p in params[spec.b_start..spec.b_start + spec.c_out].iter_mut() {
                *p = rng.gen_range(-bound..bound);
            }
        };
        for level in &plan.enc {
            init_conv(&level[0], &mut params);
            init_conv(&level[1], &mut params);
        }
        init_conv(&plan.bott[0], &mut params);
        init_conv(&plan.bott[1], &mut params);
        for stage in &plan.dec {
            init_conv(&stage.reduce, &mut params);
            init_conv(&stage.conv1, &mut params);
            init_conv(&stage.conv2, &mut params);
        }
        init_conv(&plan.head, &mut params);
        Ok(DecoderNet {
            config,
            plan,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.plan.n_params
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.plan.n_params {
            return Err(CoreError::Shape(format!(
                "expected {} parameters, got {}",
                self.plan.n_params,
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// Sum of squared parameters.
    pub fn param_l2(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }

    /// Bit-exact digest of the parameters.
    pub fn checksum(&self) -> String {
        crate::io::checksum_f64(&self.params)
    }

    fn check_input(&self, input: &Array3<f64>) -> Result<()> {
        let want = (self.config.in_channels, self.config.height, self.config.width);
        if input.dim() != want {
            return Err(CoreError::Shape(format!(
                "decoder input {:?} does not match configured {:?}",
                input.dim(),
                want
            )));
        }
        Ok(())
    }

    /// Reconstruct a backprojected scene; returns the reconstruction and the
    /// bottleneck feature map captured in the same pass.
    pub fn decode(&self, backprojection: &SceneTensor) -> Result<(SceneTensor, FeatureMap)> {
        let (recon, bottleneck, _) = self.forward_cached(&backprojection.data)?;
        Ok((
            SceneTensor {
                modality: backprojection.modality,
                data: recon,
            },
            bottleneck,
        ))
    }

    /// Forward pass on raw channel data, keeping the records backward needs.
    pub fn forward_cached(
        &self,
        input: &Array3<f64>,
    ) -> Result<(Array3<f64>, FeatureMap, Tape)> {
        self.check_input(input)?;
        let params = &self.params;
        let mut a = input * self.config.input_scale;
        let mut enc_tapes = Vec::with_capacity(self.plan.enc.len());
        let mut skips = Vec::with_capacity(self.plan.enc.len());
        for level in &self.plan.enc {
            let (out1, t1) = conv_forward(&level[0], params, &a, true);
            let (out2, t2) = conv_forward(&level[1], params, &out1, true);
            skips.push(out2.clone());
            let (pooled, pt) = maxpool_forward(&out2);
            a = pooled;
            enc_tapes.push((t1, t2, pt));
        }
        let (b1, bt1) = conv_forward(&self.plan.bott[0], params, &a, true);
        let (b2, bt2) = conv_forward(&self.plan.bott[1], params, &b1, true);
        let bottleneck = FeatureMap { values: b2.clone() };
        a = b2;
        let mut dec_tapes = Vec::with_capacity(self.plan.dec.len());
        for stage in &self.plan.dec {
            let up = upsample_forward(&a);
            let (red, tr) = conv_forward(&stage.reduce, params, &up, true);
            let cat = concat_channels(&red, &skips[stage.level]);
            let (c1, t1) = conv_forward(&stage.conv1, params, &cat, true);
            let (c2, t2) = conv_forward(&stage.conv2, params, &c1, true);
            a = c2;
            dec_tapes.push((tr, t1, t2));
        }
        let (recon, head_tape) = conv_forward(&self.plan.head, params, &a, false);
        Ok((
            recon,
            bottleneck,
            Tape {
                enc: enc_tapes,
                bott: (bt1, bt2),
                dec: dec_tapes,
                head: head_tape,
            },
        ))
    }

    /// Backward pass. `d_recon` is the gradient of the loss with respect to
    /// the reconstruction; `d_bottleneck`, when given, is added at the
    /// bottleneck output (the feature-alignment path). Returns the parameter
    /// gradient and the gradient with respect to the (unscaled) input.
    pub fn backward(
        &self,
        tape: &Tape,
        d_recon: &Array3<f64>,
        d_bottleneck: Option<&Array3<f64>>,
    ) -> (Vec<f64>, Array3<f64>) {
        let params = &self.params;
        let mut grads = vec![0.0; self.plan.n_params];
        let mut d = conv_backward(&self.plan.head, params, &mut grads, &tape.head, d_recon);
        let mut d_skips: Vec<Option<Array3<f64>>> = vec![None; self.plan.enc.len()];
        // Decoder stages unwind shallowest-first (reverse execution order).
        for (stage, tapes) in self.plan.dec.iter().zip(tape.dec.iter()).rev() {
            let (tr, t1, t2) = tapes;
            d = conv_backward(&stage.conv2, params, &mut grads, t2, &d);
            let d_cat = conv_backward(&stage.conv1, params, &mut grads, t1, &d);
            let (d_red, d_skip) = split_channels(&d_cat, stage.reduce.c_out);
            d_skips[stage.level] = Some(d_skip);
            let d_up = conv_backward(&stage.reduce, params, &mut grads, tr, &d_red);
            d = upsample_backward(&d_up);
        }
        if let Some(extra) = d_bottleneck {
            d += extra;
        }
        d = conv_backward(&self.plan.bott[1], params, &mut grads, &tape.bott.1, &d);
        d = conv_backward(&self.plan.bott[0], params, &mut grads, &tape.bott.0, &d);
        for (level, tapes) in self.plan.enc.iter().zip(tape.enc.iter()).enumerate().rev() {
            let (specs, (t1, t2, pt)) = tapes;
            let mut d_out = maxpool_backward(pt, &d);
            if let Some(d_skip) = &d_skips[level] {
                d_out += d_skip;
            }
            let d_mid = conv_backward(&specs[1], params, &mut grads, t2, &d_out);
            d = conv_backward(&specs[0], params, &mut grads, t1, &d_mid);
        }
        let d_input = d.mapv(|v| v * self.config.input_scale);
        (grads, d_input)
    }
}

#[cfg(test)]
mod tests;
