//! Primitive layer computations for the reconstruction network: 2-D
//! convolution via im2col + matmul, ReLU, 2x2 max pooling and nearest
//! upsampling. Forward functions return the records their backward passes
//! need; everything is plain `f64` and sequential per sample.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};

/// Offsets of one convolution's weight and bias inside the flat parameter
/// vector, plus its geometry.
#[derive(Debug, Clone)]
pub struct ConvSpec {
    pub w_start: usize,
    pub b_start: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl ConvSpec {
    pub fn n_params(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k + self.c_out
    }

    pub fn weight_view<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        let len = self.c_out * self.c_in * self.k * self.k;
        ArrayView2::from_shape(
            (self.c_out, self.c_in * self.k * self.k),
            &params[self.w_start..self.w_start + len],
        )
        .expect("contiguous weight block")
    }

    pub fn bias_view<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&params[self.b_start..self.b_start + self.c_out])
    }
}

/// Unfold (c_in, h, w) into (c_in*k*k, h*w) with same-padding (k odd).
fn im2col(input: &Array3<f64>, k: usize) -> Array2<f64> {
    let (c, h, w) = input.dim();
    let pad = k / 2;
    let mut col = Array2::<f64>::zeros((c * k * k, h * w));
    for ch in 0..c {
        for dy in 0..k {
            for dx in 0..k {
                let row = ch * k * k + dy * k + dx;
                for i in 0..h {
                    let src_i = i as isize + dy as isize - pad as isize;
                    if src_i < 0 || src_i >= h as isize {
                        continue;
                    }
                    for j in 0..w {
                        let src_j = j as isize + dx as isize - pad as isize;
                        if src_j < 0 || src_j >= w as isize {
                            continue;
                        }
                        col[[row, i * w + j]] = input[[ch, src_i as usize, src_j as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Fold (c_in*k*k, h*w) gradients back onto the input grid.
fn col2im(d_col: &Array2<f64>, c: usize, h: usize, w: usize, k: usize) -> Array3<f64> {
    let pad = k / 2;
    let mut out = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for dy in 0..k {
            for dx in 0..k {
                let row = ch * k * k + dy * k + dx;
                for i in 0..h {
                    let src_i = i as isize + dy as isize - pad as isize;
                    if src_i < 0 || src_i >= h as isize {
                        continue;
                    }
                    for j in 0..w {
                        let src_j = j as isize + dx as isize - pad as isize;
                        if src_j < 0 || src_j >= w as isize {
                            continue;
                        }
                        out[[ch, src_i as usize, src_j as usize]] += d_col[[row, i * w + j]];
                    }
                }
            }
        }
    }
    out
}

/// Forward record for one convolution (+ optional ReLU).
#[derive(Debug)]
pub struct ConvTape {
    pub input: Array3<f64>,
    /// Post-activation mask; `None` for a linear conv.
    pub relu_mask: Option<Vec<bool>>,
}

pub fn conv_forward(
    spec: &ConvSpec,
    params: &[f64],
    input: &Array3<f64>,
    relu: bool,
) -> (Array3<f64>, ConvTape) {
    let (_, h, w) = input.dim();
    let col = im2col(input, spec.k);
    let weight = spec.weight_view(params);
    let bias = spec.bias_view(params);
    let mut out2 = weight.dot(&col);
    for (mut row, &b) in out2.rows_mut().into_iter().zip(bias.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    let mut mask = None;
    if relu {
        let mut m = vec![false; out2.len()];
        for (slot, v) in m.iter_mut().zip(out2.iter_mut()) {
            if *v > 0.0 {
                *slot = true;
            } else {
                *v = 0.0;
            }
        }
        mask = Some(m);
    }
    let out = out2
        .into_shape_with_order((spec.c_out, h, w))
        .expect("conv output shape");
    (
        out,
        ConvTape {
            input: input.clone(),
            relu_mask: mask,
        },
    )
}

/// Backward for [`conv_forward`]. Accumulates dW/db into `grads` at the
/// spec's offsets and returns the gradient with respect to the input.
pub fn conv_backward(
    spec: &ConvSpec,
    params: &[f64],
    grads: &mut [f64],
    tape: &ConvTape,
    d_out: &Array3<f64>,
) -> Array3<f64> {
    let (c_in, h, w) = tape.input.dim();
    let mut d_out2 = d_out
        .clone()
        .into_shape_with_order((spec.c_out, h * w))
        .expect("gradient shape");
    if let Some(mask) = &tape.relu_mask {
        for (v, &keep) in d_out2.iter_mut().zip(mask.iter()) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    let col = im2col(&tape.input, spec.k);
    let d_w = d_out2.dot(&col.t());
    let w_len = spec.c_out * spec.c_in * spec.k * spec.k;
    for (dst, src) in grads[spec.w_start..spec.w_start + w_len]
        .iter_mut()
        .zip(d_w.iter())
    {
        *dst += src;
    }
    for (i, row) in d_out2.rows().into_iter().enumerate() {
        grads[spec.b_start + i] += row.sum();
    }
    let weight = spec.weight_view(params);
    let d_col = weight.t().dot(&d_out2);
    col2im(&d_col, c_in, h, w, spec.k)
}

#[derive(Debug)]
pub struct PoolTape {
    pub in_dim: (usize, usize, usize),
    /// Winning position (0..4) within each 2x2 window, first-max tie rule.
    pub argmax: Vec<u8>,
}

pub fn maxpool_forward(input: &Array3<f64>) -> (Array3<f64>, PoolTape) {
    let (c, h, w) = input.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::<f64>::zeros((c, oh, ow));
    let mut argmax = vec![0u8; c * oh * ow];
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = 0u8;
                for k in 0..4u8 {
                    let (di, dj) = ((k / 2) as usize, (k % 2) as usize);
                    let v = input[[ch, 2 * i + di, 2 * j + dj]];
                    if v > best {
                        best = v;
                        best_k = k;
                    }
                }
                out[[ch, i, j]] = best;
                argmax[ch * oh * ow + i * ow + j] = best_k;
            }
        }
    }
    (
        out,
        PoolTape {
            in_dim: (c, h, w),
            argmax,
        },
    )
}

pub fn maxpool_backward(tape: &PoolTape, d_out: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = tape.in_dim;
    let (oh, ow) = (h / 2, w / 2);
    let mut d_in = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let k = tape.argmax[ch * oh * ow + i * ow + j];
                let (di, dj) = ((k / 2) as usize, (k % 2) as usize);
                d_in[[ch, 2 * i + di, 2 * j + dj]] = d_out[[ch, i, j]];
            }
        }
    }
    d_in
}

pub fn upsample_forward(input: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = input.dim();
    let mut out = Array3::<f64>::zeros((c, 2 * h, 2 * w));
    for ch in 0..c {
        for i in 0..2 * h {
            for j in 0..2 * w {
                out[[ch, i, j]] = input[[ch, i / 2, j / 2]];
            }
        }
    }
    out
}

pub fn upsample_backward(d_out: &Array3<f64>) -> Array3<f64> {
    let (c, h2, w2) = d_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut d_in = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for i in 0..h2 {
            for j in 0..w2 {
                d_in[[ch, i / 2, j / 2]] += d_out[[ch, i, j]];
            }
        }
    }
    d_in
}

/// Stack `a` on top of `b` along the channel axis.
pub fn concat_channels(a: &Array3<f64>, b: &Array3<f64>) -> Array3<f64> {
    let (ca, h, w) = a.dim();
    let (cb, _, _) = b.dim();
    let mut out = Array3::<f64>::zeros((ca + cb, h, w));
    out.slice_mut(ndarray::s![..ca, .., ..]).assign(a);
    out.slice_mut(ndarray::s![ca.., .., ..]).assign(b);
    out
}

/// Split a concatenated gradient back into its two channel blocks.
pub fn split_channels(d: &Array3<f64>, ca: usize) -> (Array3<f64>, Array3<f64>) {
    (
        d.slice(ndarray::s![..ca, .., ..]).to_owned(),
        d.slice(ndarray::s![ca.., .., ..]).to_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn im2col_roundtrip_counts() {
        // col2im of an all-ones d_col counts how many windows each input
        // pixel participates in; corner pixels of a 3x3 kernel see 4 windows.
        let input = Array3::<f64>::zeros((1, 4, 4));
        let d_col = Array2::from_elem((9, 16), 1.0);
        let folded = col2im(&d_col, 1, 4, 4, 3);
        assert_eq!(folded[[0, 0, 0]], 4.0);
        assert_eq!(folded[[0, 1, 1]], 9.0);
        let _ = im2col(&input, 3);
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ConvSpec {
            w_start: 0,
            b_start: 2 * 3 * 9,
            c_in: 3,
            c_out: 2,
            k: 3,
        };
        let mut params = vec![0.0; spec.n_params()];
        for p in params.iter_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let input = Array3::from_shape_fn((3, 5, 5), |_| rng.gen_range(-1.0..1.0));
        let (out, _) = conv_forward(&spec, &params, &input, false);
        // Direct sliding-window oracle.
        for co in 0..2 {
            for i in 0..5usize {
                for j in 0..5usize {
                    let mut acc = params[spec.b_start + co];
                    for ci in 0..3 {
                        for dy in 0..3usize {
                            for dx in 0..3usize {
                                let si = i as isize + dy as isize - 1;
                                let sj = j as isize + dx as isize - 1;
                                if si < 0 || si >= 5 || sj < 0 || sj >= 5 {
                                    continue;
                                }
                                let wv = params[co * 27 + ci * 9 + dy * 3 + dx];
                                acc += wv * input[[ci, si as usize, sj as usize]];
                            }
                        }
                    }
                    assert!((out[[co, i, j]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ConvSpec {
            w_start: 0,
            b_start: 2 * 2 * 9,
            c_in: 2,
            c_out: 2,
            k: 3,
        };
        let mut params = vec![0.0; spec.n_params()];
        for p in params.iter_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        let input = Array3::from_shape_fn((2, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let probe = Array3::from_shape_fn((2, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let loss = |params: &[f64], input: &Array3<f64>| -> f64 {
            let (out, _) = conv_forward(&spec, params, input, true);
            out.iter().zip(probe.iter()).map(|(a, b)| a * b).sum()
        };
        let (out, tape) = conv_forward(&spec, &params, &input, true);
        let _ = out;
        let mut grads = vec![0.0; spec.n_params()];
        let d_in = conv_backward(&spec, &params, &mut grads, &tape, &probe);
        let h = 1e-6;
        for k in (0..spec.n_params()).step_by(7) {
            let mut p1 = params.clone();
            p1[k] += h;
            let mut p2 = params.clone();
            p2[k] -= h;
            let fd = (loss(&p1, &input) - loss(&p2, &input)) / (2.0 * h);
            assert!(
                (fd - grads[k]).abs() < 1e-6 * grads[k].abs().max(1.0),
                "param {k}: fd {fd} vs {g}",
                g = grads[k]
            );
        }
        for k in (0..input.len()).step_by(5) {
            let mut i1 = input.clone();
            i1.as_slice_mut().unwrap()[k] += h;
            let mut i2 = input.clone();
            i2.as_slice_mut().unwrap()[k] -= h;
            let fd = (loss(&params, &i1) - loss(&params, &i2)) / (2.0 * h);
            let a = d_in.as_slice().unwrap()[k];
            assert!((fd - a).abs() < 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn pooling_and_upsample_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = Array3::from_shape_fn((2, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let (pooled, tape) = maxpool_forward(&input);
        assert_eq!(pooled.dim(), (2, 2, 2));
        let d = Array3::from_elem((2, 2, 2), 1.0);
        let back = maxpool_backward(&tape, &d);
        assert_eq!(back.sum(), 4.0 * 2.0);
        let up = upsample_forward(&pooled);
        assert_eq!(up.dim(), (2, 4, 4));
        let down = upsample_backward(&up);
        for (a, b) in down.iter().zip(pooled.iter()) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
    }
}
