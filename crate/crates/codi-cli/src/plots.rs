//! Raster plot rendering: heatmaps, the singular-spectrum line plot and
//! ground-truth/reconstruction pairs. Plain PNG output via a small fixed
//! colormap; no plotting framework.

use anyhow::{Context, Result};
use codi::sensing::{Modality, SceneTensor};
use image::{Rgb, RgbImage};
use ndarray::Array2;
use std::path::Path;

/// Five-stop approximation of a perceptually ordered colormap.
fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.00, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.50, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.00, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut rgb = STOPS[0].1;
    for w in STOPS.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t >= t0 && t <= t1 {
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            rgb = [
                c0[0] + f * (c1[0] - c0[0]),
                c0[1] + f * (c1[1] - c0[1]),
                c0[2] + f * (c1[2] - c0[2]),
            ];
            break;
        }
    }
    Rgb([rgb[0] as u8, rgb[1] as u8, rgb[2] as u8])
}

fn save(img: RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// Heatmap of a matrix, optionally log-compressed, upscaled to at least
/// 192 px on the short side.
pub fn save_heatmap(matrix: &Array2<f64>, path: &Path, log_scale: bool) -> Result<()> {
    let (h, w) = matrix.dim();
    let values: Vec<f64> = matrix
        .iter()
        .map(|&v| if log_scale { (1.0 + v.abs()).ln() } else { v })
        .collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scale = (192 / h.min(w).max(1)).max(1);
    let mut img = RgbImage::new((w * scale) as u32, (h * scale) as u32);
    for i in 0..h {
        for j in 0..w {
            let t = (values[i * w + j] - lo) / span;
            let px = colormap(t);
            for di in 0..scale {
                for dj in 0..scale {
                    img.put_pixel((j * scale + dj) as u32, (i * scale + di) as u32, px);
                }
            }
        }
    }
    save(img, path)
}

/// Descending line plot on a white canvas (singular spectra).
pub fn save_line_plot(values: &[f64], path: &Path) -> Result<()> {
    let (width, height, margin) = (480usize, 320usize, 24usize);
    let mut img = RgbImage::from_pixel(width as u32, height as u32, Rgb([255, 255, 255]));
    let axis = Rgb([90, 90, 90]);
    for x in margin..width - margin {
        img.put_pixel(x as u32, (height - margin) as u32, axis);
    }
    for y in margin..height - margin {
        img.put_pixel(margin as u32, y as u32, axis);
    }
    if values.is_empty() {
        return save(img, path);
    }
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = 0.0f64;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = values.len();
    let line = Rgb([31, 119, 180]);
    let plot_w = (width - 2 * margin) as f64;
    let plot_h = (height - 2 * margin) as f64;
    let mut prev: Option<(i64, i64)> = None;
    for (k, &v) in values.iter().enumerate() {
        let x = margin as f64 + plot_w * (k as f64 / (n.max(2) - 1) as f64);
        let y = (height - margin) as f64 - plot_h * ((v - lo) / span);
        let (x, y) = (x as i64, y as i64);
        if let Some((px, py)) = prev {
            // Bresenham-ish segment fill.
            let steps = (x - px).abs().max((y - py).abs()).max(1);
            for s in 0..=steps {
                let xi = px + (x - px) * s / steps;
                let yi = py + (y - py) * s / steps;
                if xi >= 0 && yi >= 0 && (xi as usize) < width && (yi as usize) < height {
                    img.put_pixel(xi as u32, yi as u32, line);
                }
            }
        }
        prev = Some((x, y));
    }
    save(img, path)
}

fn scene_to_gray(scene: &SceneTensor) -> Array2<f64> {
    let (c, h, w) = scene.data.dim();
    match scene.modality {
        Modality::Mri => Array2::from_shape_fn((h, w), |(i, j)| {
            (scene.data[[0, i, j]].powi(2) + scene.data[[1, i, j]].powi(2)).sqrt()
        }),
        Modality::Spc => Array2::from_shape_fn((h, w), |(i, j)| scene.data[[0, i, j]]),
        Modality::Cassi => Array2::from_shape_fn((h, w), |(i, j)| {
            (0..c).map(|l| scene.data[[l, i, j]]).sum::<f64>() / c as f64
        }),
    }
}

/// Ground truth and reconstruction side by side, grayscale in [0, 1].
pub fn save_scene_pair(truth: &SceneTensor, recon: &SceneTensor, path: &Path) -> Result<()> {
    let gt = scene_to_gray(truth);
    let rc = scene_to_gray(recon);
    let (h, w) = gt.dim();
    let scale = (192 / h.max(1)).max(1);
    let gap = 4usize;
    let mut img = RgbImage::from_pixel(
        ((2 * w * scale) + gap) as u32,
        (h * scale) as u32,
        Rgb([255, 255, 255]),
    );
    let mut put = |grid: &Array2<f64>, x0: usize| {
        for i in 0..h {
            for j in 0..w {
                let v = (grid[[i, j]].clamp(0.0, 1.0) * 255.0) as u8;
                for di in 0..scale {
                    for dj in 0..scale {
                        img.put_pixel(
                            (x0 + j * scale + dj) as u32,
                            (i * scale + di) as u32,
                            Rgb([v, v, v]),
                        );
                    }
                }
            }
        }
    };
    put(&gt, 0);
    put(&rc, w * scale + gap);
    save(img, path)
}
