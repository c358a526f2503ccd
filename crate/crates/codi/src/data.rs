//! Desk-scale dataset synthesis and optional ingestion of external images.
//!
//! Synthetic generators stand in for the full-scale corpora: piecewise-smooth
//! ellipse phantoms with a smooth random phase for MRI, random
//! polygon/stroke sketches for the single-pixel camera, and shapes modulated
//! by smooth random spectra for the spectral imager. Every sample is produced
//! from its own seed derived from `(dataset seed, split, index)`, so splits
//! are disjoint by construction and any spec maps to a byte-stable dataset.

use crate::error::{CoreError, Result};
use crate::io;
use crate::par;
use crate::sensing::{Modality, SceneTensor};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Phantom,
    Shapes,
    SpectralSmooth,
    ExternalDir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub modality: Modality,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Image side length (square scenes).
    pub side: usize,
    /// Spectral bands; ignored outside CASSI.
    #[serde(default = "default_bands")]
    pub bands: usize,
    pub generator: Generator,
    pub seed: u64,
    /// Generator contract: maximum adjacent-band jump of a synthetic
    /// spectrum.
    #[serde(default = "default_smooth_bound")]
    pub smooth_bound: f64,
}

fn default_bands() -> usize {
    1
}

fn default_smooth_bound() -> f64 {
    0.35
}

impl DatasetSpec {
    pub fn defaults(modality: Modality, seed: u64) -> Self {
        let (side, bands, generator) = match modality {
            Modality::Mri => (64, 1, Generator::Phantom),
            Modality::Spc => (32, 1, Generator::Shapes),
            Modality::Cassi => (32, 8, Generator::SpectralSmooth),
        };
        DatasetSpec {
            modality,
            train: 24,
            val: 8,
            test: 8,
            side,
            bands,
            generator,
            seed,
            smooth_bound: default_smooth_bound(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.side.is_power_of_two() || self.side < 16 {
            return Err(CoreError::Config(format!(
                "side must be a power of two >= 16, got {}",
                self.side
            )));
        }
        if self.modality == Modality::Cassi && self.bands == 0 {
            return Err(CoreError::Config("cassi needs >= 1 band".into()));
        }
        Ok(())
    }

    /// Stable content hash of the spec.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        io::checksum_bytes(&json)[..16].to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: Vec<SceneTensor>,
    pub val: Vec<SceneTensor>,
    pub test: Vec<SceneTensor>,
}

fn sample_seed(base: u64, split: usize, index: usize) -> u64 {
    // splitmix64 over the packed identity keeps per-sample streams disjoint.
    let mut z = base
        .wrapping_add((split as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add((index as u64).wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Build the dataset described by `spec`.
pub fn build(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    if let Generator::ExternalDir(dir) = &spec.generator {
        return ingest_external(&dir.clone(), spec);
    }
    let counts = [spec.train, spec.val, spec.test];
    let mut splits: Vec<Vec<SceneTensor>> = Vec::with_capacity(3);
    for (split_idx, &count) in counts.iter().enumerate() {
        let samples = par::map_indices(count, |i| {
            let seed = sample_seed(spec.seed, split_idx, i);
            match spec.modality {
                Modality::Mri => synth_mri_sample(spec.side, seed),
                Modality::Spc => synth_spc_sample(spec.side, seed),
                Modality::Cassi => synth_cassi_sample(spec.side, spec.bands, seed),
            }
        });
        for s in &samples {
            debug_assert!(s.data.iter().all(|v| v.is_finite()));
        }
        splits.push(samples);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        spec: spec.clone(),
        train,
        val,
        test,
    })
}

/// Deterministic ellipse phantom rendered as a complex image with a smooth
/// random phase; magnitude normalized to [0, 1].
pub fn synth_mri_sample(side: usize, seed: u64) -> SceneTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut magnitude = vec![0.0f64; side * side];
    let n_ellipses = rng.gen_range(3..8);
    for _ in 0..n_ellipses {
        let cx = rng.gen_range(0.2..0.8) * side as f64;
        let cy = rng.gen_range(0.2..0.8) * side as f64;
        let ax = rng.gen_range(0.08..0.35) * side as f64;
        let ay = rng.gen_range(0.08..0.35) * side as f64;
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let intensity = rng.gen_range(0.2..1.0);
        let (sin_a, cos_a) = angle.sin_cos();
        for i in 0..side {
            for j in 0..side {
                let dx = j as f64 - cx;
                let dy = i as f64 - cy;
                let u = (cos_a * dx + sin_a * dy) / ax;
                let v = (-sin_a * dx + cos_a * dy) / ay;
                if u * u + v * v <= 1.0 {
                    // Later ellipses paint over earlier ones: piecewise
                    // smooth contrast, like stacked tissue regions.
                    magnitude[i * side + j] = intensity;
                }
            }
        }
    }
    let peak = magnitude.iter().cloned().fold(0.0f64, f64::max);
    if peak > 0.0 {
        for v in magnitude.iter_mut() {
            *v /= peak;
        }
    } else {
        magnitude[side / 2 * side + side / 2] = 1.0;
    }
    // Low-order smooth phase field.
    let p: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.8..0.8)).collect();
    let mut data = Array3::zeros((2, side, side));
    for i in 0..side {
        for j in 0..side {
            let u = 2.0 * (j as f64 / side as f64) - 1.0;
            let v = 2.0 * (i as f64 / side as f64) - 1.0;
            let theta = p[0] + p[1] * u + p[2] * v + p[3] * u * v
                + p[4] * (std::f64::consts::PI * u).sin() * 0.5;
            let m = magnitude[i * side + j];
            data[[0, i, j]] = m * theta.cos();
            data[[1, i, j]] = m * theta.sin();
        }
    }
    SceneTensor {
        modality: Modality::Mri,
        data,
    }
}

fn paint_shapes(side: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    // Returns per-shape binary masks; shapes are rectangles, discs and
    // strokes.
    let n_shapes = rng.gen_range(3..7);
    let mut masks = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let mut mask = vec![0.0f64; side * side];
        match rng.gen_range(0..3) {
            0 => {
                // Rectangle.
                let x0 = rng.gen_range(0..side - 4);
                let y0 = rng.gen_range(0..side - 4);
                let w = rng.gen_range(3..side / 2);
                let h = rng.gen_range(3..side / 2);
                for i in y0..(y0 + h).min(side) {
                    for j in x0..(x0 + w).min(side) {
                        mask[i * side + j] = 1.0;
                    }
                }
            }
            1 => {
                // Disc.
                let cx = rng.gen_range(0.15..0.85) * side as f64;
                let cy = rng.gen_range(0.15..0.85) * side as f64;
                let r = rng.gen_range(0.08..0.3) * side as f64;
                for i in 0..side {
                    for j in 0..side {
                        let dx = j as f64 - cx;
                        let dy = i as f64 - cy;
                        if dx * dx + dy * dy <= r * r {
                            mask[i * side + j] = 1.0;
                        }
                    }
                }
            }
            _ => {
                // Stroke: thick line segment.
                let x0 = rng.gen_range(0.0..side as f64);
                let y0 = rng.gen_range(0.0..side as f64);
                let x1 = rng.gen_range(0.0..side as f64);
                let y1 = rng.gen_range(0.0..side as f64);
                let thick = rng.gen_range(1.0..2.5);
                let steps = 4 * side;
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    let x = x0 + t * (x1 - x0);
                    let y = y0 + t * (y1 - y0);
                    let lo_i = (y - thick).floor().max(0.0) as usize;
                    let hi_i = ((y + thick).ceil() as usize).min(side - 1);
                    let lo_j = (x - thick).floor().max(0.0) as usize;
                    let hi_j = ((x + thick).ceil() as usize).min(side - 1);
                    for i in lo_i..=hi_i {
                        for j in lo_j..=hi_j {
                            let dx = j as f64 - x;
                            let dy = i as f64 - y;
                            if dx * dx + dy * dy <= thick * thick {
                                mask[i * side + j] = 1.0;
                            }
                        }
                    }
                }
            }
        }
        masks.push(mask);
    }
    masks
}

/// Random polygon/stroke sketch, grayscale, normalized to [0, 1].
pub fn synth_spc_sample(side: usize, seed: u64) -> SceneTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = paint_shapes(side, &mut rng);
    let mut img = vec![0.05f64; side * side];
    for mask in &masks {
        let intensity = rng.gen_range(0.2..1.0);
        for (dst, &m) in img.iter_mut().zip(mask.iter()) {
            if m > 0.0 {
                *dst = intensity;
            }
        }
    }
    let peak = img.iter().cloned().fold(0.0f64, f64::max);
    let data = Array3::from_shape_vec(
        (1, side, side),
        img.into_iter().map(|v| v / peak).collect(),
    )
    .expect("shape");
    SceneTensor {
        modality: Modality::Spc,
        data,
    }
}

/// Shapes modulated by smooth nonnegative spectra over `bands` bands; the
/// adjacent-band jump of every generated spectrum stays below the default
/// smoothness bound.
pub fn synth_cassi_sample(side: usize, bands: usize, seed: u64) -> SceneTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = paint_shapes(side, &mut rng);
    let mut data = Array3::zeros((bands, side, side));
    // Background spectrum keeps every pixel nonzero.
    let spectra: Vec<Vec<f64>> = (0..=masks.len())
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let b = rng.gen_range(0.5..1.5);
            let denom = (bands.max(2) - 1) as f64;
            (0..bands)
                .map(|l| {
                    0.5 + 0.5 * (a + b * std::f64::consts::PI * l as f64 / denom).sin()
                })
                .collect()
        })
        .collect();
    for i in 0..side {
        for j in 0..side {
            // Topmost shape wins; background otherwise.
            let mut owner = masks.len();
            for (k, mask) in masks.iter().enumerate().rev() {
                if mask[i * side + j] > 0.0 {
                    owner = k;
                    break;
                }
            }
            let scale = if owner == masks.len() { 0.15 } else { 1.0 };
            for l in 0..bands {
                data[[l, i, j]] = scale * spectra[owner][l];
            }
        }
    }
    let peak = data.iter().cloned().fold(0.0f64, f64::max);
    data.mapv_inplace(|v| v / peak);
    SceneTensor {
        modality: Modality::Cassi,
        data,
    }
}

fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dst_side: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; dst_side * dst_side];
    for i in 0..dst_side {
        for j in 0..dst_side {
            let y = (i as f64 + 0.5) * sh as f64 / dst_side as f64 - 0.5;
            let x = (j as f64 + 0.5) * sw as f64 / dst_side as f64 - 0.5;
            let y0 = y.floor().max(0.0) as usize;
            let x0 = x.floor().max(0.0) as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let x1 = (x0 + 1).min(sw - 1);
            let fy = (y - y0 as f64).clamp(0.0, 1.0);
            let fx = (x - x0 as f64).clamp(0.0, 1.0);
            let v = src[y0 * sw + x0] * (1.0 - fy) * (1.0 - fx)
                + src[y0 * sw + x1] * (1.0 - fy) * fx
                + src[y1 * sw + x0] * fy * (1.0 - fx)
                + src[y1 * sw + x1] * fy * fx;
            out[i * dst_side + j] = v;
        }
    }
    out
}

fn load_grayscale(path: &Path, side: usize) -> Result<Vec<f64>> {
    let img = image::open(path).map_err(|e| CoreError::Invalid(format!(
        "unreadable image {}: {e}",
        path.display()
    )))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let src: Vec<f64> = gray.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    Ok(resize_bilinear(&src, w as usize, h as usize, side))
}

fn normalize_max(data: &mut Array3<f64>) -> Result<()> {
    let peak = data.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(CoreError::Invalid("all-zero external sample".into()));
    }
    data.mapv_inplace(|v| v / peak);
    Ok(())
}

/// Load raster images from a directory, resize, normalize and split. Files
/// are taken in lexicographic order; the split boundaries are
/// train/val/test counts from the spec. CASSI samples are subdirectories
/// holding one image per band.
pub fn ingest_external(dir: &Path, spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CoreError::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let entries: Vec<PathBuf> = match spec.modality {
        Modality::Cassi => entries.into_iter().filter(|p| p.is_dir()).collect(),
        _ => entries.into_iter().filter(|p| p.is_file()).collect(),
    };
    if entries.is_empty() {
        return Err(CoreError::Invalid(format!(
            "no usable samples in {}",
            dir.display()
        )));
    }
    let need = spec.train + spec.val + spec.test;
    if entries.len() < need {
        return Err(CoreError::Invalid(format!(
            "{} samples in {} but the split needs {need}",
            entries.len(),
            dir.display()
        )));
    }
    let load_sample = |path: &Path| -> Result<SceneTensor> {
        match spec.modality {
            Modality::Spc => {
                let img = load_grayscale(path, spec.side)?;
                let mut data =
                    Array3::from_shape_vec((1, spec.side, spec.side), img).expect("shape");
                normalize_max(&mut data)?;
                SceneTensor::new(Modality::Spc, data)
            }
            Modality::Mri => {
                // Grayscale magnitude, zero phase.
                let img = load_grayscale(path, spec.side)?;
                let mut data = Array3::zeros((2, spec.side, spec.side));
                for i in 0..spec.side {
                    for j in 0..spec.side {
                        data[[0, i, j]] = img[i * spec.side + j];
                    }
                }
                normalize_max(&mut data)?;
                SceneTensor::new(Modality::Mri, data)
            }
            Modality::Cassi => {
                let mut bands: Vec<PathBuf> = std::fs::read_dir(path)
                    .map_err(|e| CoreError::io(path.display().to_string(), e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect();
                bands.sort();
                if bands.len() != spec.bands {
                    return Err(CoreError::Invalid(format!(
                        "{} holds {} band images, expected {}",
                        path.display(),
                        bands.len(),
                        spec.bands
                    )));
                }
                let mut data = Array3::zeros((spec.bands, spec.side, spec.side));
                for (l, band_path) in bands.iter().enumerate() {
                    let img = load_grayscale(band_path, spec.side)?;
                    for i in 0..spec.side {
                        for j in 0..spec.side {
                            data[[l, i, j]] = img[i * spec.side + j];
                        }
                    }
                }
                normalize_max(&mut data)?;
                SceneTensor::new(Modality::Cassi, data)
            }
        }
    };
    let mut samples = Vec::with_capacity(need);
    for path in entries.iter().take(need) {
        samples.push(load_sample(path)?);
    }
    let test = samples.split_off(spec.train + spec.val);
    let val = samples.split_off(spec.train);
    Ok(Dataset {
        spec: spec.clone(),
        train: samples,
        val,
        test,
    })
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    spec: DatasetSpec,
    shape: (usize, usize, usize),
    counts: (usize, usize, usize),
}

const DATASET_MAGIC: &[u8; 8] = b"CODIDATA";

/// Persist a dataset in the versioned binary container.
pub fn save_cache(dataset: &Dataset, path: &Path) -> Result<()> {
    let shape = dataset
        .train
        .first()
        .or(dataset.val.first())
        .or(dataset.test.first())
        .map(|s| s.data.dim())
        .unwrap_or((0, 0, 0));
    let header = CacheHeader {
        spec: dataset.spec.clone(),
        shape,
        counts: (
            dataset.train.len(),
            dataset.val.len(),
            dataset.test.len(),
        ),
    };
    let mut blobs: Vec<&[f64]> = Vec::new();
    for split in [&dataset.train, &dataset.val, &dataset.test] {
        for s in split {
            blobs.push(s.data.as_slice().expect("contiguous scene"));
        }
    }
    io::write_container(path, DATASET_MAGIC, &header, &blobs)
}

/// Load a cached dataset, validating shapes.
pub fn load_cache(path: &Path) -> Result<Dataset> {
    let (header, blobs): (CacheHeader, Vec<Vec<f64>>) =
        io::read_container(path, DATASET_MAGIC, |h: &CacheHeader| {
            let len = h.shape.0 * h.shape.1 * h.shape.2;
            vec![len; h.counts.0 + h.counts.1 + h.counts.2]
        })?;
    let mut scenes = Vec::with_capacity(blobs.len());
    for blob in blobs {
        let data = Array3::from_shape_vec(header.shape, blob)
            .map_err(|e| CoreError::Shape(e.to_string()))?;
        scenes.push(SceneTensor::new(header.spec.modality, data)?);
    }
    let test = scenes.split_off(header.counts.0 + header.counts.1);
    let val = scenes.split_off(header.counts.0);
    Ok(Dataset {
        spec: header.spec,
        train: scenes,
        val,
        test,
    })
}

/// Build the dataset, reusing a cache file keyed by the spec hash when
/// `cache_dir` is given.
pub fn load_or_build(spec: &DatasetSpec, cache_dir: Option<&Path>) -> Result<Dataset> {
    if let Some(dir) = cache_dir {
        let path = dir.join(format!("dataset_{}.bin", spec.content_hash()));
        if path.exists() {
            let cached = load_cache(&path)?;
            if &cached.spec == spec {
                return Ok(cached);
            }
        }
        let built = build(spec)?;
        save_cache(&built, &path)?;
        return Ok(built);
    }
    build(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::checksum_f64;

    fn scene_hash(s: &SceneTensor) -> String {
        checksum_f64(s.data.as_slice().unwrap())
    }

    #[test]
    fn determinism_and_ranges() {
        for modality in [Modality::Mri, Modality::Spc, Modality::Cassi] {
            let mut spec = DatasetSpec::defaults(modality, 42);
            spec.train = 6;
            spec.val = 3;
            spec.test = 2;
            spec.side = 32;
            let a = build(&spec).unwrap();
            let b = build(&spec).unwrap();
            for (x, y) in a.train.iter().zip(b.train.iter()) {
                assert_eq!(scene_hash(x), scene_hash(y));
            }
            assert_eq!(a.train.len(), 6);
            assert_eq!(a.val.len(), 3);
            assert_eq!(a.test.len(), 2);
            for s in a.train.iter().chain(a.val.iter()).chain(a.test.iter()) {
                assert!(s.data.iter().all(|v| v.is_finite()));
                match modality {
                    Modality::Mri => {
                        // Magnitude channel in [0, 1].
                        let (_, h, w) = s.data.dim();
                        for i in 0..h {
                            for j in 0..w {
                                let m = (s.data[[0, i, j]].powi(2)
                                    + s.data[[1, i, j]].powi(2))
                                .sqrt();
                                assert!((0.0..=1.0 + 1e-9).contains(&m));
                            }
                        }
                    }
                    _ => {
                        assert!(s.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
                    }
                }
            }
        }
    }

    #[test]
    fn splits_are_disjoint_under_hashing() {
        let mut spec = DatasetSpec::defaults(Modality::Mri, 7);
        spec.train = 12;
        spec.val = 6;
        spec.test = 4;
        spec.side = 32;
        let d = build(&spec).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in d.train.iter().chain(d.val.iter()).chain(d.test.iter()) {
            assert!(seen.insert(scene_hash(s)), "duplicate sample across splits");
        }
    }

    #[test]
    fn cassi_spectra_are_smooth_and_banded() {
        let spec = DatasetSpec::defaults(Modality::Cassi, 11);
        assert_eq!(spec.bands, 8);
        let sample = synth_cassi_sample(32, 8, 99);
        let (bands, h, w) = sample.data.dim();
        assert_eq!(bands, 8);
        // Per-pixel adjacent-band jump stays under the bound (checked on the
        // normalized cube, which only shrinks jumps).
        for i in 0..h {
            for j in 0..w {
                for l in 0..bands - 1 {
                    let jump = (sample.data[[l + 1, i, j]] - sample.data[[l, i, j]]).abs();
                    assert!(jump <= spec.smooth_bound + 1e-9, "jump {jump}");
                }
            }
        }
        assert!(sample.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cache_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = DatasetSpec::defaults(Modality::Spc, 3);
        spec.train = 4;
        spec.val = 2;
        spec.test = 2;
        let a = load_or_build(&spec, Some(dir.path())).unwrap();
        let b = load_or_build(&spec, Some(dir.path())).unwrap();
        for (x, y) in a.train.iter().zip(b.train.iter()) {
            assert_eq!(scene_hash(x), scene_hash(y));
        }
    }

    #[test]
    fn external_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        // Empty directory errors.
        let mut spec = DatasetSpec::defaults(Modality::Spc, 5);
        spec.train = 8;
        spec.val = 1;
        spec.test = 1;
        spec.generator = Generator::ExternalDir(dir.path().to_path_buf());
        assert!(build(&spec).is_err());

        // Ten grayscale files split 8/1/1.
        for k in 0..10u8 {
            let img = image::GrayImage::from_fn(40, 40, |x, y| {
                image::Luma([((x + y) as u8).wrapping_mul(k + 1)])
            });
            img.save(dir.path().join(format!("img_{k:02}.png"))).unwrap();
        }
        let d = build(&spec).unwrap();
        assert_eq!(d.train.len(), 8);
        assert_eq!(d.val.len(), 1);
        assert_eq!(d.test.len(), 1);

        // Re-running yields byte-identical tensors.
        let d2 = build(&spec).unwrap();
        for (x, y) in d.train.iter().zip(d2.train.iter()) {
            assert_eq!(scene_hash(x), scene_hash(y));
        }

        // A corrupt file is reported by name.
        std::fs::write(dir.path().join("img_00.png"), b"not an image").unwrap();
        let err = build(&spec).unwrap_err().to_string();
        assert!(err.contains("img_00.png"), "{err}");
    }
}
