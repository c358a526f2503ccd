//! Classic fixed encoder patterns used as non-learned comparisons: radial
//! and spiral k-space masks, Hadamard aperture rows and void-and-cluster
//! blue noise. Each generator is a documented parametric construction and
//! reports the parameters it settled on.

use crate::error::{CoreError, Result};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Parameters a generator settled on, recorded into reports.
#[derive(Debug, Clone, Serialize)]
pub struct PatternInfo {
    pub kind: String,
    pub parameter: f64,
    pub transmittance: f64,
}

fn transmittance(mask: &Array2<f64>) -> f64 {
    mask.sum() / mask.len() as f64
}

fn rasterize_spokes(grid: usize, spokes: usize) -> Array2<f64> {
    let mut mask = Array2::<f64>::zeros((grid, grid));
    let c = (grid as f64 - 1.0) / 2.0;
    let radius = (grid as f64) / 2.0f64.sqrt();
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let steps = grid * 4;
    for k in 0..spokes {
        let angle = k as f64 * golden;
        let (s, co) = angle.sin_cos();
        for t in 0..=steps {
            // Full diameter: t spans [-1, 1].
            let r = radius * (2.0 * t as f64 / steps as f64 - 1.0);
            let x = c + r * co;
            let y = c + r * s;
            let i = y.round() as isize;
            let j = x.round() as isize;
            if i >= 0 && j >= 0 && (i as usize) < grid && (j as usize) < grid {
                mask[[i as usize, j as usize]] = 1.0;
            }
        }
    }
    mask
}

/// Golden-angle radial mask targeting transmittance `1/accel`: spokes are
/// added until the pixel budget is met, keeping whichever count lands
/// closest.
pub fn radial_mask(grid: usize, accel: f64) -> Result<(Array2<f64>, PatternInfo)> {
    if accel < 1.0 {
        return Err(CoreError::Config(format!(
            "acceleration factor {accel} must be >= 1"
        )));
    }
    let target = 1.0 / accel;
    let mut best: Option<(f64, usize, Array2<f64>)> = None;
    for spokes in 1..=(2 * grid) {
        let mask = rasterize_spokes(grid, spokes);
        let t = transmittance(&mask);
        let gap = (t - target).abs();
        if best.as_ref().map_or(true, |(g, _, _)| gap < *g) {
            best = Some((gap, spokes, mask));
        }
        if t > target {
            break;
        }
    }
    let (_, spokes, mask) = best.unwrap();
    let info = PatternInfo {
        kind: "radial".into(),
        parameter: spokes as f64,
        transmittance: transmittance(&mask),
    };
    Ok((mask, info))
}

fn rasterize_spiral(grid: usize, turns: f64) -> Array2<f64> {
    let mut mask = Array2::<f64>::zeros((grid, grid));
    let c = (grid as f64 - 1.0) / 2.0;
    let r_max = grid as f64 / 2.0f64.sqrt();
    let theta_max = turns * std::f64::consts::TAU;
    // Archimedean r = a * theta with fine arc-length stepping.
    let a = r_max / theta_max;
    let mut theta = 0.0;
    while theta <= theta_max {
        let r = a * theta;
        let x = c + r * theta.cos();
        let y = c + r * theta.sin();
        let i = y.round() as isize;
        let j = x.round() as isize;
        if i >= 0 && j >= 0 && (i as usize) < grid && (j as usize) < grid {
            mask[[i as usize, j as usize]] = 1.0;
        }
        // Step bounded by half a pixel of arc length.
        let speed = (a * a * (1.0 + theta * theta)).sqrt().max(1e-6);
        theta += 0.5 / speed;
    }
    mask
}

/// Archimedean spiral mask targeting transmittance `1/accel`; the number of
/// turns is found by bisection on the rasterized coverage.
pub fn spiral_mask(grid: usize, accel: f64) -> Result<(Array2<f64>, PatternInfo)> {
    if accel < 1.0 {
        return Err(CoreError::Config(format!(
            "acceleration factor {accel} must be >= 1"
        )));
    }
    let target = 1.0 / accel;
    let (mut lo, mut hi) = (0.5f64, grid as f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let t = transmittance(&rasterize_spiral(grid, mid));
        if t < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let turns = 0.5 * (lo + hi);
    let mask = rasterize_spiral(grid, turns);
    let info = PatternInfo {
        kind: "spiral".into(),
        parameter: turns,
        transmittance: transmittance(&mask),
    };
    Ok((mask, info))
}

/// First `rows` rows of the Sylvester Hadamard matrix of order `n`
/// (entries +-1). `n` must be a power of two; rows are mutually orthogonal.
pub fn hadamard_rows(n: usize, rows: usize) -> Result<Array2<f64>> {
    if !n.is_power_of_two() {
        return Err(CoreError::Config(format!(
            "hadamard order {n} must be a power of two"
        )));
    }
    if rows == 0 || rows > n {
        return Err(CoreError::Config(format!(
            "row count {rows} out of range 1..={n}"
        )));
    }
    let mut a = Array2::<f64>::zeros((rows, n));
    for i in 0..rows {
        for j in 0..n {
            // Sylvester entry: (-1)^(popcount(i & j)).
            let bits = (i & j).count_ones();
            a[[i, j]] = if bits % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    Ok(a)
}

/// Void-and-cluster blue-noise mask at the given density: start from seeded
/// white noise, then repeatedly move the tightest cluster pixel into the
/// largest void under a toroidal Gaussian energy (sigma 1.5).
pub fn blue_noise_mask(
    rows: usize,
    cols: usize,
    density: f64,
    seed: u64,
) -> Result<(Array2<f64>, PatternInfo)> {
    if !(0.0..=1.0).contains(&density) {
        return Err(CoreError::Config(format!(
            "density {density} outside [0, 1]"
        )));
    }
    let total = rows * cols;
    let ones = ((total as f64) * density).round() as usize;
    let mut mask = Array2::<f64>::zeros((rows, cols));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed = 0;
    while placed < ones {
        let i = rng.gen_range(0..rows);
        let j = rng.gen_range(0..cols);
        if mask[[i, j]] == 0.0 {
            mask[[i, j]] = 1.0;
            placed += 1;
        }
    }
    if ones == 0 || ones == total {
        let info = PatternInfo {
            kind: "blue-noise".into(),
            parameter: 0.0,
            transmittance: transmittance(&mask),
        };
        return Ok((mask, info));
    }
    let sigma = 1.5f64;
    // Toroidal Gaussian kernel.
    let kernel = {
        let mut k = Array2::<f64>::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                let di = (i as isize).min(rows as isize - i as isize) as f64;
                let dj = (j as isize).min(cols as isize - j as isize) as f64;
                k[[i, j]] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            }
        }
        k
    };
    let energy_at = |mask: &Array2<f64>, i: usize, j: usize| -> f64 {
        let mut acc = 0.0;
        for a in 0..rows {
            for b in 0..cols {
                if mask[[a, b]] != 0.0 {
                    let di = (a + rows - i) % rows;
                    let dj = (b + cols - j) % cols;
                    acc += kernel[[di, dj]];
                }
            }
        }
        acc
    };
    let mut swaps = 0usize;
    let max_swaps = 4 * total;
    loop {
        // Tightest cluster: the 1 with the highest energy.
        let mut cluster = (0, 0);
        let mut cluster_e = f64::NEG_INFINITY;
        let mut void = (0, 0);
        let mut void_e = f64::INFINITY;
        for i in 0..rows {
            for j in 0..cols {
                let e = energy_at(&mask, i, j);
                if mask[[i, j]] != 0.0 && e > cluster_e {
                    cluster_e = e;
                    cluster = (i, j);
                }
                if mask[[i, j]] == 0.0 && e < void_e {
                    void_e = e;
                    void = (i, j);
                }
            }
        }
        mask[[cluster.0, cluster.1]] = 0.0;
        let e_after = energy_at(&mask, void.0, void.1);
        let e_back = energy_at(&mask, cluster.0, cluster.1);
        if e_after >= e_back {
            // Removing the cluster pixel already made its site the best
            // void: converged.
            mask[[cluster.0, cluster.1]] = 1.0;
            break;
        }
        mask[[void.0, void.1]] = 1.0;
        swaps += 1;
        if swaps >= max_swaps {
            break;
        }
    }
    let info = PatternInfo {
        kind: "blue-noise".into(),
        parameter: swaps as f64,
        transmittance: transmittance(&mask),
    };
    Ok((mask, info))
}

/// Single-snapshot blue-noise coded aperture stack.
pub fn blue_noise_aperture(
    rows: usize,
    cols: usize,
    density: f64,
    seed: u64,
) -> Result<Array3<f64>> {
    let (mask, _) = blue_noise_mask(rows, cols, density, seed)?;
    let mut out = Array3::zeros((1, rows, cols));
    out.index_axis_mut(ndarray::Axis(0), 0).assign(&mask);
    Ok(out)
}

/// Load a binary mask from a whitespace/comma separated text grid.
pub fn mask_from_file(path: &std::path::Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| CoreError::Corrupt {
                    path: path.display().to_string(),
                    detail: format!("line {}: {e}", lineno + 1),
                })
            })
            .collect::<Result<_>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(CoreError::Corrupt {
            path: path.display().to_string(),
            detail: "no rows".into(),
        });
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CoreError::Corrupt {
            path: path.display().to_string(),
            detail: "ragged rows".into(),
        });
    }
    let mut mask = Array2::zeros((rows.len(), cols));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            mask[[i, j]] = v;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_hits_af4_budget() {
        let (mask, info) = radial_mask(64, 4.0).unwrap();
        let t = mask.sum() / mask.len() as f64;
        assert!(
            (t - 0.25).abs() <= 0.05 * 0.25,
            "transmittance {t} (spokes {})",
            info.parameter
        );
        assert!(mask.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn spiral_hits_af4_budget() {
        let (mask, info) = spiral_mask(64, 4.0).unwrap();
        let t = info.transmittance;
        assert!((t - 0.25).abs() <= 0.05 * 0.25, "transmittance {t}");
        assert!(mask.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn hadamard_rows_are_orthogonal() {
        let a = hadamard_rows(1024, 256).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..1024).map(|k| a[[i, k]] * a[[j, k]]).sum();
                let expected = if i == j { 1024.0 } else { 0.0 };
                assert_eq!(dot, expected);
            }
        }
        // Measurement-vector coherence (rows as atoms) is exactly zero; the
        // scene-side column coherence of a subsampled Hadamard matrix cannot
        // be zero for m < n.
        let row_coherence = crate::analysis::mutual_coherence(&a.t().to_owned()).unwrap();
        assert_eq!(row_coherence, 0.0);
        assert!(hadamard_rows(100, 4).is_err());
        assert!(hadamard_rows(16, 0).is_err());
    }

    #[test]
    fn blue_noise_density_and_spread() {
        let (mask, info) = blue_noise_mask(32, 32, 0.5, 7).unwrap();
        assert_eq!(mask.sum() as usize, 512);
        assert!((info.transmittance - 0.5).abs() < 1e-9);
        // Blue noise spreads energy: no 3x3 block may be entirely filled.
        let mut worst = 0usize;
        for i in 0..30 {
            for j in 0..30 {
                let mut count = 0;
                for a in 0..3 {
                    for b in 0..3 {
                        if mask[[i + a, j + b]] != 0.0 {
                            count += 1;
                        }
                    }
                }
                worst = worst.max(count);
            }
        }
        assert!(worst < 9, "solid 3x3 cluster survived relaxation");
        // Determinism.
        let (again, _) = blue_noise_mask(32, 32, 0.5, 7).unwrap();
        assert_eq!(mask, again);
    }

    #[test]
    fn mask_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        std::fs::write(&path, "# comment\n1 0 1\n0,1,0\n").unwrap();
        let mask = mask_from_file(&path).unwrap();
        assert_eq!(mask.dim(), (2, 3));
        assert_eq!(mask[[0, 0]], 1.0);
        assert_eq!(mask[[1, 1]], 1.0);
        std::fs::write(&path, "1 0\n1\n").unwrap();
        assert!(mask_from_file(&path).is_err());
    }
}
