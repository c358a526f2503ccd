//! Results tables and metric CSVs. Every number is recomputed from stored
//! checkpoints; files carry the config hash and code version as provenance,
//! and no timestamps, so regeneration is byte-stable.

use anyhow::Result;
use codi::analysis::{sam, scene_quality};
use codi::data::Dataset;
use codi::distill::{EpochRecord, TrainedSystem};
use codi::par;
use codi::sensing::Modality;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub system: String,
    pub config: String,
    pub psnr_mean: f64,
    pub psnr_std: Option<f64>,
    pub ssim_mean: f64,
    pub ssim_std: Option<f64>,
    pub sam_mean: Option<f64>,
    pub n_seeds: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "single-seed".into())
}

/// Final test-split quality of a trained system: mean PSNR/SSIM, plus the
/// mean spectral angle for spectral cubes.
pub fn eval_on_test(system: &TrainedSystem, data: &Dataset) -> Result<(f64, f64, Option<f64>)> {
    let scores = par::map_collect(&data.test, |x| -> codi::Result<(f64, f64, Option<f64>)> {
        let bp = system.op.backproject(x)?;
        let (recon, _) = system.net.decode(&bp)?;
        let (psnr, ssim) = scene_quality(&recon, x)?;
        let angle = if x.modality == Modality::Cassi {
            Some(sam(&recon.data, &x.data, None)?)
        } else {
            None
        };
        Ok((psnr, ssim, angle))
    });
    let mut psnr_acc = 0.0;
    let mut ssim_acc = 0.0;
    let mut sam_acc = 0.0;
    let mut has_sam = false;
    let n = scores.len() as f64;
    for s in scores {
        let (p, s2, a) = s?;
        psnr_acc += p;
        ssim_acc += s2;
        if let Some(a) = a {
            sam_acc += a;
            has_sam = true;
        }
    }
    Ok((
        psnr_acc / n,
        ssim_acc / n,
        if has_sam { Some(sam_acc / n) } else { None },
    ))
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow], provenance: &str) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# {provenance}")?;
    writeln!(
        out,
        "system,config,psnr_mean,psnr_std,ssim_mean,ssim_std,sam_mean,n_seeds"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.system,
            r.config,
            r.psnr_mean,
            fmt_opt(r.psnr_std),
            r.ssim_mean,
            fmt_opt(r.ssim_std),
            r.sam_mean.map(|v| format!("{v}")).unwrap_or_default(),
            r.n_seeds
        )?;
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord], provenance: &str) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# {provenance}")?;
    writeln!(out, "epoch,task,dec,enc,reg,total,val_psnr,val_ssim")?;
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.task, r.dec, r.enc, r.reg, r.total, r.val_psnr, r.val_ssim
        )?;
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}
