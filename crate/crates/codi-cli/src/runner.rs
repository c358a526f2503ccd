//! Run orchestration: stage 1 relaxation, stage 2 teacher training (or
//! checkpoint reuse), baselines, stage 3 distillation per seed, fixed-pattern
//! comparisons, encoder reports, noise sweeps and the results table.
//!
//! Checkpoints are keyed by the config's semantic hash, so re-running an
//! unchanged config loads everything and only regenerates reports; any
//! semantic change produces fresh keys.

use crate::config::ExperimentConfig;
use crate::plots;
use crate::report::{self, ResultRow};
use anyhow::{anyhow, bail, Context, Result};
use codi::analysis::encoder_report;
use codi::data::{self, Dataset};
use codi::decoder::DecoderNet;
use codi::distill::{
    distill_student, relax, train_decoder_only, train_e2e, Role, TrainedSystem,
};
use codi::patterns;
use codi::sensing::{add_awgn, BinarizeMode, CassiEncoder, Modality, MriEncoder, SceneTensor,
    SensingOperator, SpcEncoder};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub trained: usize,
    pub loaded: usize,
    pub results_csv: Option<PathBuf>,
    pub noise_csv: Option<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

pub struct Runner {
    pub config: ExperimentConfig,
    outdir: PathBuf,
    hash: String,
    dataset: Option<Dataset>,
    pub trained: usize,
    pub loaded: usize,
}

impl Runner {
    pub fn new(mut config: ExperimentConfig, overrides: &Overrides) -> Result<Self> {
        if let Some(dir) = &overrides.output_dir {
            config.experiment.output_dir = dir.clone();
        }
        if let Some(seed) = overrides.seed {
            config.experiment.seeds = vec![seed];
        }
        if let Some(epochs) = overrides.epochs {
            config.plan.epochs = epochs;
            config.plan.tau_switch_epoch = None;
            if config.teacher.epochs.is_some() {
                config.teacher.epochs = Some(epochs);
            }
        }
        config.validate()?;
        let hash = config.semantic_hash();
        let outdir = config.experiment.output_dir.clone();
        std::fs::create_dir_all(&outdir)
            .with_context(|| format!("creating {}", outdir.display()))?;
        Ok(Runner {
            config,
            outdir,
            hash,
            dataset: None,
            trained: 0,
            loaded: 0,
        })
    }

    pub fn provenance(&self) -> String {
        format!(
            "config_hash={} code_version={}",
            self.hash,
            env!("CARGO_PKG_VERSION")
        )
    }

    pub fn outdir(&self) -> &Path {
        &self.outdir
    }

    pub fn dataset(&mut self) -> Result<&Dataset> {
        if self.dataset.is_none() {
            let spec = self.config.dataset_spec();
            let cache = self.outdir.join("cache");
            std::fs::create_dir_all(&cache)?;
            let ds = data::load_or_build(&spec, Some(&cache))
                .map_err(|e| anyhow!("building dataset: {e}"))?;
            self.dataset = Some(ds);
        }
        Ok(self.dataset.as_ref().unwrap())
    }

    fn ckpt_path(&self, label: &str) -> PathBuf {
        self.outdir
            .join("checkpoints")
            .join(format!("{label}_{}.ckpt", self.hash))
    }

    fn history_csv(&self, label: &str, system: &TrainedSystem) -> Result<PathBuf> {
        let path = self.outdir.join("metrics").join(format!("history_{label}.csv"));
        report::write_history_csv(&path, &system.history, &self.provenance())?;
        Ok(path)
    }

    fn load_or_train(
        &mut self,
        label: &str,
        build: impl FnOnce(&ExperimentConfig, &Dataset) -> Result<TrainedSystem>,
    ) -> Result<TrainedSystem> {
        let path = self.ckpt_path(label);
        if path.exists() {
            let system = TrainedSystem::load(&path)
                .map_err(|e| anyhow!("loading checkpoint: {e}"))?;
            self.loaded += 1;
            self.history_csv(label, &system)?;
            return Ok(system);
        }
        self.dataset()?;
        let config = self.config.clone();
        let system = build(&config, self.dataset.as_ref().unwrap())?;
        system
            .save(&path)
            .map_err(|e| anyhow!("saving checkpoint: {e}"))?;
        self.trained += 1;
        self.history_csv(label, &system)?;
        Ok(system)
    }

    pub fn train_teacher(&mut self) -> Result<TrainedSystem> {
        self.load_or_train("teacher", |config, data| {
            let student_probe = config.student_op(config.op_seed(0))?;
            let spec = config.relaxation(&student_probe);
            let teacher_op = relax(&student_probe, &spec, config.teacher_op_seed())?;
            let net = DecoderNet::new(config.decoder_config(config.teacher_net_seed()))?;
            let plan = config.teacher_plan();
            Ok(train_e2e(teacher_op, net, data, &plan, Role::Teacher)?)
        })
    }

    pub fn train_baseline(&mut self, realization: u64) -> Result<TrainedSystem> {
        self.load_or_train(&format!("baseline_s{realization}"), |config, data| {
            let op = config.student_op(config.op_seed(realization))?;
            let net = DecoderNet::new(config.decoder_config(config.net_seed(realization)))?;
            let plan = config.distill_plan(config.run_seed(realization));
            Ok(train_e2e(op, net, data, &plan, Role::Baseline)?)
        })
    }

    pub fn distill(&mut self, realization: u64) -> Result<TrainedSystem> {
        let teacher = self.train_teacher()?;
        self.load_or_train(&format!("student_s{realization}"), move |config, data| {
            let op = config.student_op(config.op_seed(realization))?;
            let net = DecoderNet::new(config.decoder_config(config.net_seed(realization)))?;
            let plan = config.distill_plan(config.run_seed(realization));
            Ok(distill_student(op, net, &teacher, data, &plan)?)
        })
    }

    fn pattern_operator(&mut self, pattern: &str) -> Result<SensingOperator> {
        let config = &self.config;
        let modality = config.experiment.modality;
        let side = config.dataset.side;
        let mismatch = |pattern: &str| {
            anyhow!("pattern `{pattern}` is not compatible with modality {modality}")
        };
        if let Some(path) = pattern.strip_prefix("from-file:") {
            let grid = patterns::mask_from_file(Path::new(path))
                .map_err(|e| anyhow!("loading pattern: {e}"))?;
            return Ok(match modality {
                Modality::Mri => {
                    let accel = config.encoder.accel.expect("validated");
                    SensingOperator::Mri(MriEncoder::with_mask(grid, accel))
                }
                Modality::Spc => SensingOperator::Spc(SpcEncoder::from_rows(
                    grid,
                    side,
                    BinarizeMode::Real,
                )?),
                Modality::Cassi => {
                    let (h, w) = grid.dim();
                    let mut stack = ndarray::Array3::zeros((1, h, w));
                    stack.index_axis_mut(ndarray::Axis(0), 0).assign(&grid);
                    SensingOperator::Cassi(CassiEncoder::with_apertures(
                        stack,
                        config.dataset.bands,
                        BinarizeMode::Heaviside,
                    ))
                }
            });
        }
        match (pattern, modality) {
            ("radial", Modality::Mri) => {
                let accel = config.encoder.accel.expect("validated");
                let (mask, _) = patterns::radial_mask(side, accel)?;
                Ok(SensingOperator::Mri(MriEncoder::with_mask(mask, accel)))
            }
            ("spiral", Modality::Mri) => {
                let accel = config.encoder.accel.expect("validated");
                let (mask, _) = patterns::spiral_mask(side, accel)?;
                Ok(SensingOperator::Mri(MriEncoder::with_mask(mask, accel)))
            }
            ("hadamard", Modality::Spc) => {
                let n = side * side;
                let rows =
                    ((config.encoder.gamma.expect("validated") * n as f64).round() as usize)
                        .max(1);
                let a = patterns::hadamard_rows(n, rows)?;
                Ok(SensingOperator::Spc(SpcEncoder::from_rows(
                    a,
                    side,
                    BinarizeMode::Real,
                )?))
            }
            ("blue-noise", Modality::Cassi) => {
                let apertures = patterns::blue_noise_aperture(
                    side,
                    side,
                    0.5,
                    config.dataset.seed ^ 0xB10E,
                )?;
                Ok(SensingOperator::Cassi(CassiEncoder::with_apertures(
                    apertures,
                    config.dataset.bands,
                    BinarizeMode::Heaviside,
                )))
            }
            (p, _) => Err(mismatch(p)),
        }
    }

    /// Freeze the encoder to a classic pattern and train only the decoder.
    pub fn eval_fixed(&mut self, pattern: &str) -> Result<TrainedSystem> {
        let op = self.pattern_operator(pattern)?;
        let checksum_before = op.checksum();
        let realization = self.config.experiment.seeds[0];
        let label = format!("fixed_{}", pattern.replace([':', '/', '.'], "_"));
        let system = self.load_or_train(&label, move |config, data| {
            let net = DecoderNet::new(config.decoder_config(config.net_seed(realization)))?;
            let plan = config.distill_plan(config.run_seed(realization));
            Ok(train_decoder_only(op, net, data, &plan, Role::Baseline)?)
        })?;
        if system.op.checksum() != checksum_before {
            bail!("fixed pattern encoder changed during training");
        }
        Ok(system)
    }

    /// Encoder report (JSON) plus the standard plot set for one system.
    pub fn analyze(&mut self, label: &str, system: &TrainedSystem) -> Result<Vec<PathBuf>> {
        let window = self.config.comparisons.gram_window;
        let rep = encoder_report(&system.op, window)
            .map_err(|e| anyhow!("encoder report for {label}: {e}"))?;
        let mut artifacts = Vec::new();
        let report_path = self
            .outdir
            .join("reports")
            .join(format!("encoder_{label}.json"));
        if let Some(parent) = report_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&report_path, serde_json::to_string_pretty(&rep.to_json())?)?;
        artifacts.push(report_path);

        let plot_dir = self.outdir.join("plots");
        let spectrum = plot_dir.join(format!("{label}_spectrum.png"));
        plots::save_line_plot(&rep.normalized_singular_values, &spectrum)?;
        artifacts.push(spectrum);
        let gram = plot_dir.join(format!("{label}_gram.png"));
        plots::save_heatmap(&rep.gram_section, &gram, false)?;
        artifacts.push(gram);
        if let Some(fft) = &rep.fft_magnitude {
            let path = plot_dir.join(format!("{label}_fft.png"));
            plots::save_heatmap(fft, &path, true)?;
            artifacts.push(path);
        }
        if let Some(gn) = &rep.normalized_band_corr {
            let path = plot_dir.join(format!("{label}_bandcorr.png"));
            plots::save_heatmap(gn, &path, false)?;
            artifacts.push(path);
        }
        // Reconstruction sample: first validation scene.
        let data = self.dataset()?;
        if let Some(x) = data.val.first().or(data.test.first()) {
            let bp = system.op.backproject(x).map_err(|e| anyhow!("{e}"))?;
            let (recon, _) = system.net.decode(&bp).map_err(|e| anyhow!("{e}"))?;
            let path = plot_dir.join(format!("{label}_recon.png"));
            plots::save_scene_pair(x, &recon, &path)?;
            artifacts.push(path);
        }
        Ok(artifacts)
    }

    /// Re-evaluate trained systems under measurement noise across the
    /// configured SNR values (plus a noiseless column).
    pub fn noise_sweep(&mut self) -> Result<PathBuf> {
        let snrs = self.config.comparisons.noise_sweep_snrs.clone();
        if snrs.is_empty() {
            bail!("no noise_sweep_snrs configured");
        }
        let seeds = self.config.experiment.seeds.clone();
        let mut systems: Vec<(String, u64, TrainedSystem)> = Vec::new();
        for &s in &seeds {
            if self.config.comparisons.baseline_e2e {
                systems.push(("baseline".into(), s, self.train_baseline(s)?));
            }
            systems.push(("student".into(), s, self.distill(s)?));
        }
        let mut out = String::new();
        writeln!(out, "# {}", self.provenance())?;
        let header: Vec<String> = snrs.iter().map(|s| format!("snr_{s}")).collect();
        writeln!(out, "system,seed,clean,{}", header.join(","))?;
        let config = self.config.clone();
        let data = self.dataset()?.clone();
        for (name, seed, system) in &systems {
            let clean = noisy_psnr(system, &data.test, None, 0)?;
            let mut cols = Vec::with_capacity(snrs.len());
            for (snr_idx, &snr) in snrs.iter().enumerate() {
                let mut acc = 0.0;
                for (sample_idx, x) in data.test.iter().enumerate() {
                    let noise_seed = config.noise_seed(*seed, snr_idx, sample_idx);
                    acc += noisy_sample_psnr(system, x, Some(snr), noise_seed)?;
                }
                cols.push(format!("{}", acc / data.test.len() as f64));
            }
            writeln!(out, "{name},{seed},{clean},{}", cols.join(","))?;
        }
        let path = self.outdir.join("metrics").join("noise_sweep.csv");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, out)?;
        Ok(path)
    }

    /// Distill one student per teacher cell; invalid cells are skipped with
    /// a warning. The `best` column flags the cell with the top mean PSNR.
    pub fn teacher_sweep(&mut self) -> Result<PathBuf> {
        let cells = self.config.comparisons.teacher_sweep.clone();
        if cells.is_empty() {
            bail!("no teacher_sweep cells configured");
        }
        let seeds = self.config.experiment.seeds.clone();
        let probe = self
            .config
            .student_op(self.config.op_seed(seeds[0]))
            .map_err(|e| anyhow!("{e}"))?;
        let mut rows: Vec<(String, u64, f64)> = Vec::new();
        for &cell in &cells {
            let spec = match self.config.experiment.modality {
                Modality::Mri => codi::distill::RelaxationSpec::Mri { teacher_accel: cell },
                Modality::Spc => codi::distill::RelaxationSpec::Spc { teacher_gamma: cell },
                Modality::Cassi => codi::distill::RelaxationSpec::Cassi {
                    teacher_snapshots: cell.round() as usize,
                },
            };
            if let Err(e) = relax(&probe, &spec, self.config.teacher_op_seed()) {
                eprintln!("warning: skipping teacher cell {cell}: {e}");
                continue;
            }
            let cell_label = format!("cell{}", fmt_cell(cell));
            let teacher_label = format!("sweep_teacher_{cell_label}");
            let spec_clone = spec.clone();
            let teacher = self.load_or_train(&teacher_label, move |config, data| {
                let student_probe = config.student_op(config.op_seed(0))?;
                let teacher_op = relax(&student_probe, &spec_clone, config.teacher_op_seed())?;
                let net = DecoderNet::new(config.decoder_config(config.teacher_net_seed()))?;
                let plan = config.teacher_plan();
                Ok(train_e2e(teacher_op, net, data, &plan, Role::Teacher)?)
            })?;
            for &s in &seeds {
                let label = format!("sweep_student_{cell_label}_s{s}");
                let teacher_ref = teacher.clone();
                let student = self.load_or_train(&label, move |config, data| {
                    let op = config.student_op(config.op_seed(s))?;
                    let net = DecoderNet::new(config.decoder_config(config.net_seed(s)))?;
                    let plan = config.distill_plan(config.run_seed(s));
                    Ok(distill_student(op, net, &teacher_ref, data, &plan)?)
                })?;
                let psnr = student
                    .final_val_psnr()
                    .ok_or_else(|| anyhow!("student without history"))?;
                rows.push((format!("{cell}"), s, psnr));
            }
        }
        // Best cell by mean validation PSNR.
        let mut best_cell = String::new();
        let mut best_mean = f64::NEG_INFINITY;
        let unique_cells: Vec<String> = {
            let mut seen = Vec::new();
            for (c, _, _) in &rows {
                if !seen.contains(c) {
                    seen.push(c.clone());
                }
            }
            seen
        };
        for c in &unique_cells {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|(rc, _, _)| rc == c)
                .map(|(_, _, p)| *p)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if mean > best_mean {
                best_mean = mean;
                best_cell = c.clone();
            }
        }
        let mut out = String::new();
        writeln!(out, "# {}", self.provenance())?;
        writeln!(out, "cell,seed,val_psnr,best")?;
        for (c, s, p) in &rows {
            writeln!(out, "{c},{s},{p},{}", if c == &best_cell { 1 } else { 0 })?;
        }
        let path = self.outdir.join("metrics").join("teacher_sweep.csv");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, out)?;
        Ok(path)
    }

    fn config_summary(&self, role: &str) -> String {
        let c = &self.config;
        match c.experiment.modality {
            Modality::Mri => {
                if role == "teacher" {
                    let probe = c.student_op(c.op_seed(0)).expect("validated");
                    match c.relaxation(&probe) {
                        codi::distill::RelaxationSpec::Mri { teacher_accel } => {
                            format!("mri af={teacher_accel} n={}", c.dataset.side)
                        }
                        _ => unreachable!(),
                    }
                } else {
                    format!(
                        "mri af={} n={}",
                        c.encoder.accel.expect("validated"),
                        c.dataset.side
                    )
                }
            }
            Modality::Spc => format!(
                "spc gamma={} n={}",
                c.encoder.gamma.expect("validated"),
                c.dataset.side
            ),
            Modality::Cassi => format!(
                "cassi snapshots={} bands={}",
                c.encoder.snapshots.expect("validated"),
                c.dataset.bands
            ),
        }
    }

    /// Results table over every system this config defines, recomputed from
    /// checkpoints.
    pub fn report(&mut self) -> Result<PathBuf> {
        let seeds = self.config.experiment.seeds.clone();
        let mut rows = Vec::new();

        let teacher = self.train_teacher()?;
        let data = self.dataset()?.clone();
        let (p, s, a) = report::eval_on_test(&teacher, &data)?;
        rows.push(ResultRow {
            system: "teacher".into(),
            config: self.config_summary("teacher"),
            psnr_mean: p,
            psnr_std: None,
            ssim_mean: s,
            ssim_std: None,
            sam_mean: a,
            n_seeds: 1,
        });

        let mut collect = |runner: &mut Runner,
                           name: &str,
                           systems: Vec<TrainedSystem>|
         -> Result<()> {
            let mut psnrs = Vec::new();
            let mut ssims = Vec::new();
            let mut sams = Vec::new();
            for sys in &systems {
                let (p, s, a) = report::eval_on_test(sys, &data)?;
                psnrs.push(p);
                ssims.push(s);
                if let Some(a) = a {
                    sams.push(a);
                }
            }
            let (pm, ps) = report::mean_std(&psnrs);
            let (sm, ss) = report::mean_std(&ssims);
            rows.push(ResultRow {
                system: name.into(),
                config: runner.config_summary(name),
                psnr_mean: pm,
                psnr_std: ps,
                ssim_mean: sm,
                ssim_std: ss,
                sam_mean: if sams.is_empty() {
                    None
                } else {
                    Some(sams.iter().sum::<f64>() / sams.len() as f64)
                },
                n_seeds: systems.len(),
            });
            Ok(())
        };

        if self.config.comparisons.baseline_e2e {
            let systems: Vec<TrainedSystem> = seeds
                .iter()
                .map(|&s| self.train_baseline(s))
                .collect::<Result<_>>()?;
            collect(self, "baseline", systems)?;
        }
        let students: Vec<TrainedSystem> = seeds
            .iter()
            .map(|&s| self.distill(s))
            .collect::<Result<_>>()?;
        collect(self, "student", students)?;
        for pattern in self.config.comparisons.fixed_patterns.clone() {
            let system = self.eval_fixed(&pattern)?;
            collect(self, &format!("fixed-{pattern}"), vec![system])?;
        }

        let path = self.outdir.join("metrics").join("results.csv");
        report::write_results_csv(&path, &rows, &self.provenance())?;
        Ok(path)
    }

    /// The full pipeline: teacher, baselines, students, fixed patterns,
    /// analysis artifacts, optional noise sweep, results table.
    pub fn run(&mut self) -> Result<RunSummary> {
        let mut summary = RunSummary::default();
        let seeds = self.config.experiment.seeds.clone();

        let teacher = self.train_teacher()?;
        summary.plots.extend(self.analyze("teacher", &teacher)?);
        for &s in &seeds {
            if self.config.comparisons.baseline_e2e {
                let baseline = self.train_baseline(s)?;
                if s == seeds[0] {
                    summary
                        .plots
                        .extend(self.analyze(&format!("baseline_s{s}"), &baseline)?);
                }
            }
            let student = self.distill(s)?;
            if s == seeds[0] {
                summary
                    .plots
                    .extend(self.analyze(&format!("student_s{s}"), &student)?);
            }
        }
        for pattern in self.config.comparisons.fixed_patterns.clone() {
            let system = self.eval_fixed(&pattern)?;
            let label = format!("fixed_{}", pattern.replace([':', '/', '.'], "_"));
            summary.plots.extend(self.analyze(&label, &system)?);
        }
        if !self.config.comparisons.noise_sweep_snrs.is_empty() {
            summary.noise_csv = Some(self.noise_sweep()?);
        }
        summary.results_csv = Some(self.report()?);
        summary.trained = self.trained;
        summary.loaded = self.loaded;
        Ok(summary)
    }
}

fn fmt_cell(cell: f64) -> String {
    format!("{cell}").replace('.', "p")
}

fn noisy_sample_psnr(
    system: &TrainedSystem,
    x: &SceneTensor,
    snr: Option<f64>,
    seed: u64,
) -> Result<f64> {
    let y = system.op.forward(x).map_err(|e| anyhow!("{e}"))?;
    let y = match snr {
        Some(snr) => add_awgn(&y, snr, seed).map_err(|e| anyhow!("{e}"))?,
        None => y,
    };
    let bp = system.op.adjoint(&y).map_err(|e| anyhow!("{e}"))?;
    let (recon, _) = system.net.decode(&bp).map_err(|e| anyhow!("{e}"))?;
    let (psnr, _) = codi::analysis::scene_quality(&recon, x).map_err(|e| anyhow!("{e}"))?;
    Ok(psnr)
}

fn noisy_psnr(
    system: &TrainedSystem,
    test: &[SceneTensor],
    snr: Option<f64>,
    seed_base: u64,
) -> Result<f64> {
    let mut acc = 0.0;
    for (i, x) in test.iter().enumerate() {
        acc += noisy_sample_psnr(system, x, snr, seed_base + i as u64)?;
    }
    Ok(acc / test.len() as f64)
}
