use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use codi_cli::config::ExperimentConfig;
use codi_cli::runner::{Overrides, Runner};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "codi",
    about = "Design computational imaging encoders by teacher-student training",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config (TOML, schema version 1).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the training epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: teacher, baselines, students, comparisons, reports.
    Run(CommonArgs),
    /// Stage 1 + 2: relax the student encoder and train the teacher.
    TrainTeacher(CommonArgs),
    /// Train the end-to-end baselines (one per seed).
    TrainBaseline(CommonArgs),
    /// Stage 3: distill students under the frozen teacher (one per seed).
    Distill(CommonArgs),
    /// Freeze a classic pattern as the encoder and train only the decoder.
    EvalFixed {
        #[command(flatten)]
        common: CommonArgs,
        /// radial | spiral | hadamard | blue-noise | from-file:<path>
        #[arg(long)]
        pattern: String,
    },
    /// Encoder diagnostics and plots for the trained systems.
    Analyze(CommonArgs),
    /// Re-evaluate trained systems under measurement noise.
    SweepNoise(CommonArgs),
    /// Distill one student per configured teacher cell.
    SweepTeacher(CommonArgs),
    /// Regenerate the results table from stored checkpoints.
    Report(CommonArgs),
}

fn runner_for(common: &CommonArgs) -> Result<Runner> {
    let config = ExperimentConfig::load(&common.config)?;
    let overrides = Overrides {
        output_dir: common.output_dir.clone(),
        seed: common.seed,
        epochs: common.epochs,
    };
    Runner::new(config, &overrides)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(common) => {
            let mut runner = runner_for(&common)?;
            let summary = runner.run()?;
            println!(
                "run complete: {} trained, {} loaded",
                summary.trained, summary.loaded
            );
            if let Some(path) = summary.results_csv {
                println!("results table: {}", path.display());
            }
            if let Some(path) = summary.noise_csv {
                println!("noise sweep:   {}", path.display());
            }
            println!("plots/reports: {}", summary.plots.len());
        }
        Command::TrainTeacher(common) => {
            let mut runner = runner_for(&common)?;
            let teacher = runner.train_teacher()?;
            println!(
                "teacher trained: final val PSNR {:.2} dB",
                teacher.final_val_psnr().unwrap_or(f64::NAN)
            );
        }
        Command::TrainBaseline(common) => {
            let mut runner = runner_for(&common)?;
            for seed in runner.config.experiment.seeds.clone() {
                let system = runner.train_baseline(seed)?;
                println!(
                    "baseline seed {seed}: final val PSNR {:.2} dB",
                    system.final_val_psnr().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Distill(common) => {
            let mut runner = runner_for(&common)?;
            for seed in runner.config.experiment.seeds.clone() {
                let system = runner.distill(seed)?;
                println!(
                    "student seed {seed}: final val PSNR {:.2} dB",
                    system.final_val_psnr().unwrap_or(f64::NAN)
                );
            }
        }
        Command::EvalFixed { common, pattern } => {
            let mut runner = runner_for(&common)?;
            let system = runner.eval_fixed(&pattern)?;
            println!(
                "fixed `{pattern}`: final val PSNR {:.2} dB",
                system.final_val_psnr().unwrap_or(f64::NAN)
            );
        }
        Command::Analyze(common) => {
            let mut runner = runner_for(&common)?;
            let teacher = runner.train_teacher()?;
            let mut artifacts = runner.analyze("teacher", &teacher)?;
            for seed in runner.config.experiment.seeds.clone() {
                let student = runner.distill(seed)?;
                artifacts.extend(runner.analyze(&format!("student_s{seed}"), &student)?);
                if runner.config.comparisons.baseline_e2e {
                    let baseline = runner.train_baseline(seed)?;
                    artifacts.extend(runner.analyze(&format!("baseline_s{seed}"), &baseline)?);
                }
            }
            println!("wrote {} analysis artifacts", artifacts.len());
        }
        Command::SweepNoise(common) => {
            let mut runner = runner_for(&common)?;
            let path = runner.noise_sweep()?;
            println!("noise sweep: {}", path.display());
        }
        Command::SweepTeacher(common) => {
            let mut runner = runner_for(&common)?;
            let path = runner.teacher_sweep()?;
            println!("teacher sweep: {}", path.display());
        }
        Command::Report(common) => {
            let mut runner = runner_for(&common)?;
            let path = runner.report()?;
            println!("results table: {}", path.display());
        }
    }
    Ok(())
}
