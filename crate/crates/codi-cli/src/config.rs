//! Declarative experiment configuration (TOML, schema version 1).
//!
//! A config names the modality, dataset, decoder, student encoder, teacher
//! relaxation, training plan and the comparison protocol. Everything that
//! affects results feeds the semantic hash; presentation fields (name,
//! output directory) do not, so moving an experiment does not invalidate its
//! checkpoints.

use anyhow::{bail, Context, Result};
use codi::data::{DatasetSpec, Generator};
use codi::decoder::DecoderConfig;
use codi::distill::{DistillPlan, RelaxationSpec, TauSchedule};
use codi::optim::OptimizerKind;
use codi::sensing::{
    BinarizeMode, CassiEncoder, Modality, MriEncoder, SensingOperator, SpcEncoder,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentSection,
    pub dataset: DatasetSection,
    pub decoder: DecoderSection,
    pub encoder: EncoderSection,
    #[serde(default)]
    pub teacher: TeacherSection,
    pub plan: PlanSection,
    #[serde(default)]
    pub comparisons: ComparisonsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub name: String,
    pub modality: Modality,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSection {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub side: usize,
    #[serde(default = "default_bands")]
    pub bands: usize,
    pub seed: u64,
    #[serde(default)]
    pub external_dir: Option<PathBuf>,
}

fn default_bands() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderSection {
    pub width_factor: usize,
    pub depth: usize,
    pub base_filters: usize,
    #[serde(default)]
    pub input_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderSection {
    pub mode: BinarizeMode,
    #[serde(default)]
    pub accel: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TeacherSection {
    #[serde(default)]
    pub accel: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub snapshots: Option<usize>,
    /// Teacher training budget; defaults to the plan's epochs.
    #[serde(default)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    #[serde(default = "default_tau1")]
    pub tau_phase1: f64,
    #[serde(default = "default_tau2")]
    pub tau_phase2: f64,
    #[serde(default)]
    pub tau_switch_epoch: Option<usize>,
    pub seed: u64,
}

fn default_tau1() -> f64 {
    1.0
}

fn default_tau2() -> f64 {
    1e15
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonsSection {
    #[serde(default = "default_true")]
    pub baseline_e2e: bool,
    #[serde(default)]
    pub fixed_patterns: Vec<String>,
    #[serde(default)]
    pub noise_sweep_snrs: Vec<f64>,
    #[serde(default = "default_window")]
    pub gram_window: usize,
    /// Teacher-sweep cells, interpreted per modality (acceleration factors,
    /// compression ratios, snapshot counts).
    #[serde(default)]
    pub teacher_sweep: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_window() -> usize {
    16
}

impl Default for ComparisonsSection {
    fn default() -> Self {
        ComparisonsSection {
            baseline_e2e: true,
            fixed_patterns: Vec::new(),
            noise_sweep_snrs: Vec::new(),
            gram_window: default_window(),
            teacher_sweep: Vec::new(),
        }
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.experiment.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        match self.experiment.modality {
            Modality::Mri if self.encoder.accel.is_none() => {
                bail!("mri encoder needs `accel`")
            }
            Modality::Spc if self.encoder.gamma.is_none() => {
                bail!("spc encoder needs `gamma`")
            }
            Modality::Cassi if self.encoder.snapshots.is_none() => {
                bail!("cassi encoder needs `snapshots`")
            }
            _ => {}
        }
        self.distill_plan(0).validate()?;
        Ok(())
    }

    /// Hash of every semantically meaningful field: presentation fields
    /// (name, output directory) are cleared before hashing.
    pub fn semantic_hash(&self) -> String {
        let mut scrubbed = self.clone();
        scrubbed.experiment.name = String::new();
        scrubbed.experiment.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&scrubbed).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let generator = match &self.dataset.external_dir {
            Some(dir) => Generator::ExternalDir(dir.clone()),
            None => match self.experiment.modality {
                Modality::Mri => Generator::Phantom,
                Modality::Spc => Generator::Shapes,
                Modality::Cassi => Generator::SpectralSmooth,
            },
        };
        DatasetSpec {
            modality: self.experiment.modality,
            train: self.dataset.train,
            val: self.dataset.val,
            test: self.dataset.test,
            side: self.dataset.side,
            bands: self.dataset.bands,
            generator,
            seed: self.dataset.seed,
            smooth_bound: 0.35,
        }
    }

    pub fn decoder_config(&self, seed: u64) -> DecoderConfig {
        let default_scale = match self.experiment.modality {
            Modality::Spc => 1.0 / (self.dataset.side * self.dataset.side) as f64,
            _ => 1.0,
        };
        DecoderConfig {
            in_channels: match self.experiment.modality {
                Modality::Mri => 2,
                Modality::Spc => 1,
                Modality::Cassi => self.dataset.bands,
            },
            width_factor: self.decoder.width_factor,
            depth: self.decoder.depth,
            base_filters: self.decoder.base_filters,
            height: self.dataset.side,
            width: self.dataset.side,
            input_scale: self.decoder.input_scale.unwrap_or(default_scale),
            seed,
        }
    }

    pub fn student_op(&self, seed: u64) -> Result<SensingOperator> {
        let side = self.dataset.side;
        Ok(match self.experiment.modality {
            Modality::Mri => SensingOperator::Mri(MriEncoder::seeded(
                side,
                self.encoder.accel.expect("validated"),
                self.encoder.mode,
                seed,
            )?),
            Modality::Spc => {
                let n = side * side;
                let rows =
                    ((self.encoder.gamma.expect("validated") * n as f64).round() as usize).max(1);
                SensingOperator::Spc(SpcEncoder::seeded(side, rows, self.encoder.mode, seed)?)
            }
            Modality::Cassi => SensingOperator::Cassi(CassiEncoder::seeded(
                side,
                side,
                self.dataset.bands,
                self.encoder.snapshots.expect("validated"),
                self.encoder.mode,
                seed,
            )?),
        })
    }

    pub fn relaxation(&self, student: &SensingOperator) -> RelaxationSpec {
        match self.experiment.modality {
            Modality::Mri => match self.teacher.accel {
                Some(accel) => RelaxationSpec::Mri {
                    teacher_accel: accel,
                },
                None => RelaxationSpec::default_for(student),
            },
            Modality::Spc => match self.teacher.gamma {
                Some(gamma) => RelaxationSpec::Spc {
                    teacher_gamma: gamma,
                },
                None => RelaxationSpec::default_for(student),
            },
            Modality::Cassi => match self.teacher.snapshots {
                Some(snapshots) => RelaxationSpec::Cassi {
                    teacher_snapshots: snapshots,
                },
                None => RelaxationSpec::default_for(student),
            },
        }
    }

    pub fn distill_plan(&self, seed: u64) -> DistillPlan {
        let epochs = self.plan.epochs;
        DistillPlan {
            lambda1: self.plan.lambda1,
            lambda2: self.plan.lambda2,
            tau: TauSchedule {
                phase1: self.plan.tau_phase1,
                phase2: self.plan.tau_phase2,
                switch_epoch: self
                    .plan
                    .tau_switch_epoch
                    .unwrap_or((epochs * 2) / 5),
            },
            weight_decay: self.plan.weight_decay,
            epochs,
            learning_rate: self.plan.learning_rate,
            batch_size: self.plan.batch_size,
            optimizer: self.plan.optimizer,
            seed,
        }
    }

    /// Teacher plan: same optimizer settings, possibly a longer budget.
    pub fn teacher_plan(&self) -> DistillPlan {
        let mut plan = self.distill_plan(mix(self.plan.seed, 0x7EAC));
        if let Some(epochs) = self.teacher.epochs {
            plan.epochs = epochs;
            plan.tau.switch_epoch = (epochs * 2) / 5;
        }
        plan
    }

    /// Deterministic seed derivations for one experiment realization: the
    /// student and baseline share initializations so comparisons are paired.
    pub fn op_seed(&self, realization: u64) -> u64 {
        mix(realization, 0x0601)
    }

    pub fn net_seed(&self, realization: u64) -> u64 {
        mix(realization, 0x0602)
    }

    pub fn run_seed(&self, realization: u64) -> u64 {
        mix(self.plan.seed ^ realization, 0x0603)
    }

    pub fn teacher_op_seed(&self) -> u64 {
        mix(self.dataset.seed, 0x0611)
    }

    pub fn teacher_net_seed(&self) -> u64 {
        mix(self.dataset.seed, 0x0612)
    }

    pub fn noise_seed(&self, realization: u64, snr_index: usize, sample: usize) -> u64 {
        mix(
            mix(realization, 0x0620 + snr_index as u64),
            0x0630 + sample as u64,
        )
    }
}
