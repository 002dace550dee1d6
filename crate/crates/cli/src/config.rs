//! Run configuration: one TOML file drives every subcommand. Unknown keys
//! are hard errors, and every run writes the fully resolved configuration
//! (defaults filled in) next to its outputs so it can be replayed exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sketch_optim::model::ZipfDataConfig;
use sketch_optim::optim::{Cleaning, OptimizerConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adagrad,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Dense,
    Sketched,
    InjectiveOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Zipf,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub num_features: usize,
    pub num_classes: usize,
    pub zipf_exponent: f64,
    pub features_per_example: usize,
    pub num_examples: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            num_features: 1000,
            num_classes: 16,
            zipf_exponent: 1.05,
            features_per_example: 5,
            num_examples: 4000,
            seed: 7,
        }
    }
}

impl TaskConfig {
    pub fn to_core(&self) -> ZipfDataConfig {
        ZipfDataConfig {
            num_features: self.num_features,
            num_classes: self.num_classes,
            zipf_exponent: self.zipf_exponent,
            features_per_example: self.features_per_example,
            num_examples: self.num_examples,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    pub mode: Mode,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub momentum_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_interval: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_factor: Option<f64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            kind: OptimizerKind::Adam,
            mode: Mode::Dense,
            learning_rate: 0.01,
            lr_schedule: LrSchedule::Constant,
            momentum_decay: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            clean_interval: None,
            clean_factor: None,
        }
    }
}

impl OptimizerSection {
    /// Hyperparameters in the numeric type the run uses.
    pub fn to_core<F: sketch_optim::Real>(&self) -> OptimizerConfig<F> {
        OptimizerConfig {
            learning_rate: F::from_f64_lossy(self.learning_rate),
            momentum_decay: F::from_f64_lossy(self.momentum_decay),
            beta1: F::from_f64_lossy(self.beta1),
            beta2: F::from_f64_lossy(self.beta2),
            epsilon: F::from_f64_lossy(self.epsilon),
            clip_norm: self.clip_norm.map(F::from_f64_lossy),
            cleaning: match (self.clean_interval, self.clean_factor) {
                (Some(interval), Some(factor)) => {
                    Some(Cleaning { interval, factor: F::from_f64_lossy(factor) })
                }
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SketchSection {
    pub depth: usize,
    pub width: usize,
}

impl Default for SketchSection {
    fn default() -> Self {
        SketchSection { depth: 3, width: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub batch_size: usize,
    pub steps: u64,
    pub log_interval: u64,
    pub shadow: bool,
    pub snapshot_interval: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            batch_size: 32,
            steps: 600,
            log_interval: 10,
            shadow: false,
            snapshot_interval: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub depth: usize,
    pub width: usize,
    pub dim: usize,
    pub num_items: usize,
    pub distribution: Distribution,
    pub zipf_exponent: f64,
    pub seeds: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            depth: 5,
            width: 512,
            dim: 1,
            num_items: 10_000,
            distribution: Distribution::Zipf,
            zipf_exponent: 1.05,
            seeds: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub precision: Precision,
    pub seed: u64,
    pub task: TaskConfig,
    pub optimizer: OptimizerSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sketch: Option<SketchSection>,
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            precision: Precision::F32,
            seed: 42,
            task: TaskConfig::default(),
            optimizer: OptimizerSection::default(),
            sketch: None,
            run: RunSection::default(),
            bench: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file. Problems reading or parsing the
    /// file are configuration errors: the config is the user's input
    /// surface, not a run output.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {}", path.display(), e)))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.to_core().validate()?;
        self.optimizer.to_core::<f64>().validate()?;
        if self.optimizer.clean_interval.is_some() != self.optimizer.clean_factor.is_some() {
            return Err(CliError::Config(
                "clean_interval and clean_factor must be set together".to_string(),
            ));
        }
        match self.optimizer.mode {
            Mode::Dense => {}
            Mode::Sketched => {
                let sketch = self.sketch.as_ref().ok_or_else(|| {
                    CliError::Config(
                        "mode = \"sketched\" requires a [sketch] section".to_string(),
                    )
                })?;
                if sketch.depth == 0 {
                    return Err(CliError::Config("sketch depth must be at least 1".to_string()));
                }
                if sketch.width < 2 || !sketch.width.is_power_of_two() {
                    return Err(CliError::Config(format!(
                        "sketch width must be a power of two >= 2, got {}",
                        sketch.width
                    )));
                }
            }
            Mode::InjectiveOracle => {}
        }
        if self.optimizer.kind == OptimizerKind::Sgd && self.optimizer.mode != Mode::Dense {
            return Err(CliError::Config(
                "sgd has no auxiliary state to sketch; use mode = \"dense\"".to_string(),
            ));
        }
        if self.run.shadow && self.optimizer.mode == Mode::Dense {
            return Err(CliError::Config(
                "shadow tracking compares a sketch against a dense reference; \
                 it requires mode = \"sketched\" or \"injective-oracle\""
                    .to_string(),
            ));
        }
        if self.run.shadow && self.optimizer.kind == OptimizerKind::Sgd {
            return Err(CliError::Config("sgd has no auxiliary state to track".to_string()));
        }
        if self.run.snapshot_interval > 0 && self.optimizer.kind == OptimizerKind::Sgd {
            return Err(CliError::Config(
                "snapshots record auxiliary state; sgd has none".to_string(),
            ));
        }
        if self.run.batch_size == 0 {
            return Err(CliError::Config("batch_size must be at least 1".to_string()));
        }
        if self.run.log_interval == 0 {
            return Err(CliError::Config("log_interval must be at least 1".to_string()));
        }
        if let Some(bench) = &self.bench {
            if bench.depth == 0 || bench.dim == 0 || bench.num_items == 0 || bench.seeds == 0 {
                return Err(CliError::Config(
                    "bench depth, dim, num_items and seeds must all be at least 1".to_string(),
                ));
            }
            if bench.width < 2 || !bench.width.is_power_of_two() {
                return Err(CliError::Config(format!(
                    "bench width must be a power of two >= 2, got {}",
                    bench.width
                )));
            }
            if bench.zipf_exponent < 0.0 || !bench.zipf_exponent.is_finite() {
                return Err(CliError::Config(
                    "bench zipf_exponent must be finite and nonnegative".to_string(),
                ));
            }
        }
        Ok(())
    }
}
