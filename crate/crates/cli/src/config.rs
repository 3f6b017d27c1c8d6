//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use codescore_core::metrics::{CodeBleuWeights, DEFAULT_KEYWORD_WEIGHT, DEFAULT_SHARED_K};
use codescore_core::sandbox::ExecutionLimits;
use codescore_core::stats::TauVariant;
use codescore_core::testgen::llm::LlmConfig;
use codescore_core::testgen::StrategyMix;
use codescore_core::unice::{InputFormat, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub names: Vec<String>,
    pub formats: Vec<InputFormat>,
    pub keyword_weight: f64,
    pub shared_k: usize,
    pub codebleu_weights: CodeBleuWeights,
    /// Token vector table for the embedding metrics; the hashed provider otherwise.
    pub embeddings: Option<PathBuf>,
    pub idf: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            names: vec!["bleu".into(), "codebleu".into()],
            formats: vec![InputFormat::RefOnly],
            keyword_weight: DEFAULT_KEYWORD_WEIGHT,
            shared_k: DEFAULT_SHARED_K,
            codebleu_weights: CodeBleuWeights::default(),
            embeddings: None,
            idf: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtendConfig {
    pub target: usize,
    /// Defaults to twenty attempts per requested input.
    pub max_attempts: Option<usize>,
    pub strategy_mix: StrategyMix,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        ExtendConfig {
            target: 100,
            max_attempts: None,
            strategy_mix: StrategyMix::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub strict: bool,
    pub checkpoint: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub correlation: Option<PathBuf>,
    pub timings: bool,
    pub tau_variant: TauVariant,
    pub limits: ExecutionLimits,
    pub metrics: MetricsConfig,
    pub train: TrainConfig,
    pub extend: ExtendConfig,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            out: PathBuf::from("out"),
            seed: 0,
            jobs: 4,
            strict: false,
            checkpoint: None,
            ground_truth: None,
            scores: None,
            correlation: None,
            timings: false,
            tau_variant: TauVariant::default(),
            limits: ExecutionLimits::default(),
            metrics: MetricsConfig::default(),
            train: TrainConfig::default(),
            extend: ExtendConfig::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let bad = |e: toml::de::Error| CliError::Usage(format!("config {}: {e}", path.display()));
        let mut cfg: RunConfig = toml::from_str(&text).map_err(bad)?;
        // A wall time given without a CPU time caps the default CPU time, as the flag does.
        let table: toml::Table = toml::from_str(&text).map_err(bad)?;
        if let Some(limits) = table.get("limits").and_then(|l| l.as_table()) {
            if limits.contains_key("wall_time_ms") && !limits.contains_key("cpu_time_ms") {
                let wall = cfg.limits.wall_time_ms;
                cfg.limits = cfg.limits.clone().with_wall_time_ms(wall);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        if let Some(c) = &self.corpus {
            if !c.exists() {
                return Err(CliError::Usage(format!("corpus {} does not exist", c.display())));
            }
        }
        self.limits.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.metrics
            .codebleu_weights
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::Usage("--corpus is required".into()))
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.ground_truth.clone().unwrap_or_else(|| self.out.join("ground_truth.jsonl"))
    }

    pub fn scores_path(&self) -> PathBuf {
        self.scores.clone().unwrap_or_else(|| self.out.join("metrics.jsonl"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.json"))
    }

    pub fn correlation_path(&self) -> PathBuf {
        self.correlation.clone().unwrap_or_else(|| self.out.join("correlation.jsonl"))
    }
}
