//! Pipeline configuration: one TOML file drives every stage. The SHA-256
//! fingerprint of the canonical serialization is embedded in every artifact
//! so stages cannot be mixed across configurations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus;
use crate::lda::{LdaConfig, DEFAULT_BETA, DEFAULT_ITERATIONS, MALLET_ALPHA_SUM};
use crate::preprocess;
use crate::topicgpt::{GenerationMode, DEFAULT_SAMPLE_N};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(String, std::io::Error),
    #[error("cannot parse config {0}: {1}")]
    Parse(String, toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub books_dir: PathBuf,
    pub output_dir: PathBuf,
    pub gazetteer: Option<PathBuf>,
    pub gold_labels: Option<PathBuf>,
    pub quotes: Option<PathBuf>,
}

fn default_run_id() -> String {
    "run0".to_string()
}

fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetellConfig {
    pub verb: String,
    pub model_id: String,
    /// "openai" for the wire backend, "mock" for fixture replay.
    pub backend: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    /// Fixture file for the mock backend: JSONL of {tag, text}.
    #[serde(default)]
    pub mock_fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    #[serde(default = "default_min_chars")]
    pub min_chars: usize,
    #[serde(default = "default_max_df_frac")]
    pub max_df_frac: f64,
    #[serde(default = "default_min_df_docs")]
    pub min_df_docs: usize,
}

fn default_min_chars() -> usize {
    preprocess::DEFAULT_MIN_CHARS
}
fn default_max_df_frac() -> f64 {
    preprocess::DEFAULT_MAX_DF_FRAC
}
fn default_min_df_docs() -> usize {
    preprocess::DEFAULT_MIN_DF_DOCS
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_chars: default_min_chars(),
            max_df_frac: default_max_df_frac(),
            min_df_docs: default_min_df_docs(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaSection {
    pub k: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default)]
    pub burn_in: u32,
    pub seed: u64,
}

fn default_iterations() -> u32 {
    DEFAULT_ITERATIONS
}

impl LdaSection {
    pub fn to_lda_config(&self) -> LdaConfig {
        LdaConfig {
            k: self.k,
            alpha: self.alpha.unwrap_or(MALLET_ALPHA_SUM / self.k as f64),
            beta: self.beta.unwrap_or(DEFAULT_BETA),
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicGptConfig {
    #[serde(default = "default_sample_n")]
    pub sample_n: usize,
    #[serde(default = "default_mode")]
    pub mode: GenerationMode,
    pub model_id: String,
    /// Mock fixtures keyed by doc id, one per stage.
    #[serde(default)]
    pub generation_fixture: Option<PathBuf>,
    #[serde(default)]
    pub assignment_fixture: Option<PathBuf>,
}

fn default_sample_n() -> usize {
    DEFAULT_SAMPLE_N
}
fn default_mode() -> GenerationMode {
    GenerationMode::Single
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_cutoffs() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cutoffs: default_cutoffs(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KeywordsConfig {
    #[serde(default)]
    pub seeds: BTreeSet<String>,
    #[serde(default = "default_npmi_threshold")]
    pub npmi_threshold: f64,
    #[serde(default = "default_npmi_min_df")]
    pub min_df: usize,
}

fn default_npmi_threshold() -> f64 {
    corpus::DEFAULT_NPMI_THRESHOLD
}
fn default_npmi_min_df() -> usize {
    corpus::DEFAULT_NPMI_MIN_DF
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub retell: RetellConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub lda: LdaSection,
    #[serde(default)]
    pub topicgpt: Option<TopicGptConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub keywords: KeywordsConfig,
    #[serde(default = "default_max_tokens")]
    pub max_passage_tokens: usize,
}

fn default_max_tokens() -> usize {
    corpus::DEFAULT_MAX_TOKENS
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(path.display().to_string(), e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.paths.books_dir.is_dir() {
            return Err(ConfigError::Invalid(format!(
                "books_dir {} is not a directory",
                self.paths.books_dir.display()
            )));
        }
        match self.retell.backend.as_str() {
            "openai" => {
                if self.retell.endpoint.is_none() {
                    return Err(ConfigError::Invalid(
                        "openai backend requires retell.endpoint".into(),
                    ));
                }
            }
            "mock" => {
                if self.retell.mock_fixture.is_none() {
                    return Err(ConfigError::Invalid(
                        "mock backend requires retell.mock_fixture".into(),
                    ));
                }
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown retell backend {other:?} (expected \"openai\" or \"mock\")"
                )))
            }
        }
        self.lda
            .to_lda_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML serialization, truncated to 16
    /// chars. Stamped into every artifact header.
    pub fn fingerprint(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}
