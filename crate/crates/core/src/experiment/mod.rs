//! Config-driven experiment runs.
//!
//! A run reads one JSON [`ExperimentConfig`] and writes six artifacts under
//! the output directory (`config.json`, `corpus.csv`, `split.csv`,
//! `vectorizer.json`, `model.json`, `report.json`) plus `manifest.json`,
//! which records their SHA-256 hashes. Timestamps appear only in the
//! manifest, so reruns of one config produce byte-identical artifacts.
//!
//! Seeds: the config `seed` is the root. The split uses `split.seed` when
//! given, else `derive_seed(seed, "split")`; training uses
//! `derive_seed(seed, "train")`. Each stage can therefore be rerun alone.

mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{CorpusError, SplitSpec, StratumKey};
use crate::eval::{EvalError, MetricSet};
use crate::features::{FeatureSpec, FeaturesError};
use crate::models::{ModelError, ModelRegistry};
use crate::seed::{derive_seed, sha256_hex};
use crate::synth::SynthError;
use crate::textprep::{PipelineSpec, TextError, WordListSource};

pub use run::{
    compare, eval_stage, featurize_docs, featurize_stage, ingest_stage, run_experiment, split_stage, step_eval,
    step_featurize, step_ingest, step_split, step_train, train_stage, CompareOutcome, Featurized, IngestOutcome,
    RunPaths, VectorizerArtifact,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const VECTORIZER_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Split,
    Featurize,
    Train,
    Eval,
    Compare,
    Synth,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Compare => "compare",
            Stage::Synth => "synth",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Cause {
    #[error("{0}")]
    Config(String),
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("cannot read {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Features(#[from] FeaturesError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{0}")]
    Mismatch(String),
    #[error("reports come from different split seeds {0:?}; pass --allow-mixed-splits to compare anyway")]
    MixedSplits(Vec<u64>),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A failure tagged with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {cause}")]
pub struct ExperimentError {
    pub stage: Stage,
    #[source]
    pub cause: Cause,
}

impl ExperimentError {
    pub fn new(stage: Stage, cause: impl Into<Cause>) -> Self {
        ExperimentError {
            stage,
            cause: cause.into(),
        }
    }

    /// 2 for problems with the user's config or inputs, 1 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match &self.cause {
            Cause::Output { .. } | Cause::Corpus(CorpusError::TestAlreadyConsumed) | Cause::Eval(EvalError::Io { .. }) => 1,
            _ => 2,
        }
    }
}

pub(crate) trait At<T> {
    fn at(self, stage: Stage) -> Result<T, ExperimentError>;
}

impl<T, E: Into<Cause>> At<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, ExperimentError> {
        self.map_err(|e| ExperimentError::new(stage, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub csv: PathBuf,
    /// Column mapping file; the canonical layout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupeMode {
    #[default]
    None,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    /// Split seed; derived from the experiment seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_strata")]
    pub strata: BTreeSet<StratumKey>,
}

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

fn default_strata() -> BTreeSet<StratumKey> {
    [StratumKey::Label, StratumKey::CreatorCategory].into()
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: default_ratios(),
            seed: None,
            strata: default_strata(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub text: PipelineSpec,
    #[serde(default = "WordListSource::builtin_en")]
    pub lexicon: WordListSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            text: PipelineSpec::default(),
            lexicon: WordListSource::builtin_en(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    #[serde(default)]
    pub params: Value,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub dedupe: DedupeMode,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub features: FeatureSpec,
    pub model: ModelConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::new(Stage::Config, Cause::Config(msg.into()))
}

impl ExperimentConfig {
    /// Parses a config. Paths stay as written; see [`ExperimentConfig::resolved`].
    pub fn from_json(json: &str) -> Result<ExperimentConfig, ExperimentError> {
        let raw: Value = serde_json::from_str(json).map_err(|e| config_err(format!("invalid JSON: {e}")))?;
        match raw.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(CONFIG_SCHEMA_VERSION) => {}
            Some(v) => return Err(config_err(format!("unsupported config schema_version {v}"))),
            None => return Err(config_err("schema_version is required")),
        }
        serde_json::from_value(raw).map_err(|e| config_err(e.to_string()))
    }

    /// Reads a config file and rebases its relative paths onto the file's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
        let json = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                ExperimentError::new(Stage::Config, Cause::MissingInput(path.to_path_buf()))
            } else {
                config_err(format!("cannot read {}: {e}", path.display()))
            }
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(ExperimentConfig::from_json(&json)?.resolved(base))
    }

    pub fn resolved(&self, base: &Path) -> ExperimentConfig {
        let rebase = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        let mut c = self.clone();
        c.dataset.csv = rebase(&self.dataset.csv);
        c.dataset.schema = self.dataset.schema.as_deref().map(rebase);
        c.pipeline.text.stopwords = self.pipeline.text.stopwords.resolved(base);
        c.pipeline.lexicon = self.pipeline.lexicon.resolved(base);
        c.features = self.features.resolved(base);
        c.output_dir = rebase(&self.output_dir);
        c
    }

    /// Checks ratios, the model family and that every referenced input exists.
    pub fn validate(&self, registry: &ModelRegistry) -> Result<(), ExperimentError> {
        self.split_spec().validate().at(Stage::Config)?;
        registry.get(&self.model.family).at(Stage::Config)?;
        let mut inputs = vec![self.dataset.csv.clone()];
        inputs.extend(self.dataset.schema.clone());
        for src in [&self.pipeline.text.stopwords, &self.pipeline.lexicon] {
            if let WordListSource::File(p) = src {
                inputs.push(p.clone());
            }
        }
        if let Some((p, _)) = self.features.embeddings_source() {
            inputs.push(p.to_path_buf());
        }
        match inputs.into_iter().find(|p| !p.is_file()) {
            Some(missing) => Err(ExperimentError::new(Stage::Config, Cause::MissingInput(missing))),
            None => Ok(()),
        }
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or_else(|| derive_seed(self.seed, "split"))
    }

    pub fn train_seed(&self) -> u64 {
        derive_seed(self.seed, "train")
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            ratios: self.split.ratios,
            seed: self.split_seed(),
            strata_keys: self.split.strata.clone(),
        }
    }

    /// `{features}/{pipeline mode}`, e.g. `union(tfidf+stylo)/raw`.
    pub fn preprocessing_tag(&self) -> String {
        format!("{}/{}", self.features.tag(), self.pipeline.text.mode.tag())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub name: String,
    /// SHA-256 of the written `config.json`.
    pub config_hash: String,
    pub seed: u64,
    pub split_seed: u64,
    pub train_seed: u64,
    pub dedupe: DedupeMode,
    pub dedupe_removed: usize,
    pub rejected_empty_rows: usize,
    pub started_at: String,
    pub finished_at: String,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    /// Validation-partition metrics at the fixed 0.5 threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<MetricSet>,
}

impl RunManifest {
    /// Re-hashes every listed artifact under `out_dir`.
    pub fn verify(&self, out_dir: &Path) -> Result<(), String> {
        for (name, rec) in &self.artifacts {
            let bytes = std::fs::read(out_dir.join(&rec.path)).map_err(|e| format!("{name}: {e}"))?;
            if sha256_hex(&bytes) != rec.sha256 {
                return Err(format!("{name}: hash mismatch"));
            }
        }
        Ok(())
    }
}
