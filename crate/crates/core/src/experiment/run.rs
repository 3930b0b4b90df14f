use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    At, ArtifactRecord, Cause, DedupeMode, ExperimentConfig, ExperimentError, RunManifest, Stage,
    MANIFEST_SCHEMA_VERSION, TOOL_VERSION, VECTORIZER_SCHEMA_VERSION,
};
use crate::corpus::{ingest, stratified_split, Corpus, Document, GuardedSplit, Label, Schema, SplitAssignment};
use crate::eval::{
    confusion, heatmap_csv, heatmap_svg, leaderboard, metrics, EvalReport, GroupedReport, Leaderboard, MetricSet,
};
use crate::features::{load_embeddings, FeatureContext, FeatureMatrix, FittedFeaturizer};
use crate::models::{Classifier, ModelRegistry};
use crate::seed::sha256_hex;
use crate::textprep::{tokenize_with_id, Pipeline, PipelineSpec, WordListKind, WordListSource};

/// Artifact locations inside one output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.csv")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.csv")
    }
    pub fn vectorizer(&self) -> PathBuf {
        self.root.join("vectorizer.json")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn write_file(path: &Path, content: &[u8], stage: Stage) -> Result<(), ExperimentError> {
    fs::write(path, content).map_err(|source| {
        ExperimentError::new(
            stage,
            Cause::Output {
                path: path.to_path_buf(),
                source,
            },
        )
    })
}

fn read_artifact(path: &Path, stage: Stage) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|e| {
        ExperimentError::new(
            stage,
            Cause::Artifact {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
        )
    })
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub corpus: Corpus,
    pub rejected_empty: usize,
    pub dedupe_removed: usize,
}

pub fn ingest_stage(cfg: &ExperimentConfig) -> Result<IngestOutcome, ExperimentError> {
    let schema = match &cfg.dataset.schema {
        Some(p) => Schema::load(p).at(Stage::Ingest)?,
        None => Schema::canonical(),
    };
    let ingested = ingest(&cfg.dataset.csv, &schema).at(Stage::Ingest)?;
    let (corpus, dedupe_removed) = match cfg.dedupe {
        DedupeMode::None => (ingested.corpus, 0),
        DedupeMode::Exact => ingested.corpus.dedupe_exact(),
    };
    if !ingested.rejected_empty.is_empty() {
        log::warn!("skipped {} rows with empty text", ingested.rejected_empty.len());
    }
    log::info!("ingested {} documents ({} duplicates removed)", corpus.len(), dedupe_removed);
    Ok(IngestOutcome {
        corpus,
        rejected_empty: ingested.rejected_empty.len(),
        dedupe_removed,
    })
}

pub fn split_stage(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<SplitAssignment, ExperimentError> {
    let split = stratified_split(corpus, &cfg.split_spec()).at(Stage::Split)?;
    for s in split.merged_strata() {
        log::warn!("stratum {s} is too small for the ratios and was merged");
    }
    Ok(split)
}

/// The persisted vectorizer: preprocessing settings plus the fitted featurizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerArtifact {
    pub schema_version: u32,
    pub pipeline: PipelineSpec,
    pub lexicon: WordListSource,
    pub featurizer: FittedFeaturizer,
    pub dimension: usize,
    pub feature_space_id: String,
}

impl VectorizerArtifact {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("vectorizer serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<VectorizerArtifact, String> {
        let raw: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
        match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(VECTORIZER_SCHEMA_VERSION) => {}
            other => return Err(format!("unsupported vectorizer schema_version {other:?}")),
        }
        serde_json::from_value(raw).map_err(|e| e.to_string())
    }
}

fn context(cfg: &ExperimentConfig, lexicon: &WordListSource, stage: Stage) -> Result<FeatureContext, ExperimentError> {
    let lexicon = lexicon.load(WordListKind::Lexicon).at(stage)?;
    let embeddings = match cfg.features.embeddings_source() {
        Some((path, dim)) => Some(load_embeddings(path, dim).at(stage)?),
        None => None,
    };
    Ok(FeatureContext { lexicon, embeddings })
}

fn streams(pipeline: &Pipeline, docs: &[&Document]) -> Vec<crate::textprep::TokenStream> {
    docs.par_iter()
        .map(|d| pipeline.apply(&tokenize_with_id(&d.text, &d.doc_id)))
        .collect()
}

/// Output of [`featurize_stage`]: the artifact and the TRAIN matrix it was fit on.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub artifact: VectorizerArtifact,
    pub train: FeatureMatrix,
}

/// Fits preprocessing and features on the TRAIN partition only.
pub fn featurize_stage(cfg: &ExperimentConfig, split: &GuardedSplit) -> Result<Featurized, ExperimentError> {
    let pipeline = Pipeline::from_spec(&cfg.pipeline.text).at(Stage::Featurize)?;
    let ctx = context(cfg, &cfg.pipeline.lexicon, Stage::Featurize)?;
    let train_docs = split.train();
    let s = streams(&pipeline, train_docs);
    let (featurizer, train) = cfg.features.fit_transform(train_docs, &s, &ctx).at(Stage::Featurize)?;
    log::info!("fitted {} features on {} training documents", train.dim(), train.n_rows());
    Ok(Featurized {
        artifact: VectorizerArtifact {
            schema_version: VECTORIZER_SCHEMA_VERSION,
            pipeline: cfg.pipeline.text.clone(),
            lexicon: cfg.pipeline.lexicon.clone(),
            dimension: featurizer.dim(),
            feature_space_id: train.feature_space_id().to_string(),
            featurizer,
        },
        train,
    })
}

/// Applies a fitted vectorizer to `docs`.
pub fn featurize_docs(
    cfg: &ExperimentConfig,
    vectorizer: &VectorizerArtifact,
    docs: &[&Document],
    stage: Stage,
) -> Result<FeatureMatrix, ExperimentError> {
    let pipeline = Pipeline::from_spec(&vectorizer.pipeline).at(stage)?;
    let ctx = context(cfg, &vectorizer.lexicon, stage)?;
    let s = streams(&pipeline, docs);
    let m = vectorizer.featurizer.transform(docs, &s, &ctx).at(stage)?;
    if m.feature_space_id() != vectorizer.feature_space_id {
        return Err(ExperimentError::new(
            stage,
            Cause::Mismatch("features no longer match the fitted vectorizer".into()),
        ));
    }
    Ok(m)
}

fn predict_all(model: &dyn Classifier, x: &FeatureMatrix, stage: Stage) -> Result<Vec<Label>, ExperimentError> {
    if model.feature_space_id() != x.feature_space_id() {
        return Err(ExperimentError::new(
            stage,
            Cause::Mismatch(format!(
                "model was trained on feature space {} but the vectorizer produces {}",
                model.feature_space_id(),
                x.feature_space_id()
            )),
        ));
    }
    x.rows()
        .par_iter()
        .map(|r| model.predict(r))
        .collect::<Result<Vec<_>, _>>()
        .at(stage)
}

/// Trains on TRAIN; reports VALID metrics at the fixed 0.5 threshold when VALID is non-empty.
pub fn train_stage(
    cfg: &ExperimentConfig,
    registry: &ModelRegistry,
    split: &GuardedSplit,
    vectorizer: &VectorizerArtifact,
    train: &FeatureMatrix,
) -> Result<(Box<dyn Classifier>, Option<MetricSet>), ExperimentError> {
    let y: Vec<Label> = split.train().iter().map(|d| d.label).collect();
    let model = registry
        .fit(&cfg.model.family, train, &y, &cfg.model.params, cfg.train_seed())
        .at(Stage::Train)?;
    let valid = split.valid();
    if valid.is_empty() {
        return Ok((model, None));
    }
    let x = featurize_docs(cfg, vectorizer, valid, Stage::Train)?;
    let pred = predict_all(model.as_ref(), &x, Stage::Train)?;
    let truth: Vec<Label> = valid.iter().map(|d| d.label).collect();
    let m = confusion(&truth, &pred).and_then(|cm| metrics(&cm)).at(Stage::Train)?;
    log::info!("validation balanced accuracy {:.4}", m.balanced_accuracy);
    Ok((model, Some(m)))
}

/// Scores the TEST partition. This is the only place the test documents are read.
pub fn eval_stage(
    cfg: &ExperimentConfig,
    split: &mut GuardedSplit,
    vectorizer: &VectorizerArtifact,
    model: &dyn Classifier,
) -> Result<EvalReport, ExperimentError> {
    let test = split.take_test().at(Stage::Eval)?;
    let x = featurize_docs(cfg, vectorizer, &test, Stage::Eval)?;
    let pred = predict_all(model, &x, Stage::Eval)?;
    let predictions: HashMap<String, Label> = test.iter().map(|d| d.doc_id.clone()).zip(pred).collect();
    let report = EvalReport::build(
        &test,
        &predictions,
        &cfg.model.family,
        &cfg.preprocessing_tag(),
        cfg.split_seed(),
    )
    .at(Stage::Eval)?;
    log::info!(
        "test balanced accuracy {:.4}, f1 {:.4} on {} documents",
        report.metrics.balanced_accuracy,
        report.metrics.f1,
        report.n_eval
    );
    Ok(report)
}

fn ensure_dir(dir: &Path, stage: Stage) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| {
        ExperimentError::new(
            stage,
            Cause::Output {
                path: dir.to_path_buf(),
                source,
            },
        )
    })
}

fn load_corpus(paths: &RunPaths, stage: Stage) -> Result<Corpus, ExperimentError> {
    if !paths.corpus().is_file() {
        return Err(missing_artifact(&paths.corpus(), stage, "ingest"));
    }
    Corpus::load_canonical(&paths.corpus()).at(stage)
}

fn missing_artifact(path: &Path, stage: Stage, producer: &str) -> ExperimentError {
    ExperimentError::new(
        stage,
        Cause::Artifact {
            path: path.to_path_buf(),
            message: format!("not found; run `{producer}` first"),
        },
    )
}

fn load_split(paths: &RunPaths, corpus: &Corpus, stage: Stage) -> Result<SplitAssignment, ExperimentError> {
    if !paths.split().is_file() {
        return Err(missing_artifact(&paths.split(), stage, "split"));
    }
    SplitAssignment::load(&paths.split(), corpus).at(stage)
}

fn load_vectorizer(paths: &RunPaths, stage: Stage) -> Result<VectorizerArtifact, ExperimentError> {
    let p = paths.vectorizer();
    if !p.is_file() {
        return Err(missing_artifact(&p, stage, "featurize"));
    }
    VectorizerArtifact::from_json(&read_artifact(&p, stage)?).map_err(|message| {
        ExperimentError::new(stage, Cause::Artifact { path: p.clone(), message })
    })
}

fn load_model(paths: &RunPaths, registry: &ModelRegistry, stage: Stage) -> Result<Box<dyn Classifier>, ExperimentError> {
    let p = paths.model();
    if !p.is_file() {
        return Err(missing_artifact(&p, stage, "train"));
    }
    registry.load_json(&read_artifact(&p, stage)?).at(stage)
}

/// Writes `corpus.csv` under `out`.
pub fn step_ingest(cfg: &ExperimentConfig, out: &Path) -> Result<IngestOutcome, ExperimentError> {
    let paths = RunPaths::new(out);
    let outcome = ingest_stage(cfg)?;
    ensure_dir(out, Stage::Ingest)?;
    outcome.corpus.export_canonical(&paths.corpus()).map_err(|e| match e {
        crate::corpus::CorpusError::Io { source, .. } => ExperimentError::new(
            Stage::Ingest,
            Cause::Output {
                path: paths.corpus(),
                source,
            },
        ),
        other => ExperimentError::new(Stage::Ingest, other),
    })?;
    Ok(outcome)
}

/// Reads `corpus.csv`, writes `split.csv`.
pub fn step_split(cfg: &ExperimentConfig, out: &Path) -> Result<SplitAssignment, ExperimentError> {
    let paths = RunPaths::new(out);
    let corpus = load_corpus(&paths, Stage::Split)?;
    let split = split_stage(cfg, &corpus)?;
    let mut buf = Vec::new();
    split.write_csv(&mut buf).expect("writing to memory");
    write_file(&paths.split(), &buf, Stage::Split)?;
    Ok(split)
}

/// Reads corpus and split, writes `vectorizer.json`.
pub fn step_featurize(cfg: &ExperimentConfig, out: &Path) -> Result<VectorizerArtifact, ExperimentError> {
    let paths = RunPaths::new(out);
    let corpus = load_corpus(&paths, Stage::Featurize)?;
    let split = load_split(&paths, &corpus, Stage::Featurize)?;
    let guarded = GuardedSplit::new(&corpus, &split).at(Stage::Featurize)?;
    let f = featurize_stage(cfg, &guarded)?;
    write_file(&paths.vectorizer(), f.artifact.to_json().as_bytes(), Stage::Featurize)?;
    Ok(f.artifact)
}

/// Reads corpus, split and vectorizer, writes `model.json`.
pub fn step_train(
    cfg: &ExperimentConfig,
    registry: &ModelRegistry,
    out: &Path,
) -> Result<Option<MetricSet>, ExperimentError> {
    let paths = RunPaths::new(out);
    let corpus = load_corpus(&paths, Stage::Train)?;
    let split = load_split(&paths, &corpus, Stage::Train)?;
    let guarded = GuardedSplit::new(&corpus, &split).at(Stage::Train)?;
    let vectorizer = load_vectorizer(&paths, Stage::Train)?;
    let train = featurize_docs(cfg, &vectorizer, guarded.train(), Stage::Train)?;
    let (model, valid) = train_stage(cfg, registry, &guarded, &vectorizer, &train)?;
    write_file(&paths.model(), model.to_envelope().to_json().as_bytes(), Stage::Train)?;
    Ok(valid)
}

/// Reads every earlier artifact, writes `report.json`.
pub fn step_eval(cfg: &ExperimentConfig, registry: &ModelRegistry, out: &Path) -> Result<EvalReport, ExperimentError> {
    let paths = RunPaths::new(out);
    let corpus = load_corpus(&paths, Stage::Eval)?;
    let split = load_split(&paths, &corpus, Stage::Eval)?;
    let mut guarded = GuardedSplit::new(&corpus, &split).at(Stage::Eval)?;
    let vectorizer = load_vectorizer(&paths, Stage::Eval)?;
    let model = load_model(&paths, registry, Stage::Eval)?;
    let report = eval_stage(cfg, &mut guarded, &vectorizer, model.as_ref())?;
    write_file(&paths.report(), report.to_json().as_bytes(), Stage::Eval)?;
    Ok(report)
}

struct Writer {
    root: PathBuf,
    written: Vec<(String, PathBuf)>,
}

impl Writer {
    fn put(&mut self, name: &str, file: &str, content: &[u8], stage: Stage) -> Result<(), ExperimentError> {
        let path = self.root.join(file);
        write_file(&path, content, stage)?;
        self.written.push((name.to_string(), path));
        Ok(())
    }

    fn records(&self) -> Result<BTreeMap<String, ArtifactRecord>, ExperimentError> {
        self.written
            .iter()
            .map(|(name, path)| {
                let bytes = fs::read(path).map_err(|source| {
                    ExperimentError::new(Stage::Eval, Cause::Output { path: path.clone(), source })
                })?;
                let rel = path.strip_prefix(&self.root).unwrap_or(path).display().to_string();
                Ok((
                    name.clone(),
                    ArtifactRecord {
                        path: rel,
                        sha256: sha256_hex(&bytes),
                        bytes: bytes.len() as u64,
                    },
                ))
            })
            .collect()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs every stage and writes all artifacts plus `manifest.json` to
/// `cfg.output_dir`. On failure the files written so far are removed.
pub fn run_experiment(cfg: &ExperimentConfig, registry: &ModelRegistry) -> Result<RunManifest, ExperimentError> {
    let started_at = now();
    cfg.validate(registry)?;
    let root = cfg.output_dir.clone();
    let created = !root.exists();
    ensure_dir(&root, Stage::Config)?;
    let mut w = Writer {
        root: root.clone(),
        written: Vec::new(),
    };
    let result = run_stages(cfg, registry, &mut w, started_at);
    if result.is_err() {
        for (_, p) in &w.written {
            let _ = fs::remove_file(p);
        }
        let _ = fs::remove_file(RunPaths::new(&root).manifest());
        if created {
            let _ = fs::remove_dir(&root);
        }
    }
    result
}

fn run_stages(
    cfg: &ExperimentConfig,
    registry: &ModelRegistry,
    w: &mut Writer,
    started_at: String,
) -> Result<RunManifest, ExperimentError> {
    let config_json = cfg.to_json();
    w.put("config", "config.json", config_json.as_bytes(), Stage::Config)?;

    let ingested = ingest_stage(cfg)?;
    let mut buf = Vec::new();
    ingested.corpus.write_canonical(&mut buf).expect("writing to memory");
    w.put("corpus", "corpus.csv", &buf, Stage::Ingest)?;

    let split = split_stage(cfg, &ingested.corpus)?;
    let mut buf = Vec::new();
    split.write_csv(&mut buf).expect("writing to memory");
    w.put("split", "split.csv", &buf, Stage::Split)?;

    let mut guarded = GuardedSplit::new(&ingested.corpus, &split).at(Stage::Split)?;
    let featurized = featurize_stage(cfg, &guarded)?;
    w.put("vectorizer", "vectorizer.json", featurized.artifact.to_json().as_bytes(), Stage::Featurize)?;

    let (model, validation) = train_stage(cfg, registry, &guarded, &featurized.artifact, &featurized.train)?;
    w.put("model", "model.json", model.to_envelope().to_json().as_bytes(), Stage::Train)?;

    let report = eval_stage(cfg, &mut guarded, &featurized.artifact, model.as_ref())?;
    w.put("report", "report.json", report.to_json().as_bytes(), Stage::Eval)?;

    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        name: cfg.name.clone(),
        config_hash: sha256_hex(config_json.as_bytes()),
        seed: cfg.seed,
        split_seed: cfg.split_seed(),
        train_seed: cfg.train_seed(),
        dedupe: cfg.dedupe,
        dedupe_removed: ingested.dedupe_removed,
        rejected_empty_rows: ingested.rejected_empty,
        started_at,
        finished_at: now(),
        artifacts: w.records()?,
        validation,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&RunPaths::new(&w.root).manifest(), json.as_bytes(), Stage::Eval)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub leaderboard: Leaderboard,
    pub files: Vec<PathBuf>,
}

/// Builds the leaderboard and heatmaps from report files and writes
/// `leaderboard.csv`, `leaderboard.md`, `heatmap.csv` and `heatmap.svg` to `out`.
pub fn compare(reports: &[PathBuf], allow_mixed_splits: bool, out: &Path) -> Result<CompareOutcome, ExperimentError> {
    if reports.is_empty() {
        return Err(ExperimentError::new(Stage::Compare, Cause::Config("no reports given".into())));
    }
    let mut parsed = Vec::with_capacity(reports.len());
    for p in reports {
        if !p.is_file() {
            return Err(ExperimentError::new(Stage::Compare, Cause::MissingInput(p.clone())));
        }
        parsed.push(EvalReport::from_json(&read_artifact(p, Stage::Compare)?).at(Stage::Compare)?);
    }
    let seeds: BTreeSet<u64> = parsed.iter().map(|r| r.split_seed).collect();
    if seeds.len() > 1 {
        if !allow_mixed_splits {
            return Err(ExperimentError::new(Stage::Compare, Cause::MixedSplits(seeds.into_iter().collect())));
        }
        log::warn!("comparing reports from {} different splits", seeds.len());
    }
    let lb = leaderboard(parsed.iter().map(EvalReport::leaderboard_row).collect());
    let grouped: Vec<GroupedReport> = parsed.iter().map(|r| r.grouped.clone()).collect();
    ensure_dir(out, Stage::Compare)?;
    let outputs = [
        ("leaderboard.csv", lb.to_csv()),
        ("leaderboard.md", lb.to_markdown()),
        ("heatmap.csv", heatmap_csv(&grouped).at(Stage::Compare)?),
        ("heatmap.svg", heatmap_svg(&grouped).at(Stage::Compare)?),
    ];
    let mut files = Vec::new();
    for (name, content) in outputs {
        let p = out.join(name);
        write_file(&p, content.as_bytes(), Stage::Compare)?;
        files.push(p);
    }
    log::info!("leaderboard:\n{}", lb.to_text());
    Ok(CompareOutcome { leaderboard: lb, files })
}
