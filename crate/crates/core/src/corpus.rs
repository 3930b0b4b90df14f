//! Canonical document model, CSV ingestion through a column-mapping schema,
//! deterministic stratified splitting and the canonical export formats.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed::derive_seed;

/// Strata smaller than this are pooled into a single catch-all stratum.
pub const MIN_STRATUM_SIZE: usize = 3;

/// Header of the canonical corpus export.
pub const CANONICAL_HEADER: [&str; 5] = ["doc_id", "label", "creator_category", "account", "text"];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("schema maps `{field}` to column `{column}` which is not in the header")]
    MissingColumn { field: &'static str, column: String },
    #[error("row {row}: label value `{value}` has no mapping")]
    UnmappableLabel { row: usize, value: String },
    #[error("row {row}: creator category value `{value}` has no mapping")]
    UnmappableCategory { row: usize, value: String },
    #[error("row {row}: label {label} is inconsistent with creator category {category}")]
    InconsistentCategory {
        row: usize,
        label: Label,
        category: CreatorCategory,
    },
    #[error("document `{doc_id}` has empty text")]
    EmptyText { doc_id: String },
    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("split does not cover document `{0}`")]
    UnassignedDocument(String),
    #[error("split file names unknown document `{0}`")]
    UnknownDocument(String),
    #[error("unknown partition `{0}`")]
    UnknownPartition(String),
    #[error("test partition was already consumed")]
    TestAlreadyConsumed,
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Binary class. `Bot` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Human,
    Bot,
}

impl Label {
    pub fn is_bot(self) -> bool {
        self == Label::Bot
    }

    /// `+1` for bots, `-1` for humans.
    pub fn sign(self) -> f64 {
        match self {
            Label::Bot => 1.0,
            Label::Human => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "HUMAN",
            Label::Bot => "BOT",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HUMAN" => Ok(Label::Human),
            "BOT" => Ok(Label::Bot),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Provenance class of a tweet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CreatorCategory {
    Human,
    Gpt2,
    Rnn,
    Others,
}

impl CreatorCategory {
    pub const ALL: [CreatorCategory; 4] = [
        CreatorCategory::Gpt2,
        CreatorCategory::Human,
        CreatorCategory::Others,
        CreatorCategory::Rnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CreatorCategory::Human => "HUMAN",
            CreatorCategory::Gpt2 => "GPT2",
            CreatorCategory::Rnn => "RNN",
            CreatorCategory::Others => "OTHERS",
        }
    }

    /// The label implied by this category.
    pub fn label(self) -> Label {
        match self {
            CreatorCategory::Human => Label::Human,
            _ => Label::Bot,
        }
    }
}

impl fmt::Display for CreatorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CreatorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HUMAN" => Ok(CreatorCategory::Human),
            "GPT2" => Ok(CreatorCategory::Gpt2),
            "RNN" => Ok(CreatorCategory::Rnn),
            "OTHERS" => Ok(CreatorCategory::Others),
            other => Err(format!("unknown creator category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub label: Label,
    pub creator_category: CreatorCategory,
    pub account: String,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        label: Label,
        creator_category: CreatorCategory,
        account: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let doc = Document {
            doc_id: doc_id.into(),
            text: text.into(),
            label,
            creator_category,
            account: account.into(),
        };
        if doc.text.trim().is_empty() {
            return Err(CorpusError::EmptyText { doc_id: doc.doc_id });
        }
        if creator_category.label() != label {
            return Err(CorpusError::InconsistentCategory {
                row: 0,
                label,
                category: creator_category,
            });
        }
        Ok(doc)
    }
}

/// Ordered, immutable collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    provenance: String,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, provenance: impl Into<String>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            provenance: provenance.into(),
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.documents.iter().filter(|d| d.label == label).count()
    }

    /// Documents whose creator category is in `cats`, original order kept.
    pub fn filter_by_category(&self, cats: &BTreeSet<CreatorCategory>) -> Corpus {
        Corpus {
            documents: self
                .documents
                .iter()
                .filter(|d| cats.contains(&d.creator_category))
                .cloned()
                .collect(),
            provenance: format!("{} | filter {:?}", self.provenance, cats),
        }
    }

    /// Drops every document whose text exactly repeats an earlier one.
    /// Returns the deduplicated corpus and the number of documents removed.
    pub fn dedupe_exact(&self) -> (Corpus, usize) {
        let mut seen = HashSet::new();
        let documents: Vec<Document> = self
            .documents
            .iter()
            .filter(|d| seen.insert(d.text.as_str()))
            .cloned()
            .collect();
        let removed = self.documents.len() - documents.len();
        (
            Corpus {
                documents,
                provenance: format!("{} | dedupe exact", self.provenance),
            },
            removed,
        )
    }

    /// Writes the canonical export: header `doc_id,label,creator_category,account,text`,
    /// text always quoted.
    pub fn write_canonical<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", CANONICAL_HEADER.join(","))?;
        for d in &self.documents {
            writeln!(
                out,
                "{},{},{},{},{}",
                quote_if_needed(&d.doc_id),
                d.label,
                d.creator_category,
                quote_if_needed(&d.account),
                quote_always(&d.text)
            )?;
        }
        Ok(())
    }

    pub fn export_canonical(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_canonical(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CorpusError::io(path, e))
    }

    /// Reads a file in the canonical export format.
    pub fn load_canonical(path: &Path) -> Result<Corpus, CorpusError> {
        Ok(ingest(path, &Schema::canonical())?.corpus)
    }
}

fn quote_always(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn quote_if_needed(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        quote_always(s)
    } else {
        s.to_string()
    }
}

/// Column mapping from a source CSV to the document model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub text: String,
    pub label: String,
    pub label_values: BTreeMap<String, Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub category_values: BTreeMap<String, CreatorCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account: Option<String>,
}

impl Schema {
    /// Schema of the canonical export.
    pub fn canonical() -> Schema {
        let label_values = [("HUMAN", Label::Human), ("BOT", Label::Bot)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let category_values = CreatorCategory::ALL
            .into_iter()
            .map(|c| (c.as_str().to_string(), c))
            .collect();
        Schema {
            text: "text".into(),
            label: "label".into(),
            label_values,
            category: Some("creator_category".into()),
            category_values,
            id: Some("doc_id".into()),
            account: Some("account".into()),
        }
    }

    pub fn from_json(json: &str) -> Result<Schema, CorpusError> {
        let schema: Schema =
            serde_json::from_str(json).map_err(|e| CorpusError::Schema(e.to_string()))?;
        if schema.label_values.is_empty() {
            return Err(CorpusError::Schema("label_values must not be empty".into()));
        }
        if schema.category.is_some() && schema.category_values.is_empty() {
            return Err(CorpusError::Schema(
                "category is mapped but category_values is empty".into(),
            ));
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Schema, CorpusError> {
        let json = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Schema::from_json(&json)
    }
}

/// Result of ingesting a CSV: the corpus plus the data rows rejected for blank text.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    /// 0-based data-row ordinals of rows skipped because their text was blank.
    pub rejected_empty: Vec<usize>,
}

pub fn ingest(csv_path: &Path, schema: &Schema) -> Result<Ingested, CorpusError> {
    let mut file = File::open(csv_path).map_err(|e| CorpusError::io(csv_path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| CorpusError::io(csv_path, e))?;
    let provenance = format!("{} (schema text={}, label={})", csv_path.display(), schema.text, schema.label);
    ingest_reader(bytes.as_slice(), schema, provenance)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    schema: &Schema,
    provenance: impl Into<String>,
) -> Result<Ingested, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |field: &'static str, name: &str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn {
                field,
                column: name.to_string(),
            })
    };
    let text_col = column("text", &schema.text)?;
    let label_col = column("label", &schema.label)?;
    let category_col = schema
        .category
        .as_deref()
        .map(|c| column("category", c))
        .transpose()?;
    let id_col = schema.id.as_deref().map(|c| column("id", c)).transpose()?;
    let account_col = schema
        .account
        .as_deref()
        .map(|c| column("account", c))
        .transpose()?;

    let mut documents = Vec::new();
    let mut rejected_empty = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let raw_label = field(label_col);
        let label = *schema
            .label_values
            .get(raw_label)
            .or_else(|| schema.label_values.get(raw_label.trim()))
            .ok_or_else(|| CorpusError::UnmappableLabel {
                row,
                value: raw_label.to_string(),
            })?;
        let creator_category = match category_col {
            Some(c) => {
                let raw = field(c);
                *schema
                    .category_values
                    .get(raw)
                    .or_else(|| schema.category_values.get(raw.trim()))
                    .ok_or_else(|| CorpusError::UnmappableCategory {
                        row,
                        value: raw.to_string(),
                    })?
            }
            None => match label {
                Label::Human => CreatorCategory::Human,
                Label::Bot => CreatorCategory::Others,
            },
        };
        if creator_category.label() != label {
            return Err(CorpusError::InconsistentCategory {
                row,
                label,
                category: creator_category,
            });
        }
        let doc_id = match id_col {
            Some(c) => field(c).to_string(),
            None => format!("{row:08}"),
        };
        let text = field(text_col);
        if text.trim().is_empty() {
            log::warn!("row {row} (doc_id {doc_id}) has blank text; rejected");
            rejected_empty.push(row);
            continue;
        }
        let account = account_col.map(|c| field(c).to_string()).unwrap_or_default();
        documents.push(Document {
            doc_id,
            text: text.to_string(),
            label,
            creator_category,
            account,
        });
    }
    if !rejected_empty.is_empty() {
        log::warn!("{} rows rejected for blank text", rejected_empty.len());
    }
    Ok(Ingested {
        corpus: Corpus::new(documents, provenance)?,
        rejected_empty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKey {
    Label,
    CreatorCategory,
}

impl FromStr for StratumKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "label" => Ok(StratumKey::Label),
            "creator_category" | "category" => Ok(StratumKey::CreatorCategory),
            other => Err(format!("unknown stratum key `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Valid, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
        }
    }
}

impl FromStr for Partition {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Partition::Train),
            "valid" => Ok(Partition::Valid),
            "test" => Ok(Partition::Test),
            other => Err(CorpusError::UnknownPartition(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, validation and test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub strata_keys: BTreeSet<StratumKey>,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64, strata_keys: impl IntoIterator<Item = StratumKey>) -> Result<Self, CorpusError> {
        let spec = SplitSpec {
            ratios,
            seed,
            strata_keys: strata_keys.into_iter().collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for r in self.ratios {
            if !(r > 0.0 && r < 1.0) {
                return Err(CorpusError::InvalidSplitSpec(format!(
                    "ratio {r} is not in (0, 1)"
                )));
            }
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplitSpec(format!(
                "ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    fn stratum_of(&self, doc: &Document) -> String {
        let mut parts = Vec::new();
        for key in &self.strata_keys {
            match key {
                StratumKey::Label => parts.push(doc.label.as_str()),
                StratumKey::CreatorCategory => parts.push(doc.creator_category.as_str()),
            }
        }
        if parts.is_empty() {
            "*".to_string()
        } else {
            parts.join("/")
        }
    }
}

/// Per-document partition, aligned with the corpus order it was computed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    entries: Vec<(String, Partition)>,
    merged_strata: Vec<String>,
}

impl SplitAssignment {
    pub fn entries(&self) -> &[(String, Partition)] {
        &self.entries
    }

    /// Names of strata that were too small and were pooled into the catch-all stratum.
    pub fn merged_strata(&self) -> &[String] {
        &self.merged_strata
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<Partition> {
        self.entries
            .iter()
            .find(|(id, _)| id == doc_id)
            .map(|(_, p)| *p)
    }

    pub fn count(&self, partition: Partition) -> usize {
        self.entries.iter().filter(|(_, p)| *p == partition).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "doc_id,partition")?;
        for (id, p) in &self.entries {
            writeln!(out, "{},{}", quote_if_needed(id), p.as_str())?;
        }
        Ok(())
    }

    pub fn export(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CorpusError::io(path, e))
    }

    /// Reads a `doc_id,partition` file and aligns it with `corpus`.
    pub fn load(path: &Path, corpus: &Corpus) -> Result<SplitAssignment, CorpusError> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut by_id = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let id = record.get(0).unwrap_or("").to_string();
            let p: Partition = record.get(1).unwrap_or("").parse()?;
            by_id.insert(id, p);
        }
        let mut entries = Vec::with_capacity(corpus.len());
        for doc in corpus.documents() {
            let p = by_id
                .remove(&doc.doc_id)
                .ok_or_else(|| CorpusError::UnassignedDocument(doc.doc_id.clone()))?;
            entries.push((doc.doc_id.clone(), p));
        }
        if let Some(extra) = by_id.into_keys().next() {
            return Err(CorpusError::UnknownDocument(extra));
        }
        Ok(SplitAssignment {
            entries,
            merged_strata: Vec::new(),
        })
    }
}

/// Largest-remainder apportionment of `n` items by `ratios`.
/// Ties in the fractional remainder go to the earlier partition.
pub fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = (q + 1e-9).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Stratified, seeded split.
///
/// Members of each stratum are sorted by `doc_id`, shuffled with a ChaCha8
/// stream seeded from `(spec.seed, stratum name)`, then cut into
/// train/valid/test by [`apportion`]. Strata with fewer than
/// [`MIN_STRATUM_SIZE`] documents are pooled into a catch-all stratum.
pub fn stratified_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitAssignment, CorpusError> {
    spec.validate()?;
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, doc) in corpus.documents().iter().enumerate() {
        strata.entry(spec.stratum_of(doc)).or_default().push(i);
    }

    let mut merged_strata = Vec::new();
    let mut catch_all = Vec::new();
    strata.retain(|name, members| {
        if members.len() < MIN_STRATUM_SIZE {
            log::warn!(
                "stratum {name} has {} documents (< {MIN_STRATUM_SIZE}); merged into catch-all stratum",
                members.len()
            );
            merged_strata.push(name.clone());
            catch_all.append(members);
            false
        } else {
            true
        }
    });
    if !catch_all.is_empty() {
        strata.insert("~catch-all".to_string(), catch_all);
    }

    let docs = corpus.documents();
    let mut assigned = vec![Partition::Train; docs.len()];
    for (name, mut members) in strata {
        members.sort_by(|&a, &b| docs[a].doc_id.cmp(&docs[b].doc_id));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("stratum:{name}")));
        members.shuffle(&mut rng);
        let [n_train, n_valid, _] = apportion(members.len(), &spec.ratios);
        for (pos, &idx) in members.iter().enumerate() {
            assigned[idx] = if pos < n_train {
                Partition::Train
            } else if pos < n_train + n_valid {
                Partition::Valid
            } else {
                Partition::Test
            };
        }
    }

    Ok(SplitAssignment {
        entries: docs
            .iter()
            .zip(assigned)
            .map(|(d, p)| (d.doc_id.clone(), p))
            .collect(),
        merged_strata,
    })
}

/// Split-aware view of a corpus. Train and validation documents are freely
/// readable; the test partition can be taken exactly once.
#[derive(Debug)]
pub struct GuardedSplit<'a> {
    train: Vec<&'a Document>,
    valid: Vec<&'a Document>,
    test: Option<Vec<&'a Document>>,
}

impl<'a> GuardedSplit<'a> {
    pub fn new(corpus: &'a Corpus, split: &SplitAssignment) -> Result<Self, CorpusError> {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        let mut test = Vec::new();
        if split.len() != corpus.len() {
            return Err(CorpusError::InvalidSplitSpec(format!(
                "split covers {} documents, corpus has {}",
                split.len(),
                corpus.len()
            )));
        }
        for (doc, (id, p)) in corpus.documents().iter().zip(split.entries()) {
            if &doc.doc_id != id {
                return Err(CorpusError::UnassignedDocument(doc.doc_id.clone()));
            }
            match p {
                Partition::Train => train.push(doc),
                Partition::Valid => valid.push(doc),
                Partition::Test => test.push(doc),
            }
        }
        Ok(GuardedSplit {
            train,
            valid,
            test: Some(test),
        })
    }

    pub fn train(&self) -> &[&'a Document] {
        &self.train
    }

    pub fn valid(&self) -> &[&'a Document] {
        &self.valid
    }

    pub fn test_consumed(&self) -> bool {
        self.test.is_none()
    }

    /// Hands out the test partition. A second call is an error (and a panic in
    /// debug builds).
    pub fn take_test(&mut self) -> Result<Vec<&'a Document>, CorpusError> {
        match self.test.take() {
            Some(t) => Ok(t),
            None => {
                debug_assert!(false, "test partition read twice");
                Err(CorpusError::TestAlreadyConsumed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, cat: CreatorCategory) -> Document {
        Document::new(id, format!("text of {id}"), cat.label(), cat, "acct").unwrap()
    }

    fn tweepfake_like_schema() -> Schema {
        Schema::from_json(
            r#"{"text":"text","label":"account.type","label_values":{"human":"HUMAN","bot":"BOT"}}"#,
        )
        .unwrap()
    }

    #[test]
    fn ingest_maps_three_rows() {
        let csv = "text,account.type\nhello there,human\nbuy now,bot\n\"a, quoted\",human\n";
        let got = ingest_reader(csv.as_bytes(), &tweepfake_like_schema(), "mem").unwrap();
        let docs = got.corpus.documents();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].doc_id, "00000000");
        assert_eq!(docs[1].label, Label::Bot);
        assert_eq!(docs[1].creator_category, CreatorCategory::Others);
        assert_eq!(docs[2].creator_category, CreatorCategory::Human);
        assert_eq!(docs[2].text, "a, quoted");
    }

    #[test]
    fn ingest_rejects_unmapped_label_with_row() {
        let csv = "text,account.type\nhi,human\nhmm,cyborg\n";
        let err = ingest_reader(csv.as_bytes(), &tweepfake_like_schema(), "mem").unwrap_err();
        match err {
            CorpusError::UnmappableLabel { row, value } => {
                assert_eq!(row, 1);
                assert_eq!(value, "cyborg");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_missing_column() {
        let csv = "tweet,account.type\nhi,human\n";
        let err = ingest_reader(csv.as_bytes(), &tweepfake_like_schema(), "mem").unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn { field: "text", .. }));
    }

    #[test]
    fn ingest_counts_blank_text_rows() {
        let csv = "text,account.type\nhi,human\n   ,bot\nyo,bot\n";
        let got = ingest_reader(csv.as_bytes(), &tweepfake_like_schema(), "mem").unwrap();
        assert_eq!(got.corpus.len(), 2);
        assert_eq!(got.rejected_empty, vec![1]);
        // ordinals are stable: the third row keeps ordinal 2
        assert_eq!(got.corpus.documents()[1].doc_id, "00000002");
    }

    #[test]
    fn ingest_rejects_inconsistent_category() {
        let schema = Schema::from_json(
            r#"{"text":"text","label":"l","label_values":{"h":"HUMAN","b":"BOT"},
                "category":"c","category_values":{"human":"HUMAN","gpt2":"GPT2"}}"#,
        )
        .unwrap();
        let csv = "text,l,c\nhi,h,gpt2\n";
        let err = ingest_reader(csv.as_bytes(), &schema, "mem").unwrap_err();
        assert!(matches!(err, CorpusError::InconsistentCategory { row: 0, .. }));
    }

    #[test]
    fn canonical_export_round_trips() {
        let docs = vec![
            Document::new("a", "line one\nline \"two\", three", Label::Bot, CreatorCategory::Gpt2, "acc,1").unwrap(),
            Document::new("b", "  padded  ", Label::Human, CreatorCategory::Human, "").unwrap(),
        ];
        let corpus = Corpus::new(docs, "mem").unwrap();
        let mut buf = Vec::new();
        corpus.write_canonical(&mut buf).unwrap();
        let back = ingest_reader(buf.as_slice(), &Schema::canonical(), "mem").unwrap();
        assert_eq!(back.corpus.documents(), corpus.documents());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = doc("x", CreatorCategory::Human);
        assert!(matches!(
            Corpus::new(vec![d.clone(), d], "mem"),
            Err(CorpusError::DuplicateDocId(_))
        ));
    }

    #[test]
    fn apportion_exact_and_remainders() {
        assert_eq!(apportion(100, &[0.8, 0.1, 0.1]), [80, 10, 10]);
        assert_eq!(apportion(50, &[0.8, 0.1, 0.1]), [40, 5, 5]);
        assert_eq!(apportion(7, &[0.8, 0.1, 0.1]), [5, 1, 1]);
        assert_eq!(apportion(3, &[0.8, 0.1, 0.1]), [3, 0, 0]);
        assert_eq!(apportion(0, &[0.8, 0.1, 0.1]), [0, 0, 0]);
    }

    #[test]
    fn split_sizes_single_stratum() {
        let docs = (0..100).map(|i| doc(&format!("d{i:03}"), CreatorCategory::Human)).collect();
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.8, 0.1, 0.1], 42, []).unwrap();
        let split = stratified_split(&corpus, &spec).unwrap();
        assert_eq!(
            [split.count(Partition::Train), split.count(Partition::Valid), split.count(Partition::Test)],
            [80, 10, 10]
        );
    }

    #[test]
    fn split_balances_two_strata() {
        let mut docs = Vec::new();
        for i in 0..50 {
            docs.push(doc(&format!("h{i}"), CreatorCategory::Human));
            docs.push(doc(&format!("b{i}"), CreatorCategory::Gpt2));
        }
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.8, 0.1, 0.1], 3, [StratumKey::Label]).unwrap();
        let split = stratified_split(&corpus, &spec).unwrap();
        // enumerate and count per (partition, label)
        let mut counts: BTreeMap<(Partition, Label), usize> = BTreeMap::new();
        for (d, (_, p)) in corpus.documents().iter().zip(split.entries()) {
            *counts.entry((*p, d.label)).or_default() += 1;
        }
        for (p, expect) in [(Partition::Train, 40), (Partition::Valid, 5), (Partition::Test, 5)] {
            assert_eq!(counts[&(p, Label::Human)], expect);
            assert_eq!(counts[&(p, Label::Bot)], expect);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let docs = (0..30).map(|i| doc(&format!("d{i}"), CreatorCategory::Rnn)).collect();
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.6, 0.2, 0.2], 9, [StratumKey::Label]).unwrap();
        assert_eq!(
            stratified_split(&corpus, &spec).unwrap(),
            stratified_split(&corpus, &spec).unwrap()
        );
    }

    #[test]
    fn tiny_strata_are_merged() {
        let mut docs: Vec<Document> = (0..20).map(|i| doc(&format!("h{i}"), CreatorCategory::Human)).collect();
        docs.push(doc("r1", CreatorCategory::Rnn));
        docs.push(doc("g1", CreatorCategory::Gpt2));
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.8, 0.1, 0.1], 1, [StratumKey::CreatorCategory]).unwrap();
        let split = stratified_split(&corpus, &spec).unwrap();
        assert_eq!(split.merged_strata(), &["GPT2".to_string(), "RNN".to_string()]);
        assert_eq!(split.len(), 22);
    }

    #[test]
    fn split_spec_rejects_bad_ratios() {
        assert!(SplitSpec::new([0.8, 0.1, 0.2], 0, []).is_err());
        assert!(SplitSpec::new([1.0, 0.0, 0.0], 0, []).is_err());
        assert!(SplitSpec::new([0.5, 0.25, 0.25], 0, []).is_ok());
    }

    #[test]
    fn filter_by_category_keeps_order() {
        let cats = [
            CreatorCategory::Gpt2,
            CreatorCategory::Human,
            CreatorCategory::Gpt2,
            CreatorCategory::Rnn,
            CreatorCategory::Others,
            CreatorCategory::Human,
            CreatorCategory::Gpt2,
            CreatorCategory::Human,
            CreatorCategory::Rnn,
            CreatorCategory::Human,
        ];
        let docs: Vec<Document> = cats.iter().enumerate().map(|(i, c)| doc(&format!("d{i}"), *c)).collect();
        let corpus = Corpus::new(docs.clone(), "mem").unwrap();
        let only: BTreeSet<_> = [CreatorCategory::Gpt2].into();
        let ids: Vec<_> = corpus.filter_by_category(&only).documents().iter().map(|d| d.doc_id.clone()).collect();
        // linear scan oracle
        let expect: Vec<_> = docs.iter().filter(|d| d.creator_category == CreatorCategory::Gpt2).map(|d| d.doc_id.clone()).collect();
        assert_eq!(ids, expect);
        assert_eq!(ids.len(), 3);
        let all: BTreeSet<_> = CreatorCategory::ALL.into();
        assert_eq!(corpus.filter_by_category(&all).documents(), corpus.documents());
        assert!(corpus.filter_by_category(&BTreeSet::new()).is_empty());
    }

    #[test]
    fn guarded_split_hands_out_test_once() {
        let docs = (0..10).map(|i| doc(&format!("d{i}"), CreatorCategory::Human)).collect();
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.6, 0.2, 0.2], 0, []).unwrap();
        let split = stratified_split(&corpus, &spec).unwrap();
        let mut guarded = GuardedSplit::new(&corpus, &split).unwrap();
        assert_eq!(guarded.train().len(), 6);
        assert_eq!(guarded.take_test().unwrap().len(), 2);
        assert!(guarded.test_consumed());
    }

    #[test]
    #[cfg(not(debug_assertions))]
    fn guarded_split_second_take_errors() {
        let docs = (0..10).map(|i| doc(&format!("d{i}"), CreatorCategory::Human)).collect();
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.6, 0.2, 0.2], 0, []).unwrap();
        let split = stratified_split(&corpus, &spec).unwrap();
        let mut guarded = GuardedSplit::new(&corpus, &split).unwrap();
        guarded.take_test().unwrap();
        assert!(matches!(guarded.take_test(), Err(CorpusError::TestAlreadyConsumed)));
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "test partition read twice")]
    fn guarded_split_second_take_panics_in_debug() {
        let docs = (0..10).map(|i| doc(&format!("d{i}"), CreatorCategory::Human)).collect();
        let corpus = Corpus::new(docs, "mem").unwrap();
        let spec = SplitSpec::new([0.6, 0.2, 0.2], 0, []).unwrap();
        let split = stratified_split(&corpus, &spec).unwrap();
        let mut guarded = GuardedSplit::new(&corpus, &split).unwrap();
        guarded.take_test().unwrap();
        let _ = guarded.take_test();
    }
}
