//! Config-level feature kinds and their fitted, serializable counterparts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    char_ngram_fit_transform, feature_union, stylometrics, tfidf_fit, CharNgramConfig, EmbeddingTable, FeatureMatrix,
    FeaturesError, StyloFeatures, StyloScaler, TfidfConfig, TfidfVectorizer,
};
use crate::corpus::Document;
use crate::textprep::{tokenize_with_id, TokenStream, WordSet};

/// Which representation to build, as written in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Tfidf(TfidfConfig),
    CharNgram(CharNgramConfig),
    Stylo,
    Embeddings {
        path: PathBuf,
        #[serde(default)]
        dim: Option<usize>,
    },
    Union {
        parts: Vec<FeatureSpec>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

/// Inputs some featurizers need besides the documents.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub lexicon: WordSet,
    pub embeddings: Option<EmbeddingTable>,
}

impl Default for FeatureContext {
    fn default() -> Self {
        FeatureContext {
            lexicon: WordSet::builtin_lexicon(),
            embeddings: None,
        }
    }
}

fn stylo_rows(docs: &[&Document], lexicon: &WordSet) -> Result<Vec<StyloFeatures>, FeaturesError> {
    docs.par_iter()
        .map(|d| stylometrics(d, &tokenize_with_id(&d.text, &d.doc_id), lexicon).map_err(FeaturesError::from))
        .collect()
}

fn texts<'a>(docs: &[&'a Document]) -> Vec<&'a str> {
    docs.iter().map(|d| d.text.as_str()).collect()
}

fn embedding_table(ctx: &FeatureContext) -> Result<&EmbeddingTable, FeaturesError> {
    ctx.embeddings.as_ref().ok_or(FeaturesError::EmbeddingsNotLoaded)
}

impl FeatureSpec {
    /// Short tag used in reports, e.g. `tfidf` or `union(tfidf+stylo)`.
    pub fn tag(&self) -> String {
        match self {
            FeatureSpec::Tfidf(_) => "tfidf".into(),
            FeatureSpec::CharNgram(c) => format!("char{}-{}", c.lo, c.hi),
            FeatureSpec::Stylo => "stylo".into(),
            FeatureSpec::Embeddings { .. } => "embeddings".into(),
            FeatureSpec::Union { parts, .. } => {
                format!("union({})", parts.iter().map(FeatureSpec::tag).collect::<Vec<_>>().join("+"))
            }
        }
    }

    /// The embeddings file this spec reads, if any (first one found).
    pub fn embeddings_source(&self) -> Option<(&Path, Option<usize>)> {
        match self {
            FeatureSpec::Embeddings { path, dim } => Some((path.as_path(), *dim)),
            FeatureSpec::Union { parts, .. } => parts.iter().find_map(FeatureSpec::embeddings_source),
            _ => None,
        }
    }

    /// Rebases relative embedding paths onto `base`.
    pub fn resolved(&self, base: &Path) -> FeatureSpec {
        match self {
            FeatureSpec::Embeddings { path, dim } if path.is_relative() => FeatureSpec::Embeddings {
                path: base.join(path),
                dim: *dim,
            },
            FeatureSpec::Union { parts, weights } => FeatureSpec::Union {
                parts: parts.iter().map(|p| p.resolved(base)).collect(),
                weights: weights.clone(),
            },
            other => other.clone(),
        }
    }

    /// Fits on `docs` (with their preprocessed `streams`, aligned) and returns
    /// the fitted featurizer together with the training matrix.
    pub fn fit_transform(
        &self,
        docs: &[&Document],
        streams: &[TokenStream],
        ctx: &FeatureContext,
    ) -> Result<(FittedFeaturizer, FeatureMatrix), FeaturesError> {
        if docs.is_empty() {
            return Err(FeaturesError::NoDocuments);
        }
        match self {
            FeatureSpec::Tfidf(config) => {
                let vectorizer = tfidf_fit(streams, config)?;
                let m = vectorizer.transform_streams(streams);
                Ok((FittedFeaturizer::Tfidf { vectorizer }, m))
            }
            FeatureSpec::CharNgram(config) => {
                let (vectorizer, m) = char_ngram_fit_transform(&texts(docs), config)?;
                Ok((FittedFeaturizer::CharNgram { vectorizer }, m))
            }
            FeatureSpec::Stylo => {
                let rows = stylo_rows(docs, &ctx.lexicon)?;
                let scaler = StyloScaler::fit(&rows);
                let m = scaler.transform(&rows);
                Ok((FittedFeaturizer::Stylo { scaler }, m))
            }
            FeatureSpec::Embeddings { dim, .. } => {
                let table = embedding_table(ctx)?;
                if let Some(d) = dim {
                    if *d != table.dim() {
                        return Err(FeaturesError::DimensionMismatch {
                            doc_id: "#dim header".into(),
                            found: table.dim(),
                            expected: *d,
                        });
                    }
                }
                let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
                let m = table.matrix(&ids)?;
                Ok((
                    FittedFeaturizer::Embeddings {
                        dim: table.dim(),
                        content_hash: table.content_hash().to_string(),
                    },
                    m,
                ))
            }
            FeatureSpec::Union { parts, weights } => {
                let mut fitted = Vec::with_capacity(parts.len());
                let mut matrices = Vec::with_capacity(parts.len());
                for p in parts {
                    let (f, m) = p.fit_transform(docs, streams, ctx)?;
                    fitted.push(f);
                    matrices.push(m);
                }
                let m = feature_union(&matrices, weights.as_deref())?;
                Ok((
                    FittedFeaturizer::Union {
                        parts: fitted,
                        weights: weights.clone(),
                    },
                    m,
                ))
            }
        }
    }
}

/// A fitted featurizer; persisted as the run's vectorizer artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedFeaturizer {
    Tfidf {
        vectorizer: TfidfVectorizer,
    },
    CharNgram {
        vectorizer: TfidfVectorizer,
    },
    Stylo {
        scaler: StyloScaler,
    },
    Embeddings {
        dim: usize,
        content_hash: String,
    },
    Union {
        parts: Vec<FittedFeaturizer>,
        weights: Option<Vec<f64>>,
    },
}

impl FittedFeaturizer {
    pub fn dim(&self) -> usize {
        match self {
            FittedFeaturizer::Tfidf { vectorizer } | FittedFeaturizer::CharNgram { vectorizer } => vectorizer.dim(),
            FittedFeaturizer::Stylo { .. } => super::STYLO_COLUMNS.len(),
            FittedFeaturizer::Embeddings { dim, .. } => *dim,
            FittedFeaturizer::Union { parts, .. } => parts.iter().map(FittedFeaturizer::dim).sum(),
        }
    }

    pub fn transform(
        &self,
        docs: &[&Document],
        streams: &[TokenStream],
        ctx: &FeatureContext,
    ) -> Result<FeatureMatrix, FeaturesError> {
        match self {
            FittedFeaturizer::Tfidf { vectorizer } => Ok(vectorizer.transform_streams(streams)),
            FittedFeaturizer::CharNgram { vectorizer } => Ok(vectorizer.transform_texts(&texts(docs))),
            FittedFeaturizer::Stylo { scaler } => Ok(scaler.transform(&stylo_rows(docs, &ctx.lexicon)?)),
            FittedFeaturizer::Embeddings { dim, content_hash } => {
                let table = embedding_table(ctx)?;
                if table.dim() != *dim || table.content_hash() != content_hash {
                    return Err(FeaturesError::EmbeddingsChanged);
                }
                let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
                table.matrix(&ids)
            }
            FittedFeaturizer::Union { parts, weights } => {
                let matrices = parts
                    .iter()
                    .map(|p| p.transform(docs, streams, ctx))
                    .collect::<Result<Vec<_>, _>>()?;
                feature_union(&matrices, weights.as_deref())
            }
        }
    }
}
