//! Numeric representations of documents: sparse rows, TF-IDF over tokens or
//! character n-grams, stylometric statistics, precomputed embeddings and
//! horizontal unions of any of these.

mod embeddings;
mod featurizer;
mod stylo;
mod tfidf;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::seed::sha256_hex;

pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingTable};
pub use featurizer::{FeatureContext, FeatureSpec, FittedFeaturizer};
pub use stylo::{stylometrics, StyloFeatures, StyloScaler, STYLO_COLUMNS};
pub use tfidf::{
    char_ngram_fit_transform, char_ngrams, fit_vocabulary, idf, tfidf_fit, Analyzer, CharNgramConfig,
    TfidfConfig, TfidfVectorizer, Vocabulary,
};

#[derive(Debug, thiserror::Error)]
pub enum FeaturesError {
    #[error("no term survived the document-frequency filter")]
    EmptyVocabulary,
    #[error("cannot fit on zero documents")]
    NoDocuments,
    #[error("invalid n-gram range ({lo}, {hi}); need 1 <= lo <= hi <= 6")]
    InvalidNgramRange { lo: usize, hi: usize },
    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("feature indices must be strictly increasing")]
    UnsortedIndices,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("row {row} has dimension {found}, expected {expected}")]
    RowDimension { row: usize, found: usize, expected: usize },
    #[error("union parts have differing row counts: {0:?}")]
    RowCountMismatch(Vec<usize>),
    #[error("{weights} weights given for {parts} parts")]
    WeightCountMismatch { parts: usize, weights: usize },
    #[error("embedding file header is malformed: {0}")]
    MalformedHeader(String),
    #[error("embedding for `{doc_id}` has {found} values, expected {expected}")]
    DimensionMismatch {
        doc_id: String,
        found: usize,
        expected: usize,
    },
    #[error("duplicate embedding for doc_id `{0}`")]
    DuplicateDocId(String),
    #[error("non-finite value in embedding for `{0}`")]
    NonFiniteValue(String),
    #[error("unparseable value `{value}` in embedding for `{doc_id}`")]
    MalformedValue { doc_id: String, value: String },
    #[error("no embedding for document `{0}`")]
    MissingEmbedding(String),
    #[error("featurizer needs an embedding table but none was loaded")]
    EmbeddingsNotLoaded,
    #[error("embedding table differs from the one the featurizer was fitted on")]
    EmbeddingsChanged,
    #[error("malformed feature matrix file: {0}")]
    MalformedMatrix(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Text(#[from] crate::textprep::TextError),
}

/// Sparse row: strictly increasing column indices, no stored zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
    dim: usize,
}

impl FeatureVector {
    /// Builds a row from sorted entries; zero values are dropped.
    pub fn new(entries: Vec<(usize, f64)>, dim: usize) -> Result<Self, FeaturesError> {
        let mut prev: Option<usize> = None;
        for &(i, v) in &entries {
            if i >= dim {
                return Err(FeaturesError::IndexOutOfRange { index: i, dim });
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(FeaturesError::UnsortedIndices);
            }
            if !v.is_finite() {
                return Err(FeaturesError::NonFinite);
            }
            prev = Some(i);
        }
        Ok(FeatureVector {
            entries: entries.into_iter().filter(|&(_, v)| v != 0.0).collect(),
            dim,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            entries: Vec::new(),
            dim,
        }
    }

    pub fn from_dense(values: &[f64]) -> Result<Self, FeaturesError> {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        FeatureVector::new(entries, values.len())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Rows aligned with an input document slice, all sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: Vec<FeatureVector>,
    dim: usize,
    feature_space_id: String,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<FeatureVector>, dim: usize, feature_space_id: impl Into<String>) -> Result<Self, FeaturesError> {
        for (row, r) in rows.iter().enumerate() {
            if r.dim != dim {
                return Err(FeaturesError::RowDimension {
                    row,
                    found: r.dim,
                    expected: dim,
                });
            }
        }
        Ok(FeatureMatrix {
            rows,
            dim,
            feature_space_id: feature_space_id.into(),
        })
    }

    pub fn from_dense(rows: &[Vec<f64>], feature_space_id: impl Into<String>) -> Result<Self, FeaturesError> {
        let dim = rows.first().map_or(0, Vec::len);
        let rows = rows
            .iter()
            .map(|r| FeatureVector::from_dense(r))
            .collect::<Result<Vec<_>, _>>()?;
        FeatureMatrix::new(rows, dim, feature_space_id)
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &FeatureVector {
        &self.rows[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_space_id(&self) -> &str {
        &self.feature_space_id
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(FeatureVector::nnz).sum()
    }

    /// Subset of rows by index, same feature space.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            dim: self.dim,
            feature_space_id: self.feature_space_id.clone(),
        }
    }

    /// Column-major view: for each column, the `(row, value)` pairs stored in it,
    /// rows ascending.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.dim];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in &row.entries {
                cols[c].push((r, v));
            }
        }
        cols
    }

    /// Coordinate export: `#rows=R,cols=C`, then `row,col,value` lines.
    pub fn write_coo<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "#rows={},cols={}", self.rows.len(), self.dim)?;
        writeln!(out, "row,col,value")?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in &row.entries {
                writeln!(out, "{r},{c},{v}")?;
            }
        }
        Ok(())
    }

    pub fn read_coo<R: BufRead>(input: R, feature_space_id: impl Into<String>) -> Result<FeatureMatrix, FeaturesError> {
        let bad = |m: &str| FeaturesError::MalformedMatrix(m.to_string());
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file"))?
            .map_err(|e| bad(&e.to_string()))?;
        let (rows, cols) = header
            .trim_end()
            .strip_prefix("#rows=")
            .and_then(|s| s.split_once(",cols="))
            .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
            .ok_or_else(|| bad("bad header line"))?;
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            let line = line.trim_end();
            if (n == 0 && line == "row,col,value") || line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parsed = (|| {
                let r: usize = parts.next()?.parse().ok()?;
                let c: usize = parts.next()?.parse().ok()?;
                let v: f64 = parts.next()?.parse().ok()?;
                Some((r, c, v))
            })();
            let (r, c, v) = parsed.ok_or_else(|| bad(line))?;
            if r >= rows {
                return Err(bad(&format!("row {r} out of range")));
            }
            entries[r].push((c, v));
        }
        let rows = entries
            .into_iter()
            .map(|mut e| {
                e.sort_by_key(|&(c, _)| c);
                FeatureVector::new(e, cols)
            })
            .collect::<Result<Vec<_>, _>>()?;
        FeatureMatrix::new(rows, cols, feature_space_id)
    }
}

/// Horizontal concatenation. Part `k` column `j` lands at
/// `sum(dim of parts before k) + j`; values are multiplied by the part weight
/// (a zero weight drops that part's entries).
pub fn feature_union(parts: &[FeatureMatrix], weights: Option<&[f64]>) -> Result<FeatureMatrix, FeaturesError> {
    if let Some(w) = weights {
        if w.len() != parts.len() {
            return Err(FeaturesError::WeightCountMismatch {
                parts: parts.len(),
                weights: w.len(),
            });
        }
    }
    let n_rows = parts.first().map_or(0, FeatureMatrix::n_rows);
    if parts.iter().any(|p| p.n_rows() != n_rows) {
        return Err(FeaturesError::RowCountMismatch(
            parts.iter().map(FeatureMatrix::n_rows).collect(),
        ));
    }
    if parts.len() == 1 && weights.is_none_or(|w| w[0] == 1.0) {
        return Ok(parts[0].clone());
    }
    let dim: usize = parts.iter().map(FeatureMatrix::dim).sum();
    let mut rows = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let mut entries = Vec::new();
        let mut offset = 0;
        for (k, part) in parts.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[k]);
            if w != 0.0 {
                entries.extend(part.rows[r].entries.iter().map(|&(c, v)| (offset + c, v * w)));
            }
            offset += part.dim;
        }
        rows.push(FeatureVector::new(entries, dim)?);
    }
    let id_source = parts
        .iter()
        .enumerate()
        .map(|(k, p)| format!("{}*{}", p.feature_space_id, weights.map_or(1.0, |w| w[k])))
        .collect::<Vec<_>>()
        .join("|");
    FeatureMatrix::new(rows, dim, short_id(&format!("union:{id_source}")))
}

/// 16 hex chars of SHA-256; used as a feature-space fingerprint.
pub(crate) fn short_id(content: &str) -> String {
    sha256_hex(content.as_bytes())[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>], id: &str) -> FeatureMatrix {
        FeatureMatrix::from_dense(rows, id).unwrap()
    }

    #[test]
    fn vector_validation() {
        assert!(FeatureVector::new(vec![(0, 1.0), (0, 2.0)], 3).is_err());
        assert!(FeatureVector::new(vec![(3, 1.0)], 3).is_err());
        assert!(FeatureVector::new(vec![(1, f64::NAN)], 3).is_err());
        let v = FeatureVector::new(vec![(0, 0.0), (2, 5.0)], 3).unwrap();
        assert_eq!(v.entries(), &[(2, 5.0)]);
        assert_eq!(v.get(2), 5.0);
        assert_eq!(v.get(1), 0.0);
    }

    #[test]
    fn union_offsets() {
        let a = m(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]], "a");
        let b = m(&[vec![4.0, 5.0], vec![0.0, 6.0]], "b");
        let u = feature_union(&[a, b], None).unwrap();
        assert_eq!(u.dim(), 5);
        assert_eq!(u.row(0).entries(), &[(0, 1.0), (2, 2.0), (3, 4.0), (4, 5.0)]);
        assert_eq!(u.row(1).entries(), &[(1, 3.0), (4, 6.0)]);
    }

    #[test]
    fn union_zero_weight_drops_part() {
        let a = m(&[vec![1.0, 2.0, 3.0]], "a");
        let b = m(&[vec![4.0, 5.0]], "b");
        let u = feature_union(&[a, b], Some(&[1.0, 0.0])).unwrap();
        assert_eq!(u.dim(), 5);
        assert!(u.row(0).entries().iter().all(|&(c, _)| c < 3));
    }

    #[test]
    fn union_single_part_is_identity() {
        let a = m(&[vec![1.0, 0.0], vec![0.0, 2.0]], "a");
        assert_eq!(feature_union(std::slice::from_ref(&a), None).unwrap(), a);
    }

    #[test]
    fn union_row_mismatch() {
        let a = m(&[vec![1.0]], "a");
        let b = m(&[vec![1.0], vec![2.0]], "b");
        assert!(matches!(feature_union(&[a, b], None), Err(FeaturesError::RowCountMismatch(_))));
    }

    #[test]
    fn coo_round_trip() {
        let a = m(&[vec![1.5, 0.0, -2.0], vec![0.0, 0.0, 0.0], vec![0.0, 1e-17, 0.0]], "a");
        let mut buf = Vec::new();
        a.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#rows=3,cols=3\nrow,col,value\n"));
        let back = FeatureMatrix::read_coo(buf.as_slice(), "a").unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn columns_view() {
        let a = m(&[vec![1.0, 0.0], vec![2.0, 3.0]], "a");
        assert_eq!(a.columns(), vec![vec![(0, 1.0), (1, 2.0)], vec![(1, 3.0)]]);
    }
}
