//! Precomputed per-document embeddings.
//!
//! File format: UTF-8 text; the first line is exactly `#dim=<D>`; every
//! following non-empty line is `doc_id,v1,...,vD`. Row order is irrelevant and
//! a repeated doc_id is an error. How the vectors were produced (CLS token,
//! mean pooling, ...) is up to the producer.

use std::collections::HashMap;
use std::path::Path;

use super::{short_id, FeatureMatrix, FeatureVector, FeaturesError};
use crate::seed::sha256_hex;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    content_hash: String,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f64]> {
        self.vectors.get(doc_id).map(Vec::as_slice)
    }

    /// SHA-256 of the file bytes the table was parsed from.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn feature_space_id(&self) -> String {
        short_id(&format!("embeddings:{}:{}", self.dim, self.content_hash))
    }

    /// Dense rows for `doc_ids`, in order.
    pub fn matrix<S: AsRef<str>>(&self, doc_ids: &[S]) -> Result<FeatureMatrix, FeaturesError> {
        let rows = doc_ids
            .iter()
            .map(|id| {
                let v = self
                    .get(id.as_ref())
                    .ok_or_else(|| FeaturesError::MissingEmbedding(id.as_ref().to_string()))?;
                FeatureVector::from_dense(v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        FeatureMatrix::new(rows, self.dim, self.feature_space_id())
    }
}

pub fn parse_embeddings(content: &str, expected_dim: Option<usize>) -> Result<EmbeddingTable, FeaturesError> {
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| FeaturesError::MalformedHeader("empty file".into()))?
        .trim_end_matches('\r');
    let dim: usize = header
        .strip_prefix("#dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| FeaturesError::MalformedHeader(header.to_string()))?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(FeaturesError::DimensionMismatch {
                doc_id: "#dim header".into(),
                found: dim,
                expected,
            });
        }
    }
    let mut vectors = HashMap::new();
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let doc_id = fields.next().unwrap_or_default().to_string();
        let raw: Vec<&str> = fields.collect();
        if raw.len() != dim {
            return Err(FeaturesError::DimensionMismatch {
                doc_id,
                found: raw.len(),
                expected: dim,
            });
        }
        let mut values = Vec::with_capacity(dim);
        for r in raw {
            let v: f64 = r.trim().parse().map_err(|_| FeaturesError::MalformedValue {
                doc_id: doc_id.clone(),
                value: r.to_string(),
            })?;
            if !v.is_finite() {
                return Err(FeaturesError::NonFiniteValue(doc_id));
            }
            values.push(v);
        }
        if vectors.contains_key(&doc_id) {
            return Err(FeaturesError::DuplicateDocId(doc_id));
        }
        vectors.insert(doc_id, values);
    }
    Ok(EmbeddingTable {
        dim,
        vectors,
        content_hash: sha256_hex(content.as_bytes()),
    })
}

pub fn load_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable, FeaturesError> {
    let content = std::fs::read_to_string(path).map_err(|source| FeaturesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&content, expected_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_rows() {
        let t = parse_embeddings("#dim=3\nd1,0.1,0.2,0.3\n\nd2,1,0,-1\n", None).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("d2"), Some(&[1.0, 0.0, -1.0][..]));
        let m = t.matrix(&["d2", "d1"]).unwrap();
        assert_eq!(m.row(0).entries(), &[(0, 1.0), (2, -1.0)]);
    }

    #[test]
    fn short_row_names_doc() {
        match parse_embeddings("#dim=3\nd1,0.1,0.2\n", None) {
            Err(FeaturesError::DimensionMismatch { doc_id, found: 2, expected: 3 }) => assert_eq!(doc_id, "d1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expected_dim_checked() {
        let mut content = String::from("#dim=768\nx");
        for _ in 0..768 {
            content.push_str(",0.5");
        }
        assert!(parse_embeddings(&content, Some(768)).is_ok());
        assert!(matches!(
            parse_embeddings(&content, Some(512)),
            Err(FeaturesError::DimensionMismatch { expected: 512, found: 768, .. })
        ));
    }

    #[test]
    fn error_cases() {
        assert!(matches!(parse_embeddings("dim=3\n", None), Err(FeaturesError::MalformedHeader(_))));
        assert!(matches!(parse_embeddings("#dim=0\n", None), Err(FeaturesError::MalformedHeader(_))));
        assert!(matches!(parse_embeddings("", None), Err(FeaturesError::MalformedHeader(_))));
        assert!(matches!(
            parse_embeddings("#dim=1\na,1\na,2\n", None),
            Err(FeaturesError::DuplicateDocId(id)) if id == "a"
        ));
        assert!(matches!(parse_embeddings("#dim=1\na,NaN\n", None), Err(FeaturesError::NonFiniteValue(_))));
        assert!(matches!(parse_embeddings("#dim=1\na,inf\n", None), Err(FeaturesError::NonFiniteValue(_))));
        assert!(matches!(parse_embeddings("#dim=1\na,x\n", None), Err(FeaturesError::MalformedValue { .. })));
        let t = parse_embeddings("#dim=1\na,1\n", None).unwrap();
        assert!(matches!(t.matrix(&["b"]), Err(FeaturesError::MissingEmbedding(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_embeddings(Path::new("/definitely/not/here.emb"), None),
            Err(FeaturesError::Io { .. })
        ));
    }
}
