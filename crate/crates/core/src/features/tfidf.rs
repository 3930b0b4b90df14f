//! TF-IDF over token streams or character n-grams.
//!
//! Weighting is `tf(t, d) * idf(t)` with the smoothed
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, where `N` is the number of fitted
//! documents and `tf` is the raw count (or `1 + ln(count)` when sublinear).
//! Every nonzero row is L2-normalized. Out-of-vocabulary terms are ignored.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{short_id, FeatureMatrix, FeatureVector, FeaturesError};
use crate::textprep::TokenStream;

fn default_min_df() -> usize {
    2
}

fn default_char_min_df() -> usize {
    5
}

fn default_max_features() -> Option<usize> {
    Some(50_000)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfConfig {
    #[serde(default = "default_min_df")]
    pub min_df: usize,
    #[serde(default = "default_max_features")]
    pub max_features: Option<usize>,
    #[serde(default)]
    pub sublinear_tf: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_df: default_min_df(),
            max_features: default_max_features(),
            sublinear_tf: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharNgramConfig {
    pub lo: usize,
    pub hi: usize,
    #[serde(default = "default_char_min_df")]
    pub min_df: usize,
    #[serde(default = "default_max_features")]
    pub max_features: Option<usize>,
    #[serde(default)]
    pub sublinear_tf: bool,
}

impl Default for CharNgramConfig {
    fn default() -> Self {
        CharNgramConfig {
            lo: 2,
            hi: 4,
            min_df: default_char_min_df(),
            max_features: default_max_features(),
            sublinear_tf: false,
        }
    }
}

/// Term to column mapping with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.df, r.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            df,
            n_docs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs_fitted(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.df[i])
    }

    pub fn df(&self) -> &[usize] {
        &self.df
    }
}

/// Smoothed inverse document frequency.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Builds a vocabulary from per-document term lists. Terms need `df >= min_df`;
/// when more than `max_features` survive, the highest-df terms are kept with
/// ties broken by term order. Columns are assigned in lexicographic term order.
pub fn fit_vocabulary<D, T>(docs: &[D], min_df: usize, max_features: Option<usize>) -> Result<Vocabulary, FeaturesError>
where
    D: AsRef<[T]>,
    T: AsRef<str>,
{
    if docs.is_empty() {
        return Err(FeaturesError::NoDocuments);
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let mut seen: Vec<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, n)| n >= min_df.max(1)).collect();
    if kept.is_empty() {
        return Err(FeaturesError::EmptyVocabulary);
    }
    if let Some(cap) = max_features {
        if kept.len() > cap {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            kept.truncate(cap);
        }
    }
    kept.sort_by(|a, b| a.0.cmp(b.0));
    let (terms, df): (Vec<String>, Vec<usize>) = kept.into_iter().map(|(t, n)| (t.to_string(), n)).unzip();
    Ok(Vocabulary::from_parts(terms, df, docs.len()))
}

/// What a vectorizer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "analyzer", rename_all = "snake_case")]
pub enum Analyzer {
    /// Normalized forms of a token stream.
    Tokens,
    /// Character n-grams of the lowercased, whitespace-collapsed text.
    CharNgrams { lo: usize, hi: usize },
}

/// Character n-grams of lengths `lo..=hi` over the lowercased text with
/// whitespace runs collapsed to one space and ends trimmed.
pub fn char_ngrams(text: &str, lo: usize, hi: usize) -> Vec<String> {
    let cleaned: Vec<char> = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
        .chars()
        .collect();
    let mut grams = Vec::new();
    for n in lo..=hi {
        if n > cleaned.len() {
            break;
        }
        grams.extend(cleaned.windows(n).map(|w| w.iter().collect::<String>()));
    }
    grams
}

fn check_range(lo: usize, hi: usize) -> Result<(), FeaturesError> {
    if lo >= 1 && lo <= hi && hi <= 6 {
        Ok(())
    } else {
        Err(FeaturesError::InvalidNgramRange { lo, hi })
    }
}

/// A fitted TF-IDF vectorizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    analyzer: Analyzer,
    vocabulary: Vocabulary,
    sublinear_tf: bool,
    idf: Vec<f64>,
    feature_space_id: String,
}

impl TfidfVectorizer {
    fn from_vocabulary(analyzer: Analyzer, vocabulary: Vocabulary, sublinear_tf: bool) -> Self {
        let idf = vocabulary.df.iter().map(|&d| idf(vocabulary.n_docs, d)).collect();
        let fingerprint = serde_json::json!({
            "analyzer": analyzer,
            "terms": vocabulary.terms,
            "df": vocabulary.df,
            "n_docs": vocabulary.n_docs,
            "sublinear_tf": sublinear_tf,
        });
        TfidfVectorizer {
            analyzer,
            vocabulary,
            sublinear_tf,
            idf,
            feature_space_id: short_id(&fingerprint.to_string()),
        }
    }

    pub fn analyzer(&self) -> Analyzer {
        self.analyzer
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf_values(&self) -> &[f64] {
        &self.idf
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn feature_space_id(&self) -> &str {
        &self.feature_space_id
    }

    /// One weighted, normalized row from the terms of one document.
    pub fn transform_terms<T: AsRef<str>>(&self, terms: &[T]) -> FeatureVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms {
            if let Some(i) = self.vocabulary.index_of(t.as_ref()) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, c)| {
                let tf = if self.sublinear_tf { 1.0 + c.ln() } else { c };
                (i, tf * self.idf[i])
            })
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        FeatureVector::new(entries, self.dim()).expect("indices come from the vocabulary")
    }

    fn matrix(&self, rows: Vec<FeatureVector>) -> FeatureMatrix {
        FeatureMatrix::new(rows, self.dim(), self.feature_space_id.clone()).expect("rows share the vocabulary dimension")
    }

    /// Transforms token streams (token analyzer).
    pub fn transform_streams(&self, streams: &[TokenStream]) -> FeatureMatrix {
        let rows = streams
            .par_iter()
            .map(|s| {
                let terms: Vec<&str> = s.normalized().collect();
                self.transform_terms(&terms)
            })
            .collect();
        self.matrix(rows)
    }

    /// Transforms raw texts (character n-gram analyzer).
    pub fn transform_texts<S: AsRef<str> + Sync>(&self, texts: &[S]) -> FeatureMatrix {
        let (lo, hi) = match self.analyzer {
            Analyzer::CharNgrams { lo, hi } => (lo, hi),
            Analyzer::Tokens => panic!("transform_texts called on a token vectorizer"),
        };
        let rows = texts
            .par_iter()
            .map(|t| self.transform_terms(&char_ngrams(t.as_ref(), lo, hi)))
            .collect();
        self.matrix(rows)
    }
}

/// Fits a token TF-IDF vectorizer on the normalized forms of `streams`.
pub fn tfidf_fit(streams: &[TokenStream], config: &TfidfConfig) -> Result<TfidfVectorizer, FeaturesError> {
    let docs: Vec<Vec<&str>> = streams.iter().map(|s| s.normalized().collect()).collect();
    let vocab = fit_vocabulary(&docs, config.min_df, config.max_features)?;
    Ok(TfidfVectorizer::from_vocabulary(Analyzer::Tokens, vocab, config.sublinear_tf))
}

/// Fits a character n-gram vectorizer and transforms the fitting texts.
pub fn char_ngram_fit_transform<S: AsRef<str> + Sync>(
    texts: &[S],
    config: &CharNgramConfig,
) -> Result<(TfidfVectorizer, FeatureMatrix), FeaturesError> {
    check_range(config.lo, config.hi)?;
    let docs: Vec<Vec<String>> = texts.iter().map(|t| char_ngrams(t.as_ref(), config.lo, config.hi)).collect();
    let vocab = fit_vocabulary(&docs, config.min_df, config.max_features)?;
    let vectorizer = TfidfVectorizer::from_vocabulary(
        Analyzer::CharNgrams {
            lo: config.lo,
            hi: config.hi,
        },
        vocab,
        config.sublinear_tf,
    );
    let rows = docs.par_iter().map(|d| vectorizer.transform_terms(d)).collect();
    let matrix = vectorizer.matrix(rows);
    Ok((vectorizer, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::tokenize;
    use proptest::prelude::*;

    fn streams(texts: &[&str]) -> Vec<TokenStream> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    fn cfg(min_df: usize, max_features: Option<usize>) -> TfidfConfig {
        TfidfConfig {
            min_df,
            max_features,
            sublinear_tf: false,
        }
    }

    #[test]
    fn fit_counts_document_frequency() {
        let v = tfidf_fit(&streams(&["a b", "a c"]), &cfg(1, None)).unwrap();
        let vocab = v.vocabulary();
        assert_eq!(vocab.terms(), &["a", "b", "c"]);
        assert_eq!(vocab.document_frequency("a"), Some(2));
        assert_eq!(vocab.document_frequency("b"), Some(1));
        assert_eq!(vocab.document_frequency("c"), Some(1));
        assert_eq!(vocab.n_docs_fitted(), 2);
    }

    #[test]
    fn min_df_and_max_features() {
        let v = tfidf_fit(&streams(&["a b", "a c"]), &cfg(2, None)).unwrap();
        assert_eq!(v.vocabulary().terms(), &["a"]);
        let v = tfidf_fit(&streams(&["a b", "a c"]), &cfg(1, Some(2))).unwrap();
        assert_eq!(v.vocabulary().terms(), &["a", "b"]);
        assert!(matches!(
            tfidf_fit(&streams(&["a b", "c d"]), &cfg(2, None)),
            Err(FeaturesError::EmptyVocabulary)
        ));
    }

    #[test]
    fn transform_hand_computed() {
        let v = tfidf_fit(&streams(&["a b", "a c"]), &cfg(1, None)).unwrap();
        // idf(a) = ln(3/3) + 1 = 1, idf(b) = ln(3/2) + 1
        assert_eq!(v.idf_values()[0], 1.0);
        assert!((v.idf_values()[1] - 1.405465).abs() < 1e-6);
        let m = v.transform_streams(&streams(&["a b"]));
        let row = m.row(0);
        assert!((row.get(0) - 0.579738).abs() < 1e-6);
        // 1.405465 / sqrt(1 + 1.405465^2)
        assert!((row.get(1) - 0.814802).abs() < 1e-6);
        assert_eq!(row.get(2), 0.0);
    }

    #[test]
    fn oov_only_gives_zero_row() {
        let v = tfidf_fit(&streams(&["a b", "a c"]), &cfg(1, None)).unwrap();
        let m = v.transform_streams(&streams(&["zzz qqq"]));
        assert_eq!(m.row(0).nnz(), 0);
    }

    #[test]
    fn transform_of_training_doc_matches_batch() {
        let texts = ["a b c", "a a d", "b d e"];
        let v = tfidf_fit(&streams(&texts), &cfg(1, None)).unwrap();
        let batch = v.transform_streams(&streams(&texts));
        let single = v.transform_streams(&streams(&texts[1..2]));
        assert_eq!(batch.row(1), single.row(0));
    }

    #[test]
    fn sublinear_tf() {
        let v = tfidf_fit(&streams(&["a a a b", "b c"]), &TfidfConfig { min_df: 1, max_features: None, sublinear_tf: true }).unwrap();
        let row = v.transform_terms(&["a", "a", "a", "b"]);
        let ia = v.vocabulary().index_of("a").unwrap();
        let ib = v.vocabulary().index_of("b").unwrap();
        let wa = (1.0 + 3f64.ln()) * idf(2, 1);
        let wb = 1.0 * idf(2, 2);
        let norm = (wa * wa + wb * wb).sqrt();
        assert!((row.get(ia) - wa / norm).abs() < 1e-12);
        assert!((row.get(ib) - wb / norm).abs() < 1e-12);
    }

    #[test]
    fn char_ngram_examples() {
        assert_eq!(char_ngrams("ab", 2, 2), vec!["ab"]);
        let mut grams = char_ngrams("aba", 2, 2);
        grams.sort();
        assert_eq!(grams, vec!["ab", "ba"]);
        assert_eq!(char_ngrams("  A \t B ", 3, 3), vec!["a b"]);
        let config = CharNgramConfig { lo: 2, hi: 2, min_df: 1, max_features: None, sublinear_tf: false };
        let (v, m) = char_ngram_fit_transform(&["ab", "abab", "xy"], &config).unwrap();
        assert_eq!(v.vocabulary().document_frequency("ab"), Some(2));
        assert_eq!(m.n_rows(), 3);
        assert_eq!(v.transform_texts(&["abab"]).row(0), m.row(1));
    }

    #[test]
    fn char_ngram_range_checked() {
        let bad = CharNgramConfig { lo: 3, hi: 2, ..CharNgramConfig::default() };
        assert!(matches!(char_ngram_fit_transform(&["abc"], &bad), Err(FeaturesError::InvalidNgramRange { .. })));
        let bad = CharNgramConfig { lo: 1, hi: 7, ..CharNgramConfig::default() };
        assert!(char_ngram_fit_transform(&["abc"], &bad).is_err());
    }

    #[test]
    fn vocabulary_serde_rebuilds_index() {
        let v = tfidf_fit(&streams(&["a b", "a c"]), &cfg(1, None)).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: TfidfVectorizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.vocabulary().index_of("c"), Some(2));
    }

    proptest! {
        #[test]
        fn rows_are_unit_or_zero(docs in proptest::collection::vec("[a-e ]{0,20}", 1..10)) {
            let s: Vec<TokenStream> = docs.iter().map(|d| tokenize(d)).collect();
            if let Ok(v) = tfidf_fit(&s, &cfg(1, None)) {
                for row in v.transform_streams(&s).rows() {
                    let n = row.l2_norm();
                    prop_assert!(row.nnz() == 0 || (n - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn idf_non_increasing_in_df(n in 1usize..1000, a in 1usize..1000, b in 1usize..1000) {
            let (lo, hi) = (a.min(b).min(n), a.max(b).min(n));
            prop_assert!(idf(n, lo) >= idf(n, hi));
        }

        #[test]
        fn transform_does_not_touch_vocabulary(docs in proptest::collection::vec("[a-e ]{1,20}", 1..6), unseen in "[a-z ]{0,30}") {
            let s: Vec<TokenStream> = docs.iter().map(|d| tokenize(d)).collect();
            if let Ok(v) = tfidf_fit(&s, &cfg(1, None)) {
                let before = v.clone();
                let _ = v.transform_streams(&[tokenize(&unseen)]);
                prop_assert_eq!(before, v);
            }
        }
    }
}
