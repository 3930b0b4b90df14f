use serde::{Deserialize, Serialize};

use super::{short_id, FeatureMatrix, FeatureVector};
use crate::corpus::Document;
use crate::textprep::{misspell_count, TextError, TokenKind, TokenStream, WordSet};

/// Column order of the stylometric block.
pub const STYLO_COLUMNS: [&str; 9] = [
    "emoticon_count",
    "mention_count",
    "url_count",
    "hashtag_count",
    "misspell_ratio",
    "char_length",
    "word_count",
    "uppercase_ratio",
    "punct_density",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StyloFeatures {
    pub emoticon_count: f64,
    pub mention_count: f64,
    pub url_count: f64,
    pub hashtag_count: f64,
    pub misspell_ratio: f64,
    pub char_length: f64,
    pub word_count: f64,
    pub uppercase_ratio: f64,
    pub punct_density: f64,
}

impl StyloFeatures {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.emoticon_count,
            self.mention_count,
            self.url_count,
            self.hashtag_count,
            self.misspell_ratio,
            self.char_length,
            self.word_count,
            self.uppercase_ratio,
            self.punct_density,
        ]
    }
}

/// Surface-style statistics of one document. `stream` must be the raw
/// tokenization of `doc.text`. The uppercase ratio is taken over the letters
/// of WORD tokens, so URLs and mentions do not dilute it; `char_length`
/// counts code points.
pub fn stylometrics(doc: &Document, stream: &TokenStream, lexicon: &WordSet) -> Result<StyloFeatures, TextError> {
    let mut letters = 0usize;
    let mut upper = 0usize;
    for t in stream.tokens.iter().filter(|t| t.kind == TokenKind::Word) {
        for c in t.surface.chars().filter(|c| c.is_alphabetic()) {
            letters += 1;
            if c.is_uppercase() {
                upper += 1;
            }
        }
    }
    let misspell = misspell_count(stream, lexicon)?;
    Ok(StyloFeatures {
        emoticon_count: stream.count_kind(TokenKind::Emoticon) as f64,
        mention_count: stream.count_kind(TokenKind::Mention) as f64,
        url_count: stream.count_kind(TokenKind::Url) as f64,
        hashtag_count: stream.count_kind(TokenKind::Hashtag) as f64,
        misspell_ratio: misspell.ratio,
        char_length: doc.text.chars().count() as f64,
        word_count: stream.count_kind(TokenKind::Word) as f64,
        uppercase_ratio: upper as f64 / letters.max(1) as f64,
        punct_density: stream.count_kind(TokenKind::Punct) as f64 / stream.len().max(1) as f64,
    })
}

/// Per-column max-abs scaling fitted on training rows, so count columns land
/// in roughly [0, 1] next to unit-norm TF-IDF blocks. Zeros stay zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyloScaler {
    max_abs: [f64; 9],
}

impl StyloScaler {
    pub fn fit(rows: &[StyloFeatures]) -> StyloScaler {
        let mut max_abs = [0.0f64; 9];
        for r in rows {
            for (m, v) in max_abs.iter_mut().zip(r.to_array()) {
                *m = m.max(v.abs());
            }
        }
        StyloScaler { max_abs }
    }

    pub fn feature_space_id(&self) -> String {
        short_id(&format!("stylo:{:?}", self.max_abs))
    }

    pub fn transform(&self, rows: &[StyloFeatures]) -> FeatureMatrix {
        let rows = rows
            .iter()
            .map(|r| {
                let scaled: Vec<f64> = r
                    .to_array()
                    .iter()
                    .zip(self.max_abs)
                    .map(|(v, m)| if m > 0.0 { v / m } else { 0.0 })
                    .collect();
                FeatureVector::from_dense(&scaled).expect("finite stylometric values")
            })
            .collect();
        FeatureMatrix::new(rows, STYLO_COLUMNS.len(), self.feature_space_id()).expect("fixed width")
    }
}
