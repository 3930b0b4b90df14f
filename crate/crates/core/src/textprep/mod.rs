//! Tweet-aware tokenization and the three preprocessing pipelines:
//! raw, stop-word filtered and stemmed ("lemmatized").

mod stemmer;
mod tokenizer;
mod wordlist;

use serde::{Deserialize, Serialize};

pub use stemmer::stem;
pub use tokenizer::{emoticon_lexicon, is_emoji, tokenize_with_id, MENTION_PLACEHOLDER, URL_PLACEHOLDER};
pub use wordlist::{WordListKind, WordListSource, WordSet};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("stop-word list `{0}` could not be loaded")]
    MissingStopwordList(String),
    #[error("lexicon `{0}` could not be loaded")]
    MissingLexicon(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenKind {
    Word,
    Mention,
    Url,
    Hashtag,
    Emoticon,
    Number,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub surface: String,
    pub normalized: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub source_doc_id: String,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count_kind(&self, kind: TokenKind) -> usize {
        self.tokens.iter().filter(|t| t.kind == kind).count()
    }

    pub fn normalized(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.normalized.as_str())
    }
}

/// Tokenizes `text` with an empty source id.
pub fn tokenize(text: &str) -> TokenStream {
    tokenize_with_id(text, "")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    #[default]
    Raw,
    StopwordFiltered,
    Lemmatized,
}

impl PipelineMode {
    pub fn tag(self) -> &'static str {
        match self {
            PipelineMode::Raw => "raw",
            PipelineMode::StopwordFiltered => "stopword_filtered",
            PipelineMode::Lemmatized => "lemmatized",
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    #[serde(default)]
    pub mode: PipelineMode,
    #[serde(default = "WordListSource::builtin_en")]
    pub stopwords: WordListSource,
    #[serde(default = "default_true")]
    pub lowercase: bool,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            mode: PipelineMode::Raw,
            stopwords: WordListSource::builtin_en(),
            lowercase: true,
        }
    }
}

/// A pipeline with its stop-word list loaded.
#[derive(Debug, Clone)]
pub struct Pipeline {
    mode: PipelineMode,
    lowercase: bool,
    stopwords: Option<WordSet>,
}

impl Pipeline {
    pub fn from_spec(spec: &PipelineSpec) -> Result<Pipeline, TextError> {
        if spec.mode == PipelineMode::Lemmatized && !spec.lowercase {
            return Err(TextError::InvalidPipeline(
                "lemmatized mode requires lowercase".into(),
            ));
        }
        let stopwords = match spec.mode {
            PipelineMode::Raw => None,
            _ => Some(spec.stopwords.load(WordListKind::Stopwords)?),
        };
        Ok(Pipeline {
            mode: spec.mode,
            lowercase: spec.lowercase,
            stopwords,
        })
    }

    pub fn with_stopwords(mode: PipelineMode, stopwords: WordSet) -> Pipeline {
        Pipeline {
            mode,
            lowercase: true,
            stopwords: Some(stopwords),
        }
    }

    pub fn mode(&self) -> PipelineMode {
        self.mode
    }

    pub fn apply(&self, stream: &TokenStream) -> TokenStream {
        let mut tokens = Vec::with_capacity(stream.tokens.len());
        for token in &stream.tokens {
            let mut token = token.clone();
            if matches!(token.kind, TokenKind::Word | TokenKind::Hashtag) && !self.lowercase {
                token.normalized = token.surface.clone();
            }
            if token.kind == TokenKind::Word {
                if let Some(stop) = &self.stopwords {
                    if stop.contains(&token.normalized.to_lowercase()) {
                        continue;
                    }
                }
                if self.mode == PipelineMode::Lemmatized {
                    token.normalized = stem(&token.normalized);
                }
            }
            tokens.push(token);
        }
        TokenStream {
            tokens,
            source_doc_id: stream.source_doc_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisspellStats {
    pub count: usize,
    pub ratio: f64,
}

/// WORD tokens whose lowercased form is absent from `lexicon`.
pub fn misspell_count(stream: &TokenStream, lexicon: &WordSet) -> Result<MisspellStats, TextError> {
    if lexicon.is_empty() {
        return Err(TextError::EmptyLexicon);
    }
    let words: Vec<&Token> = stream
        .tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Word)
        .collect();
    let count = words
        .iter()
        .filter(|t| !lexicon.contains(&t.normalized.to_lowercase()))
        .count();
    Ok(MisspellStats {
        count,
        ratio: count as f64 / words.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normalized(stream: &TokenStream) -> Vec<&str> {
        stream.normalized().collect()
    }

    #[test]
    fn raw_is_identity() {
        let s = tokenize("The Sky is BLUE @x :)");
        let p = Pipeline::from_spec(&PipelineSpec::default()).unwrap();
        assert_eq!(p.apply(&s), s);
    }

    #[test]
    fn raw_without_lowercase_restores_case() {
        let s = tokenize("The #Sky");
        let p = Pipeline::from_spec(&PipelineSpec {
            lowercase: false,
            ..PipelineSpec::default()
        })
        .unwrap();
        assert_eq!(normalized(&p.apply(&s)), vec!["The", "#Sky"]);
    }

    #[test]
    fn stopword_filtering() {
        let p = Pipeline::with_stopwords(PipelineMode::StopwordFiltered, ["the", "is"].into_iter().collect());
        let out = p.apply(&tokenize("the sky is blue"));
        assert_eq!(normalized(&out), vec!["sky", "blue"]);
        assert!(out.tokens.iter().all(|t| t.kind == TokenKind::Word));
    }

    #[test]
    fn lemmatized_stems_words() {
        let p = Pipeline::with_stopwords(PipelineMode::Lemmatized, WordSet::builtin_stopwords());
        assert_eq!(normalized(&p.apply(&tokenize("running runs ran"))), vec!["run", "run", "ran"]);
    }

    #[test]
    fn lemmatized_requires_lowercase() {
        let spec = PipelineSpec {
            mode: PipelineMode::Lemmatized,
            lowercase: false,
            ..PipelineSpec::default()
        };
        assert!(matches!(Pipeline::from_spec(&spec), Err(TextError::InvalidPipeline(_))));
    }

    #[test]
    fn missing_stopword_file() {
        let spec = PipelineSpec {
            mode: PipelineMode::StopwordFiltered,
            stopwords: WordListSource::File("/no/such/file.txt".into()),
            lowercase: true,
        };
        assert!(matches!(Pipeline::from_spec(&spec), Err(TextError::MissingStopwordList(_))));
    }

    #[test]
    fn misspell_examples() {
        let lex: WordSet = ["check", "this"].into_iter().collect();
        let stats = misspell_count(&tokenize("chek this"), &lex).unwrap();
        assert_eq!(stats.count, 1);
        assert_eq!(stats.ratio, 0.5);
        let stats = misspell_count(&tokenize("check THIS"), &lex).unwrap();
        assert_eq!((stats.count, stats.ratio), (0, 0.0));
        let stats = misspell_count(&tokenize("@a :) 12"), &lex).unwrap();
        assert_eq!((stats.count, stats.ratio), (0, 0.0));
        assert!(matches!(misspell_count(&tokenize("x"), &WordSet::default()), Err(TextError::EmptyLexicon)));
    }

    proptest! {
        #[test]
        fn pipelines_never_add_tokens_and_keep_special_tokens(text in "[a-zA-Z @#:)(.0-9/]{0,60}") {
            let stream = tokenize(&text);
            let special = |s: &TokenStream| -> Vec<Token> {
                s.tokens.iter().filter(|t| matches!(t.kind, TokenKind::Mention | TokenKind::Url | TokenKind::Emoticon)).cloned().collect()
            };
            for mode in [PipelineMode::Raw, PipelineMode::StopwordFiltered, PipelineMode::Lemmatized] {
                let p = Pipeline::from_spec(&PipelineSpec { mode, ..PipelineSpec::default() }).unwrap();
                let out = p.apply(&stream);
                prop_assert!(out.len() <= stream.len());
                if mode == PipelineMode::Raw {
                    prop_assert_eq!(out.len(), stream.len());
                }
                prop_assert_eq!(special(&out), special(&stream));
            }
        }

        #[test]
        fn misspell_ratio_in_unit_interval(text in "[a-z ]{0,60}") {
            let stats = misspell_count(&tokenize(&text), &WordSet::builtin_lexicon()).unwrap();
            prop_assert!((0.0..=1.0).contains(&stats.ratio));
        }
    }
}
