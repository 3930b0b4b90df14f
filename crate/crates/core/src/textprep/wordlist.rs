use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TextError;

const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");
const LEXICON_EN: &str = include_str!("../../data/lexicon_en.txt");

/// Non-empty, trimmed lines that are not `#` comments.
pub(crate) fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// A set of lowercase words (stop words, misspelling lexicon).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSet(HashSet<String>);

impl WordSet {
    pub fn parse(text: &str) -> WordSet {
        WordSet(parse_lines(text).into_iter().map(|w| w.to_lowercase()).collect())
    }

    pub fn load(path: &Path) -> std::io::Result<WordSet> {
        Ok(WordSet::parse(&std::fs::read_to_string(path)?))
    }

    pub fn builtin_stopwords() -> WordSet {
        WordSet::parse(STOPWORDS_EN)
    }

    pub fn builtin_lexicon() -> WordSet {
        WordSet::parse(LEXICON_EN)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for WordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        WordSet(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Where a word list comes from: `builtin:<id>` or a file path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WordListSource {
    Builtin(String),
    File(PathBuf),
}

impl WordListSource {
    pub fn builtin_en() -> Self {
        WordListSource::Builtin("en".into())
    }

    /// Loads the list. `kind` picks which builtin table `builtin:en` refers to.
    pub fn load(&self, kind: WordListKind) -> Result<WordSet, TextError> {
        match self {
            WordListSource::Builtin(id) if id == "en" => Ok(match kind {
                WordListKind::Stopwords => WordSet::builtin_stopwords(),
                WordListKind::Lexicon => WordSet::builtin_lexicon(),
            }),
            WordListSource::Builtin(id) => Err(kind.missing(format!("builtin:{id}"))),
            WordListSource::File(path) => {
                WordSet::load(path).map_err(|_| kind.missing(path.display().to_string()))
            }
        }
    }

    /// Rebases a relative file path onto `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        match self {
            WordListSource::File(p) if p.is_relative() => WordListSource::File(base.join(p)),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordListKind {
    Stopwords,
    Lexicon,
}

impl WordListKind {
    fn missing(self, what: String) -> TextError {
        match self {
            WordListKind::Stopwords => TextError::MissingStopwordList(what),
            WordListKind::Lexicon => TextError::MissingLexicon(what),
        }
    }
}

impl FromStr for WordListSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("builtin:") {
            Some(id) if !id.is_empty() => Ok(WordListSource::Builtin(id.to_string())),
            Some(_) => Err("empty builtin id".into()),
            None if s.is_empty() => Err("empty word list path".into()),
            None => Ok(WordListSource::File(PathBuf::from(s))),
        }
    }
}

impl TryFrom<String> for WordListSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<WordListSource> for String {
    fn from(src: WordListSource) -> String {
        match src {
            WordListSource::Builtin(id) => format!("builtin:{id}"),
            WordListSource::File(p) => p.display().to_string(),
        }
    }
}
