//! Turn retellings (or raw passages) into filtered bag-of-words documents.
//!
//! Vocabulary filters follow the retelling preprocessing rules: drop words
//! shorter than 3 characters, words used by more than 25% of documents, and
//! words used by fewer than 5 documents.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MIN_CHARS: usize = 3;
pub const DEFAULT_MAX_DF_FRAC: f64 = 0.25;
pub const DEFAULT_MIN_DF_DOCS: usize = 5;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no documents to build a vocabulary from")]
    NoDocuments,
    #[error("vocabulary is empty after filtering (corpus too small or homogeneous)")]
    EmptyVocabulary,
}

/// Lowercase and emit maximal runs of Unicode letters, keeping interior
/// apostrophes so contractions like "don't" survive as single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            current.push(c);
        } else if (c == '\'' || c == '\u{2019}')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
        {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Per-book sets of lowercase character-name tokens, supplied externally.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Gazetteer {
    pub books: BTreeMap<String, BTreeSet<String>>,
}

impl Gazetteer {
    pub fn insert(&mut self, book_id: &str, names: impl IntoIterator<Item = String>) {
        self.books
            .entry(book_id.to_string())
            .or_default()
            .extend(names.into_iter().map(|n| n.to_lowercase()));
    }
}

/// Drop tokens listed in the book's gazetteer entry. A missing book entry
/// returns the tokens unchanged with a warning on stderr.
pub fn remove_names(tokens: Vec<String>, gazetteer: &Gazetteer, book_id: &str) -> Vec<String> {
    match gazetteer.books.get(book_id) {
        Some(names) => tokens.into_iter().filter(|t| !names.contains(t)).collect(),
        None => {
            eprintln!("warning: no gazetteer entry for book {book_id}; names not removed");
            tokens
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Terms indexed by id; ids are dense in `[0, len)`.
    pub terms: Vec<String>,
    /// Document frequency per term id.
    pub df: Vec<usize>,
    pub doc_count: usize,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn id_of(&self, term: &str) -> Option<usize> {
        if self.index.is_empty() && !self.terms.is_empty() {
            // Deserialized without index; fall back to linear scan.
            return self.terms.iter().position(|t| t == term);
        }
        self.index.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}

/// Keep a term iff its character length is at least `min_chars` and its
/// document frequency lies in `[min_df_docs, floor(max_df_frac * N)]`.
/// Ids are assigned by descending document frequency, then lexicographic.
pub fn build_vocabulary(
    docs: &[Vec<String>],
    min_chars: usize,
    max_df_frac: f64,
    min_df_docs: usize,
) -> Result<Vocabulary, PreprocessError> {
    if docs.is_empty() {
        return Err(PreprocessError::NoDocuments);
    }
    let n = docs.len();
    let max_df = (max_df_frac * n as f64).floor() as usize;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let uniq: BTreeSet<&str> = doc.iter().map(|t| t.as_str()).collect();
        for term in uniq {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df
        .into_iter()
        .filter(|(term, d)| term.chars().count() >= min_chars && *d >= min_df_docs && *d <= max_df)
        .collect();
    if kept.is_empty() {
        return Err(PreprocessError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocabulary {
        terms: kept.iter().map(|(t, _)| t.to_string()).collect(),
        df: kept.iter().map(|(_, d)| *d).collect(),
        doc_count: n,
        index: BTreeMap::new(),
    };
    vocab.rebuild_index();
    Ok(vocab)
}

/// Sparse bag-of-words document; counts are strictly positive and keyed by
/// vocabulary term id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BowDoc {
    pub doc_id: String,
    pub counts: BTreeMap<usize, u32>,
}

impl BowDoc {
    pub fn total_tokens(&self) -> u32 {
        self.counts.values().sum()
    }
}

/// Count in-vocabulary tokens; out-of-vocabulary tokens are dropped.
pub fn to_bow(doc_id: &str, tokens: &[String], vocab: &Vocabulary) -> BowDoc {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for token in tokens {
        if let Some(id) = vocab.id_of(token) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    BowDoc {
        doc_id: doc_id.to_string(),
        counts,
    }
}
