//! Book ingestion, passage chunking, quote-to-passage matching, and keyword
//! list machinery.
//!
//! A passage is a run of whole paragraphs from one book totaling at most
//! `max_tokens` whitespace tokens. Paragraph boundaries are never split; a
//! single oversized paragraph becomes its own passage.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_TOKENS: usize = 250;
pub const DEFAULT_QUOTE_THRESHOLD: f64 = 90.0;
pub const DEFAULT_NPMI_THRESHOLD: f64 = 0.15;
pub const DEFAULT_NPMI_MIN_DF: usize = 5;

/// Fractional length slack when sliding quote windows over passage text.
const QUOTE_LENGTH_SLACK: f64 = 0.20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("book {0} has no paragraphs")]
    EmptyBook(String),
    #[error("seed set is empty")]
    NoSeeds,
    #[error("passage {0} not found")]
    UnknownPassage(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Book {
    pub book_id: String,
    pub title: String,
    pub paragraphs: Vec<String>,
}

impl Book {
    /// Parse plain text with blank-line paragraph separation.
    pub fn from_text(book_id: impl Into<String>, title: impl Into<String>, text: &str) -> Book {
        let paragraphs = text
            .split("\n\n")
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| p.to_string())
            .collect();
        Book {
            book_id: book_id.into(),
            title: title.into(),
            paragraphs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub book_id: String,
    /// Half-open `[start, end)` indices into `Book::paragraphs`.
    pub paragraph_range: (usize, usize),
    pub text: String,
    pub token_count: usize,
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

fn make_passage(book: &Book, start: usize, end: usize) -> Passage {
    let text = book.paragraphs[start..end].join("\n\n");
    let token_count = count_tokens(&text);
    Passage {
        passage_id: format!("{}:{:05}", book.book_id, start),
        book_id: book.book_id.clone(),
        paragraph_range: (start, end),
        text,
        token_count,
    }
}

/// Greedy left-to-right packing of whole paragraphs into passages of at most
/// `max_tokens` whitespace tokens. A single paragraph longer than the budget
/// is kept whole as its own passage. An empty book yields an empty list.
pub fn chunk_passages(book: &Book, max_tokens: usize) -> Vec<Passage> {
    let mut passages = Vec::new();
    let mut start = 0;
    let mut running = 0usize;
    for (i, para) in book.paragraphs.iter().enumerate() {
        let n = count_tokens(para);
        if i > start && running + n > max_tokens {
            passages.push(make_passage(book, start, i));
            start = i;
            running = 0;
        }
        running += n;
    }
    if start < book.paragraphs.len() {
        passages.push(make_passage(book, start, book.paragraphs.len()));
    }
    passages
}

/// Length of the longest common subsequence of two char slices, two-row DP.
fn lcs_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized indel similarity on a 0-100 scale: `100 * (1 - D / (|a|+|b|))`
/// where `D = |a| + |b| - 2*LCS(a, b)` is the insertion/deletion edit
/// distance over characters. Both strings empty yields 100.
pub fn normalized_indel_similarity(a: &str, b: &str) -> f64 {
    let ca: Vec<char> = a.chars().collect();
    let cb: Vec<char> = b.chars().collect();
    similarity_chars(&ca, &cb)
}

fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 100.0;
    }
    let d = total - 2 * lcs_len(a, b);
    100.0 * (1.0 - d as f64 / total as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuoteMatch {
    pub quote: String,
    pub passage_id: String,
    pub similarity: f64,
    /// Char offsets of the matched window within the passage text.
    pub matched_span: (usize, usize),
}

/// Char offsets of token starts within `chars`, plus the end-of-token offsets.
fn token_boundaries(chars: &[char]) -> (Vec<usize>, Vec<usize>) {
    let mut starts = Vec::new();
    let mut ends = Vec::new();
    let mut in_token = false;
    for (i, c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            if in_token {
                ends.push(i);
                in_token = false;
            }
        } else if !in_token {
            starts.push(i);
            in_token = true;
        }
    }
    if in_token {
        ends.push(chars.len());
    }
    (starts, ends)
}

/// Slide a token-aligned character window of roughly the quote's length
/// (within ±20%) over every passage, returning the highest-similarity window
/// that meets `threshold`. Ties break toward the earliest book position.
pub fn match_quote(quote: &str, passages: &[Passage], threshold: f64) -> Option<QuoteMatch> {
    let q: Vec<char> = quote.chars().collect();
    if q.is_empty() {
        return None;
    }
    let min_len = ((q.len() as f64) * (1.0 - QUOTE_LENGTH_SLACK)).floor() as usize;
    let max_len = ((q.len() as f64) * (1.0 + QUOTE_LENGTH_SLACK)).ceil() as usize;
    let mut best: Option<QuoteMatch> = None;

    for passage in passages {
        let chars: Vec<char> = passage.text.chars().collect();
        let (starts, ends) = token_boundaries(&chars);
        for &s in &starts {
            for &e in &ends {
                if e <= s {
                    continue;
                }
                let len = e - s;
                if len < min_len || len > max_len {
                    continue;
                }
                // Length difference alone bounds similarity from above.
                let diff = len.abs_diff(q.len());
                let cap = 100.0 * (1.0 - diff as f64 / (len + q.len()) as f64);
                let floor = best.as_ref().map_or(threshold, |b| b.similarity.max(threshold));
                if cap < floor {
                    continue;
                }
                let sim = similarity_chars(&q, &chars[s..e]);
                if sim < threshold {
                    continue;
                }
                if best.as_ref().map_or(true, |b| sim > b.similarity) {
                    best = Some(QuoteMatch {
                        quote: quote.to_string(),
                        passage_id: passage.passage_id.clone(),
                        similarity: sim,
                        matched_span: (s, e),
                    });
                }
            }
        }
    }
    best
}

/// Paragraph index within the book containing the matched span's start.
fn paragraph_of_offset(book: &Book, passage: &Passage, char_offset: usize) -> usize {
    let (start, end) = passage.paragraph_range;
    let mut pos = 0usize;
    for idx in start..end {
        let len = book.paragraphs[idx].chars().count();
        if char_offset < pos + len {
            return idx;
        }
        pos += len + 2; // "\n\n" separator
    }
    end.saturating_sub(1)
}

/// The passage ending at the quote's paragraph, extended backward whole
/// paragraphs at a time while the total stays within `max_tokens`.
pub fn passage_context_for_quote(
    m: &QuoteMatch,
    book: &Book,
    passages: &[Passage],
    max_tokens: usize,
) -> Result<Passage, CorpusError> {
    let passage = passages
        .iter()
        .find(|p| p.passage_id == m.passage_id)
        .ok_or_else(|| CorpusError::UnknownPassage(m.passage_id.clone()))?;
    let quote_para = paragraph_of_offset(book, passage, m.matched_span.0);
    let end = quote_para + 1;
    let mut start = quote_para;
    let mut total = count_tokens(&book.paragraphs[quote_para]);
    while start > 0 {
        let n = count_tokens(&book.paragraphs[start - 1]);
        if total + n > max_tokens {
            break;
        }
        start -= 1;
        total += n;
    }
    Ok(make_passage(book, start, end))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermSource {
    Seed,
    NpmiExpanded,
    External,
}

/// Lowercase keyword terms and phrases, each tagged with its provenance.
/// Phrases are stored as token sequences.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KeywordList {
    terms: BTreeMap<Vec<String>, TermSource>,
}

impl KeywordList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: &str, source: TermSource) {
        let tokens: Vec<String> = term
            .split_whitespace()
            .map(|t| t.to_lowercase())
            .collect();
        if !tokens.is_empty() {
            self.terms.entry(tokens).or_insert(source);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<String>, TermSource)> {
        self.terms.iter().map(|(t, &s)| (t, s))
    }
}

/// Whitespace tokens with edge punctuation stripped and lowercased, for
/// whole-token keyword matching.
pub fn match_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn contains_sequence(tokens: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > tokens.len() {
        return false;
    }
    tokens.windows(needle.len()).any(|w| w == needle)
}

/// Passages containing at least one keyword as a whole-token (or
/// whole-token-sequence) match after lowercasing.
pub fn keyword_filter(passages: &[Passage], keywords: &KeywordList) -> Vec<Passage> {
    passages
        .iter()
        .filter(|p| {
            let tokens = match_tokens(&p.text);
            keywords.iter().any(|(kw, _)| contains_sequence(&tokens, kw))
        })
        .cloned()
        .collect()
}

/// Expand a seed list by NPMI co-occurrence within passages, which act as the
/// co-occurrence windows. Candidates are vocabulary terms with document
/// frequency >= `min_df` that are not seeds themselves; a candidate is kept
/// when its max-over-seeds NPMI meets `threshold`. Terms never co-occurring
/// with any seed are excluded. Results sorted by NPMI descending, then term.
pub fn expand_keywords_npmi(
    passages: &[Passage],
    seeds: &BTreeSet<String>,
    threshold: f64,
    min_df: usize,
) -> Result<Vec<(String, f64)>, CorpusError> {
    if seeds.is_empty() {
        return Err(CorpusError::NoSeeds);
    }
    let windows: Vec<BTreeSet<String>> = passages
        .iter()
        .map(|p| match_tokens(&p.text).into_iter().collect())
        .collect();
    let n = windows.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for w in &windows {
        for term in w {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for (&term, &term_df) in &df {
        if term_df < min_df || seeds.contains(term) {
            continue;
        }
        let mut best: Option<f64> = None;
        for seed in seeds {
            let Some(&seed_df) = df.get(seed.as_str()) else {
                continue;
            };
            let joint = windows
                .iter()
                .filter(|w| w.contains(term) && w.contains(seed))
                .count();
            if joint == 0 {
                continue;
            }
            let p_joint = joint as f64 / n as f64;
            let npmi = if joint == n {
                // Perfect dependence limit: -ln p(w,s) = 0.
                1.0
            } else {
                let p_term = term_df as f64 / n as f64;
                let p_seed = seed_df as f64 / n as f64;
                (p_joint / (p_term * p_seed)).ln() / -p_joint.ln()
            };
            if best.map_or(true, |b| npmi > b) {
                best = Some(npmi);
            }
        }
        if let Some(score) = best {
            if score >= threshold {
                out.push((term.to_string(), score));
            }
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
