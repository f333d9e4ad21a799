//! Two-stage direct-labeling baseline: a topic pool accumulated one prompt
//! per sampled document, then ranked topic assignment for every document.
//!
//! Prompt templates live as text assets next to the crate so they can be
//! inspected and diffed; `{Topics}` and `{Document}` are the only slots.
//! Output parsing is deliberately lenient: lines that do not look like
//! `Label: description` are ignored, and assignment labels not present in
//! the pool are dropped rather than reprompted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{submit_with_retry, ChatClient, PromptRequest, RetryPolicy};
use crate::retell::{RETELL_MAX_NEW_TOKENS, SYSTEM_PROMPT};

pub const GENERATION_SINGLE_TEMPLATE: &str =
    include_str!("../assets/topicgpt_generation_single.txt");
pub const GENERATION_MULTI_TEMPLATE: &str =
    include_str!("../assets/topicgpt_generation_multi.txt");
pub const ASSIGNMENT_TEMPLATE: &str = include_str!("../assets/topicgpt_assignment.txt");

/// Default generation sample size.
pub const DEFAULT_SAMPLE_N: usize = 1000;

#[derive(Debug, Error)]
pub enum TopicGptError {
    #[error("topic pool is empty")]
    EmptyPool,
    #[error("no assignments given")]
    NoAssignments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    Single,
    Multi,
}

#[derive(Debug, Clone)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicEntry {
    pub label: String,
    pub description: String,
    /// Document whose generation response introduced this topic.
    pub origin_doc: Option<String>,
}

/// Ordered topic label set; labels are unique after trimming and case
/// folding, with the first-seen casing stored.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TopicPool {
    pub entries: Vec<TopicEntry>,
}

impl TopicPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical (stored) label for a case-insensitive lookup.
    pub fn canonical_label(&self, label: &str) -> Option<&str> {
        let key = label.trim().to_lowercase();
        self.entries
            .iter()
            .find(|e| e.label.to_lowercase() == key)
            .map(|e| e.label.as_str())
    }

    /// Append if no entry matches case-insensitively; reports whether the
    /// pool grew.
    pub fn add(&mut self, label: &str, description: &str, origin_doc: Option<&str>) -> bool {
        let label = label.trim();
        if label.is_empty() || self.canonical_label(label).is_some() {
            return false;
        }
        self.entries.push(TopicEntry {
            label: label.to_string(),
            description: description.trim().to_string(),
            origin_doc: origin_doc.map(|s| s.to_string()),
        });
        true
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    /// Pool rendering used inside prompts: one `Label: Description` line per
    /// entry, in insertion order.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}: {}", e.label, e.description))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub doc_id: String,
    /// Pool labels, most prominent first, no duplicates.
    pub ranked_labels: Vec<String>,
}

/// Lenient line parser for topic responses. Accepts `label: description`
/// lines with non-empty halves, strips bullet and numbering prefixes, skips
/// bare "None" lines and anything else that does not conform.
pub fn parse_topic_lines(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let mut line = raw.trim();
        // Numbering: "1." / "2)" prefixes.
        if let Some(rest) = line
            .find(|c: char| !c.is_ascii_digit())
            .filter(|&i| i > 0 && (line.as_bytes()[i] == b'.' || line.as_bytes()[i] == b')'))
            .map(|i| line[i + 1..].trim_start())
        {
            line = rest;
        }
        line = line
            .trim_start_matches(['-', '*', '\u{2022}'])
            .trim_start();
        if line.eq_ignore_ascii_case("none") {
            continue;
        }
        let Some((label, description)) = line.split_once(':') else {
            continue;
        };
        let label = label.trim();
        let description = description.trim();
        if label.is_empty() || description.is_empty() {
            continue;
        }
        out.push((label.to_string(), description.to_string()));
    }
    out
}

fn render_prompt(template: &str, pool: &TopicPool, doc_text: &str) -> String {
    template
        .replace("{Topics}", &pool.render())
        .replace("{Document}", doc_text)
}

pub fn generation_prompt(mode: GenerationMode, pool: &TopicPool, doc_text: &str) -> String {
    let template = match mode {
        GenerationMode::Single => GENERATION_SINGLE_TEMPLATE,
        GenerationMode::Multi => GENERATION_MULTI_TEMPLATE,
    };
    render_prompt(template, pool, doc_text)
}

pub fn assignment_prompt(pool: &TopicPool, doc_text: &str) -> String {
    render_prompt(ASSIGNMENT_TEMPLATE, pool, doc_text)
}

fn request_for(user_text: String, model_id: &str) -> PromptRequest {
    PromptRequest {
        system_text: SYSTEM_PROMPT.to_string(),
        user_text,
        max_new_tokens: RETELL_MAX_NEW_TOKENS,
        model_id: model_id.to_string(),
    }
}

/// Accumulate the topic pool over sampled documents, strictly in order since
/// each prompt embeds the pool so far. In single mode only the first parsed
/// line of each response is considered. Per-document client failures skip
/// the document with a warning.
pub fn generate_topics(
    sample: &[Document],
    client: &dyn ChatClient,
    mode: GenerationMode,
    model_id: &str,
    retry: RetryPolicy,
) -> TopicPool {
    let mut pool = TopicPool::default();
    for doc in sample {
        let request = request_for(generation_prompt(mode, &pool, &doc.text), model_id);
        let (result, _) = submit_with_retry(client, &request, &doc.doc_id, retry);
        let response = match result {
            Ok(text) => text,
            Err(e) => {
                eprintln!("warning: generation failed for {}: {e}", doc.doc_id);
                continue;
            }
        };
        let mut parsed = parse_topic_lines(&response);
        if mode == GenerationMode::Single {
            parsed.truncate(1);
        }
        for (label, description) in parsed {
            pool.add(&label, &description, Some(&doc.doc_id));
        }
    }
    pool
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AssignDiagnostics {
    /// Parsed labels dropped because they were not in the pool.
    pub hallucinated_count: usize,
    /// Assignments whose surviving label list was empty.
    pub empty_count: usize,
}

/// Assign pool topics to one document. Labels absent from the pool and
/// duplicates are dropped; response order is kept as rank. An empty
/// surviving list is a valid (diagnosed) outcome, not an error.
pub fn assign_topics(
    doc: &Document,
    pool: &TopicPool,
    client: &dyn ChatClient,
    model_id: &str,
    retry: RetryPolicy,
    diagnostics: &mut AssignDiagnostics,
) -> Result<TopicAssignment, TopicGptError> {
    if pool.is_empty() {
        return Err(TopicGptError::EmptyPool);
    }
    let request = request_for(assignment_prompt(pool, &doc.text), model_id);
    let (result, _) = submit_with_retry(client, &request, &doc.doc_id, retry);
    let response = match result {
        Ok(text) => text,
        Err(e) => {
            eprintln!("warning: assignment failed for {}: {e}", doc.doc_id);
            String::new()
        }
    };
    let mut ranked = Vec::new();
    for (label, _) in parse_topic_lines(&response) {
        match pool.canonical_label(&label) {
            Some(canonical) => {
                if !ranked.iter().any(|l: &String| l == canonical) {
                    ranked.push(canonical.to_string());
                }
            }
            None => diagnostics.hallucinated_count += 1,
        }
    }
    if ranked.is_empty() {
        diagnostics.empty_count += 1;
    }
    Ok(TopicAssignment {
        doc_id: doc.doc_id.clone(),
        ranked_labels: ranked,
    })
}

/// Mean reciprocal rank per pool label over all assignments, sorted
/// descending (ties by label). Unassigned labels contribute 0 for that
/// passage; ranks are 1-based.
pub fn mrr_prominence(
    assignments: &[TopicAssignment],
    pool: &TopicPool,
) -> Result<Vec<(String, f64)>, TopicGptError> {
    if assignments.is_empty() {
        return Err(TopicGptError::NoAssignments);
    }
    let n = assignments.len() as f64;
    let mut out: Vec<(String, f64)> = pool
        .entries
        .iter()
        .map(|entry| {
            let sum: f64 = assignments
                .iter()
                .map(|a| {
                    a.ranked_labels
                        .iter()
                        .position(|l| l == &entry.label)
                        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
                })
                .sum();
            (entry.label.clone(), sum / n)
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Number of unique labels appearing in at least one assignment; this is the
/// effective k of the direct-labeling baseline.
pub fn assigned_k(assignments: &[TopicAssignment]) -> usize {
    let mut labels = std::collections::BTreeSet::new();
    for a in assignments {
        for l in &a.ranked_labels {
            labels.insert(l.as_str());
        }
    }
    labels.len()
}
