//! Latent Dirichlet allocation trained by collapsed Gibbs sampling.
//!
//! One chain is strictly sequential; determinism comes from a seeded
//! ChaCha8 generator, so the same corpus, config, and seed reproduce the
//! model bit-identically across platforms. Point estimates use the final
//! sweep's counts. Hyperparameter defaults mirror Mallet's (alphaSum 5.0
//! split over k, beta 0.01, no hyperparameter optimization).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::BowDoc;

pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_ITERATIONS: u32 = 1000;
pub const MALLET_ALPHA_SUM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("no distributions given")]
    NoDistributions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric per-topic document prior.
    pub alpha: f64,
    /// Symmetric per-term topic prior.
    pub beta: f64,
    pub iterations: u32,
    pub burn_in: u32,
    pub seed: u64,
}

impl LdaConfig {
    pub fn with_defaults(k: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            k,
            alpha: MALLET_ALPHA_SUM / k as f64,
            beta: DEFAULT_BETA,
            iterations: DEFAULT_ITERATIONS,
            burn_in: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LdaError> {
        if self.k < 2 {
            return Err(LdaError::InvalidConfig("k must be >= 2".into()));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(LdaError::InvalidConfig("alpha and beta must be > 0".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(LdaError::InvalidConfig(
                "iterations must exceed burn_in".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    /// Vocabulary terms indexed by term id.
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
    /// Document x topic counts.
    pub n_dk: Vec<Vec<u32>>,
    /// Topic x term counts.
    pub n_kw: Vec<Vec<u32>>,
    /// Per-topic token totals.
    pub n_k: Vec<u32>,
    /// Per-token topic assignments, one vector per document.
    pub z: Vec<Vec<u32>>,
    /// Document lengths (token totals).
    pub doc_len: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocTopicDist {
    pub doc_id: String,
    pub probs: Vec<f64>,
}

impl DocTopicDist {
    /// Topic indices ordered by probability descending, ties by lower index.
    pub fn ranked_topics(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap()
                .then_with(|| a.cmp(&b))
        });
        order
    }

    pub fn top_topic(&self) -> usize {
        self.ranked_topics()[0]
    }
}

/// Expand sparse counts into an explicit token list (term ids in ascending
/// order, repeated by count).
fn expand_tokens(doc: &BowDoc) -> Vec<usize> {
    let mut tokens = Vec::with_capacity(doc.total_tokens() as usize);
    for (&term, &count) in &doc.counts {
        for _ in 0..count {
            tokens.push(term);
        }
    }
    tokens
}

/// Train by collapsed Gibbs sampling: initialize assignments uniformly at
/// random from the seed, then run `iterations` full sweeps where each token
/// resamples its topic proportional to
/// `(n_dk + alpha) * (n_kw + beta) / (n_k + V*beta)` with the token's own
/// assignment excluded from the counts.
pub fn train(corpus: &[BowDoc], vocab: Vec<String>, config: &LdaConfig) -> Result<LdaModel, LdaError> {
    train_observed(corpus, vocab, config, |_, _, _, _| {})
}

/// Like [`train`], but calls `on_sweep(sweep, n_dk, n_kw, n_k)` after each full
/// Gibbs sweep so callers can audit the count tables mid-run.
pub fn train_observed(
    corpus: &[BowDoc],
    vocab: Vec<String>,
    config: &LdaConfig,
    mut on_sweep: impl FnMut(u32, &[Vec<u32>], &[Vec<u32>], &[u32]),
) -> Result<LdaModel, LdaError> {
    config.validate()?;
    let v = vocab.len();
    let tokens: Vec<Vec<usize>> = corpus.iter().map(expand_tokens).collect();
    if tokens.iter().all(|t| t.is_empty()) {
        return Err(LdaError::EmptyCorpus);
    }
    if v < config.k {
        eprintln!(
            "warning: vocabulary size {v} is smaller than k = {}",
            config.k
        );
    }

    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut n_dk = vec![vec![0u32; k]; corpus.len()];
    let mut n_kw = vec![vec![0u32; v]; k];
    let mut n_k = vec![0u32; k];
    let mut z: Vec<Vec<u32>> = Vec::with_capacity(corpus.len());

    for (d, doc_tokens) in tokens.iter().enumerate() {
        let mut zd = Vec::with_capacity(doc_tokens.len());
        for &w in doc_tokens {
            let t = rng.gen_range(0..k);
            zd.push(t as u32);
            n_dk[d][t] += 1;
            n_kw[t][w] += 1;
            n_k[t] += 1;
        }
        z.push(zd);
    }

    let vbeta = v as f64 * config.beta;
    let mut weights = vec![0.0f64; k];
    for sweep in 0..config.iterations {
        for (d, doc_tokens) in tokens.iter().enumerate() {
            for (pos, &w) in doc_tokens.iter().enumerate() {
                let old = z[d][pos] as usize;
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let weight = (n_dk[d][t] as f64 + config.alpha)
                        * (n_kw[t][w] as f64 + config.beta)
                        / (n_k[t] as f64 + vbeta);
                    total += weight;
                    weights[t] = total;
                }
                let draw = rng.gen::<f64>() * total;
                let new = weights.partition_point(|&cum| cum <= draw).min(k - 1);

                z[d][pos] = new as u32;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
        on_sweep(sweep, &n_dk, &n_kw, &n_k);
    }

    Ok(LdaModel {
        config: config.clone(),
        vocab,
        doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
        doc_len: tokens.iter().map(|t| t.len() as u32).collect(),
        n_dk,
        n_kw,
        n_k,
        z,
    })
}

/// Smoothed document-topic distribution:
/// `probs[t] = (n_dk[d][t] + alpha) / (len_d + k*alpha)`. An empty document
/// yields the uniform all-prior distribution.
pub fn doc_topic_distribution(model: &LdaModel, doc_index: usize) -> DocTopicDist {
    let k = model.config.k;
    let alpha = model.config.alpha;
    let len = model.doc_len[doc_index] as f64;
    let denom = len + k as f64 * alpha;
    let probs = (0..k)
        .map(|t| (model.n_dk[doc_index][t] as f64 + alpha) / denom)
        .collect();
    DocTopicDist {
        doc_id: model.doc_ids[doc_index].clone(),
        probs,
    }
}

/// Top `n` terms for a topic by smoothed count, ties broken lexicographically.
/// Asking for more terms than the vocabulary holds returns the whole vocabulary.
pub fn topic_top_words(model: &LdaModel, topic: usize, n: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..model.vocab.len()).collect();
    order.sort_by(|&a, &b| {
        model.n_kw[topic][b]
            .cmp(&model.n_kw[topic][a])
            .then_with(|| model.vocab[a].cmp(&model.vocab[b]))
    });
    order
        .into_iter()
        .take(n)
        .map(|w| model.vocab[w].clone())
        .collect()
}

/// The topic with the highest mean probability over the given passages, with
/// its mean. Ties break toward the lower topic index.
pub fn most_prominent_topic(dists: &[DocTopicDist]) -> Result<(usize, f64), LdaError> {
    if dists.is_empty() {
        return Err(LdaError::NoDistributions);
    }
    let k = dists[0].probs.len();
    let mut best = (0usize, f64::NEG_INFINITY);
    for t in 0..k {
        let mean = dists.iter().map(|d| d.probs[t]).sum::<f64>() / dists.len() as f64;
        if mean > best.1 {
            best = (t, mean);
        }
    }
    Ok(best)
}

/// Check the three count conservation identities; used after sweeps in tests.
pub fn counts_consistent(model: &LdaModel) -> bool {
    let k = model.config.k;
    for (d, row) in model.n_dk.iter().enumerate() {
        if row.iter().sum::<u32>() != model.doc_len[d] {
            return false;
        }
    }
    for t in 0..k {
        let col: u32 = model.n_dk.iter().map(|row| row[t]).sum();
        let row: u32 = model.n_kw[t].iter().sum();
        if col != model.n_k[t] || row != model.n_k[t] {
            return false;
        }
    }
    true
}
