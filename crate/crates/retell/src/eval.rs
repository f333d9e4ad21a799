//! Scoring procedures: pairwise precision/recall over passage pairs,
//! intruder sampling for human-eval bundles, threshold PR curves, and
//! Jensen-Shannon divergence between word distributions.
//!
//! Precision compares coarse gold topics over pairs whose top-1 predictions
//! agree; recall compares top-3 prediction overlap over pairs sharing a fine
//! tag. JSD uses the natural log.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lda::DocTopicDist;
use crate::topicgpt::TopicAssignment;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("fewer than 2 labeled passages with predictions")]
    TooFewPassages,
    #[error("no passage pair has a matching top-1 prediction")]
    NoMatchingPairs,
    #[error("no passage pair shares a gold tag")]
    NoTagSharingPairs,
    #[error("no eligible intruder: {0}")]
    NoEligibleIntruder(&'static str),
    #[error("positives set is empty")]
    NoPositives,
    #[error("distribution does not sum to 1 (sum = {0})")]
    Unnormalized(f64),
    #[error("distributions have different lengths")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldSource {
    Goodreads,
    Litcharts,
    Sparknotes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldEntry {
    pub source: GoldSource,
    /// Coarse recoded topics (the 27-class set).
    pub topics: BTreeSet<String>,
    /// Fine source-specific tags/themes.
    pub tags: BTreeSet<String>,
}

pub type GoldLabels = BTreeMap<String, GoldEntry>;

/// Ranked topic identifiers per passage, most prominent first.
pub type Prediction = BTreeMap<String, Vec<String>>;

/// Pair outcomes behind pairwise precision: one bool per qualifying pair
/// (same top-1), true when the pair shares a gold topic. Exposed so bootstrap
/// resampling can work over pairs.
pub fn pairwise_precision_outcomes(
    preds: &Prediction,
    gold: &GoldLabels,
) -> Result<Vec<bool>, EvalError> {
    let ids: Vec<&String> = preds
        .keys()
        .filter(|id| {
            !preds[*id].is_empty() && gold.get(*id).is_some_and(|g| !g.topics.is_empty())
        })
        .collect();
    if ids.len() < 2 {
        return Err(EvalError::TooFewPassages);
    }
    let mut outcomes = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            if preds[i][0] != preds[j][0] {
                continue;
            }
            let shared = !gold[i].topics.is_disjoint(&gold[j].topics);
            outcomes.push(shared);
        }
    }
    if outcomes.is_empty() {
        return Err(EvalError::NoMatchingPairs);
    }
    Ok(outcomes)
}

/// Fraction of passage pairs with identical top-1 predictions that share at
/// least one gold topic.
pub fn pairwise_precision(preds: &Prediction, gold: &GoldLabels) -> Result<f64, EvalError> {
    let outcomes = pairwise_precision_outcomes(preds, gold)?;
    Ok(fraction_true(&outcomes))
}

/// Pair outcomes behind pairwise recall: one bool per pair sharing a fine
/// tag, true when the passages' top-3 predictions intersect.
pub fn pairwise_recall_outcomes(
    preds: &Prediction,
    gold: &GoldLabels,
) -> Result<Vec<bool>, EvalError> {
    let ids: Vec<&String> = preds
        .keys()
        .filter(|id| !preds[*id].is_empty() && gold.get(*id).is_some_and(|g| !g.tags.is_empty()))
        .collect();
    if ids.len() < 2 {
        return Err(EvalError::TooFewPassages);
    }
    let top3: BTreeMap<&String, BTreeSet<&String>> = ids
        .iter()
        .map(|&id| (id, preds[id].iter().take(3).collect()))
        .collect();
    let mut outcomes = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            if gold[i].tags.is_disjoint(&gold[j].tags) {
                continue;
            }
            let recalled = !top3[i].is_disjoint(&top3[j]);
            outcomes.push(recalled);
        }
    }
    if outcomes.is_empty() {
        return Err(EvalError::NoTagSharingPairs);
    }
    Ok(outcomes)
}

/// Fraction of tag-sharing passage pairs whose top-3 predictions intersect.
/// Passages with fewer than 3 predictions use all they have.
pub fn pairwise_recall(preds: &Prediction, gold: &GoldLabels) -> Result<f64, EvalError> {
    let outcomes = pairwise_recall_outcomes(preds, gold)?;
    Ok(fraction_true(&outcomes))
}

fn fraction_true(outcomes: &[bool]) -> f64 {
    outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len() as f64
}

/// Percentile bootstrap 95% CI of the mean over pair outcomes.
pub fn bootstrap_ci(outcomes: &[bool], resamples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let n = outcomes.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n)
                .filter(|_| outcomes[rng.gen_range(0..n)])
                .count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = means[(resamples as f64 * 0.025) as usize];
    let hi = means[((resamples as f64 * 0.975) as usize).min(resamples - 1)];
    (lo, hi)
}

/// Topics that are the top-ranked prediction of at least one document other
/// than `exclude`.
fn top_ranked_elsewhere_lda(dists: &[DocTopicDist], exclude: usize) -> BTreeSet<usize> {
    dists
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != exclude)
        .map(|(_, d)| d.top_topic())
        .collect()
}

/// Sample an intruder topic for an LDA-style passage: a uniform draw from
/// the passage's bottom half of topics by probability, restricted to topics
/// that are top-ranked for at least one other document. Bottom half is
/// `floor(k/2)` topics by ascending probability with probability-then-index
/// tie-breaking.
pub fn sample_intruder_lda(
    doc_index: usize,
    dists: &[DocTopicDist],
    rng: &mut impl Rng,
) -> Result<usize, EvalError> {
    let dist = &dists[doc_index];
    let k = dist.probs.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        dist.probs[a]
            .partial_cmp(&dist.probs[b])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    let bottom: BTreeSet<usize> = order.into_iter().take(k / 2).collect();
    if bottom.is_empty() {
        return Err(EvalError::NoEligibleIntruder(
            "bottom half of topics is empty",
        ));
    }
    let elsewhere = top_ranked_elsewhere_lda(dists, doc_index);
    let eligible: Vec<usize> = bottom.intersection(&elsewhere).copied().collect();
    if eligible.is_empty() {
        return Err(EvalError::NoEligibleIntruder(
            "no bottom-half topic is top-ranked for another document",
        ));
    }
    Ok(eligible[rng.gen_range(0..eligible.len())])
}

/// Sample an intruder for a direct-labeling passage: a uniform draw from
/// pool topics not assigned to the passage, restricted to labels that are
/// top-ranked for at least one other document.
pub fn sample_intruder_assigned(
    doc_index: usize,
    assignments: &[TopicAssignment],
    pool_labels: &[String],
    rng: &mut impl Rng,
) -> Result<String, EvalError> {
    let assigned: BTreeSet<&String> = assignments[doc_index].ranked_labels.iter().collect();
    let elsewhere: BTreeSet<&String> = assignments
        .iter()
        .enumerate()
        .filter(|(i, a)| *i != doc_index && !a.ranked_labels.is_empty())
        .map(|(_, a)| &a.ranked_labels[0])
        .collect();
    let eligible: Vec<&String> = pool_labels
        .iter()
        .filter(|l| !assigned.contains(l) && elsewhere.contains(l))
        .collect();
    if eligible.is_empty() {
        let reason = if pool_labels.iter().all(|l| assigned.contains(l)) {
            "every pool topic is assigned to the passage"
        } else {
            "no unassigned topic is top-ranked for another document"
        };
        return Err(EvalError::NoEligibleIntruder(reason));
    }
    Ok(eligible[rng.gen_range(0..eligible.len())].clone())
}

/// One human-eval item: the passage's top three topics plus one intruder,
/// shuffled, with the intruder's position recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntruderItem {
    pub passage_id: String,
    pub shown_topics: Vec<String>,
    pub intruder_index: usize,
}

pub fn build_intruder_item(
    passage_id: &str,
    top_topics: [String; 3],
    intruder: String,
    rng: &mut impl Rng,
) -> IntruderItem {
    let mut shown = vec![top_topics[0].clone(), top_topics[1].clone(), top_topics[2].clone(), intruder.clone()];
    // Fisher-Yates.
    for i in (1..shown.len()).rev() {
        let j = rng.gen_range(0..=i);
        shown.swap(i, j);
    }
    let intruder_index = shown.iter().position(|t| t == &intruder).unwrap();
    IntruderItem {
        passage_id: passage_id.to_string(),
        shown_topics: shown,
        intruder_index,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PRPoint {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
}

/// Threshold classifier curve: at each cutoff `c`, a passage is predicted
/// positive when its maximum probability over `target_topics` is at least
/// `c`. Cutoffs with no predicted positives are skipped.
pub fn threshold_pr_curve(
    dists: &[DocTopicDist],
    target_topics: &BTreeSet<usize>,
    positives: &BTreeSet<String>,
    cutoffs: &[f64],
) -> Result<PRCurve, EvalError> {
    if positives.is_empty() {
        return Err(EvalError::NoPositives);
    }
    let mut sorted: Vec<f64> = cutoffs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let scores: Vec<(&str, f64)> = dists
        .iter()
        .map(|d| {
            let score = target_topics
                .iter()
                .filter(|&&t| t < d.probs.len())
                .map(|&t| d.probs[t])
                .fold(f64::NEG_INFINITY, f64::max);
            (d.doc_id.as_str(), score)
        })
        .collect();
    let mut points = Vec::new();
    for &c in &sorted {
        let predicted: BTreeSet<&str> = scores
            .iter()
            .filter(|(_, s)| *s >= c)
            .map(|(id, _)| *id)
            .collect();
        if predicted.is_empty() {
            continue;
        }
        let hits = predicted
            .iter()
            .filter(|id| positives.contains(**id))
            .count();
        points.push(PRPoint {
            cutoff: c,
            precision: hits as f64 / predicted.len() as f64,
            recall: hits as f64 / positives.len() as f64,
        });
    }
    Ok(PRCurve { points })
}

/// Jensen-Shannon divergence under the natural log:
/// `0.5*KL(p||m) + 0.5*KL(q||m)` with `m = (p+q)/2`. Zero-probability terms
/// contribute nothing. Inputs must be same-length distributions over the
/// union vocabulary, each summing to 1 within 1e-9.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, EvalError> {
    if p.len() != q.len() {
        return Err(EvalError::LengthMismatch);
    }
    for dist in [p, q] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&x| x < 0.0) {
            return Err(EvalError::Unnormalized(sum));
        }
    }
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&ai, _)| ai > 0.0)
            .map(|(&ai, &bi)| {
                let m = 0.5 * (ai + bi);
                ai * (ai / m).ln()
            })
            .sum()
    };
    Ok(0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gold(entries: &[(&str, &[&str], &[&str])]) -> GoldLabels {
        entries
            .iter()
            .map(|(id, topics, tags)| {
                (
                    id.to_string(),
                    GoldEntry {
                        source: GoldSource::Goodreads,
                        topics: topics.iter().map(|t| t.to_string()).collect(),
                        tags: tags.iter().map(|t| t.to_string()).collect(),
                    },
                )
            })
            .collect()
    }

    fn preds(entries: &[(&str, &[&str])]) -> Prediction {
        entries
            .iter()
            .map(|(id, ranked)| {
                (
                    id.to_string(),
                    ranked.iter().map(|t| t.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn precision_single_qualifying_pair() {
        let p = preds(&[("1", &["A"]), ("2", &["A"]), ("3", &["B"])]);
        let g = gold(&[
            ("1", &["x"], &["t"]),
            ("2", &["x", "y"], &["t"]),
            ("3", &["y"], &["t"]),
        ]);
        assert_eq!(pairwise_precision(&p, &g).unwrap(), 1.0);
    }

    #[test]
    fn precision_disjoint_gold_is_zero() {
        let p = preds(&[("1", &["A"]), ("2", &["A"])]);
        let g = gold(&[("1", &["x"], &["t"]), ("2", &["y"], &["t"])]);
        assert_eq!(pairwise_precision(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn precision_no_matching_top1_is_error() {
        let p = preds(&[("1", &["A"]), ("2", &["B"])]);
        let g = gold(&[("1", &["x"], &[]), ("2", &["x"], &[])]);
        assert!(matches!(
            pairwise_precision(&p, &g),
            Err(EvalError::NoMatchingPairs)
        ));
    }

    #[test]
    fn recall_shared_top3() {
        let p = preds(&[("1", &["A", "B", "C", "Z"]), ("2", &["C", "D", "E"])]);
        let g = gold(&[
            ("1", &[], &["unrequited-love"]),
            ("2", &[], &["unrequited-love"]),
        ]);
        assert_eq!(pairwise_recall(&p, &g).unwrap(), 1.0);
    }

    #[test]
    fn recall_disjoint_top3() {
        // "Z" is rank 4 for passage 1, so it does not count toward top-3.
        let p = preds(&[("1", &["A", "B", "C", "Z"]), ("2", &["Z", "D", "E"])]);
        let g = gold(&[("1", &[], &["t"]), ("2", &[], &["t"])]);
        assert_eq!(pairwise_recall(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn recall_short_predictions_use_what_they_have() {
        let p = preds(&[("1", &["A"]), ("2", &["A", "B", "C"])]);
        let g = gold(&[("1", &[], &["t"]), ("2", &[], &["t"])]);
        assert_eq!(pairwise_recall(&p, &g).unwrap(), 1.0);
    }

    fn dist(doc_id: &str, probs: &[f64]) -> DocTopicDist {
        DocTopicDist {
            doc_id: doc_id.into(),
            probs: probs.to_vec(),
        }
    }

    #[test]
    fn intruder_lda_constraint_intersection() {
        // k=10; passage 0 ranks topics by descending prob; bottom-5 by
        // ascending prob are {5,6,7,8,9}'s complement depending on values.
        let mut probs = vec![0.02, 0.30, 0.01, 0.25, 0.03, 0.015, 0.20, 0.025, 0.01, 0.14];
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let dists = vec![
            dist("d0", &probs),
            // Other docs make topics 2 and 8 top-ranked somewhere.
            dist("d1", &one_hot(10, 2)),
            dist("d2", &one_hot(10, 8)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = sample_intruder_lda(0, &dists, &mut rng).unwrap();
            assert!(t == 2 || t == 8, "got {t}");
        }
    }

    fn one_hot(k: usize, idx: usize) -> Vec<f64> {
        let mut v = vec![0.01 / (k - 1) as f64; k];
        v[idx] = 0.99;
        v
    }

    #[test]
    fn intruder_assigned_form() {
        let assignments = vec![
            TopicAssignment {
                doc_id: "p".into(),
                ranked_labels: vec!["Love".into()],
            },
            TopicAssignment {
                doc_id: "q".into(),
                ranked_labels: vec!["War".into()],
            },
        ];
        let pool = vec!["Love".to_string(), "War".to_string(), "Family".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let t = sample_intruder_assigned(0, &assignments, &pool, &mut rng).unwrap();
            assert_eq!(t, "War");
        }
    }

    #[test]
    fn intruder_error_names_constraint() {
        let assignments = vec![TopicAssignment {
            doc_id: "p".into(),
            ranked_labels: vec!["Love".into(), "War".into()],
        }];
        let pool = vec!["Love".to_string(), "War".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = sample_intruder_assigned(0, &assignments, &pool, &mut rng).unwrap_err();
        assert!(err.to_string().contains("every pool topic is assigned"));
    }

    #[test]
    fn pr_curve_limit_cases() {
        let dists = vec![
            dist("a", &[0.6, 0.4]),
            dist("b", &[0.3, 0.7]),
            dist("c", &[0.5, 0.5]),
            dist("d", &[0.9, 0.1]),
        ];
        let targets: BTreeSet<usize> = [0].into();
        let positives: BTreeSet<String> = ["a".to_string(), "d".to_string()].into();
        // Cutoff below every probability: recall 1, precision = base rate.
        let curve = threshold_pr_curve(&dists, &targets, &positives, &[0.01]).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].recall, 1.0);
        assert_eq!(curve.points[0].precision, 0.5);
        // Cutoff above every probability: point skipped.
        let curve = threshold_pr_curve(&dists, &targets, &positives, &[0.99]).unwrap();
        assert!(curve.points.is_empty());
        // Empty positives is an error.
        assert!(threshold_pr_curve(&dists, &targets, &BTreeSet::new(), &[0.5]).is_err());
    }

    #[test]
    fn jsd_identity_and_disjoint() {
        let p = vec![0.25, 0.25, 0.5];
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        let a = vec![0.5, 0.5, 0.0, 0.0];
        let b = vec![0.0, 0.0, 0.5, 0.5];
        assert!((jsd(&a, &b).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn jsd_direct_summation_oracle() {
        let p = vec![0.5, 0.5, 0.0];
        let q = vec![0.0, 0.5, 0.5];
        // Oracle: independent term-by-term summation.
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut expected = 0.0;
        for i in 0..3 {
            if p[i] > 0.0 {
                expected += 0.5 * p[i] * (p[i] / m[i]).ln();
            }
            if q[i] > 0.0 {
                expected += 0.5 * q[i] * (q[i] / m[i]).ln();
            }
        }
        assert!((jsd(&p, &q).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn jsd_rejects_unnormalized() {
        assert!(jsd(&[0.5, 0.4], &[0.5, 0.5]).is_err());
        assert!(jsd(&[0.5, 0.5], &[1.0]).is_err());
    }
}
