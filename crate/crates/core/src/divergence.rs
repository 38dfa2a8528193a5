//! Topic novelty: each event-window topic is scored by its smallest
//! symmetric KL divergence to any baseline-window topic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::{LdaModel, TopicDistribution, Vocabulary};

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub topic_index: usize,
    pub skl: f64,
    pub matched_baseline_index: usize,
}

/// `sum_i x(i) * ln(x(i) / y(i))`, with `0 * ln(0 / y) = 0`.
pub fn kl_divergence(x: &TopicDistribution, y: &TopicDistribution) -> Result<f64> {
    kl_slices(x.probs(), y.probs())
}

pub(crate) fn kl_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let mut total = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        if xi > 0.0 {
            total += xi * (xi / yi).ln();
        }
    }
    // Gibbs' inequality holds exactly; only rounding can push below zero.
    Ok(total.max(0.0))
}

/// `D(p, q) + D(q, p)`.
pub fn symmetric_kl(p: &TopicDistribution, q: &TopicDistribution) -> Result<f64> {
    Ok(kl_divergence(p, q)? + kl_divergence(q, p)?)
}

/// Topics of two models re-expressed over their union vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTopics {
    /// Model A's tokens in A's order, followed by B-only tokens in B's order.
    pub vocab: Vocabulary,
    pub topics_a: Vec<TopicDistribution>,
    pub topics_b: Vec<TopicDistribution>,
}

/// Tokens missing from a model's vocabulary receive `epsilon` and each row is
/// renormalized. Rows that gained nothing are carried over untouched.
pub fn align_vocabularies(model_a: &LdaModel, model_b: &LdaModel, epsilon: f64) -> AlignedTopics {
    let mut vocab = model_a.vocab().clone();
    for tok in model_b.vocab().tokens() {
        vocab.insert(tok);
    }
    let topics_a = realign(model_a, &vocab, epsilon);
    let topics_b = realign(model_b, &vocab, epsilon);
    AlignedTopics {
        vocab,
        topics_a,
        topics_b,
    }
}

fn realign(model: &LdaModel, union: &Vocabulary, epsilon: f64) -> Vec<TopicDistribution> {
    // position in `union` -> position in the model's own vocabulary
    let mapping: Vec<Option<usize>> = union.tokens().iter().map(|t| model.vocab().id(t)).collect();
    let identical = mapping.iter().enumerate().all(|(i, m)| *m == Some(i));
    model
        .topic_word()
        .iter()
        .map(|row| {
            if identical {
                return row.clone();
            }
            let weights: Vec<f64> = mapping
                .iter()
                .map(|m| m.map_or(epsilon, |id| row.get(id)))
                .collect();
            TopicDistribution::from_weights(weights).expect("topic rows have positive mass")
        })
        .collect()
}

/// Scores every topic of `model_a` (event window) against all topics of
/// `model_b` (baseline window) and sorts by novelty, highest first. Equal
/// scores keep the lower topic index first.
pub fn rank_attack_topics(model_a: &LdaModel, model_b: &LdaModel, epsilon: f64) -> Vec<TopicScore> {
    let aligned = align_vocabularies(model_a, model_b, epsilon);
    rank_aligned(&aligned.topics_a, &aligned.topics_b)
}

pub(crate) fn rank_aligned(
    topics_a: &[TopicDistribution],
    topics_b: &[TopicDistribution],
) -> Vec<TopicScore> {
    let mut scores: Vec<TopicScore> = topics_a
        .iter()
        .enumerate()
        .map(|(j, tj)| {
            let mut best = TopicScore {
                topic_index: j,
                skl: f64::INFINITY,
                matched_baseline_index: 0,
            };
            for (m, tm) in topics_b.iter().enumerate() {
                let skl = symmetric_kl(tj, tm).expect("aligned rows share a domain");
                if skl < best.skl {
                    best.skl = skl;
                    best.matched_baseline_index = m;
                }
            }
            best
        })
        .collect();
    scores.sort_by(|a, b| b.skl.total_cmp(&a.skl));
    scores
}

/// SKL values indexed by event-window topic.
pub fn skl_by_topic(scores: &[TopicScore]) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; scores.len()];
    for s in scores {
        if s.topic_index >= out.len() || !out[s.topic_index].is_nan() {
            return Err(Error::invalid(format!(
                "topic scores are not a permutation of 0..{}",
                scores.len()
            )));
        }
        out[s.topic_index] = s.skl;
    }
    Ok(out)
}

/// CSV with columns `topic_index,skl,matched_baseline_index,top_tokens`;
/// `top_tokens` holds the ten heaviest tokens of the event topic, space separated.
pub fn write_topic_table<W: Write>(out: W, scores: &[TopicScore], model_a: &LdaModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["topic_index", "skl", "matched_baseline_index", "top_tokens"])?;
    for s in scores {
        w.write_record([
            s.topic_index.to_string(),
            s.skl.to_string(),
            s.matched_baseline_index.to_string(),
            model_a.top_tokens(s.topic_index, 10).join(" "),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<topic table>", e))?;
    Ok(())
}
