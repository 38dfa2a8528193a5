//! Per-tweet relative score: the tweet's topic mixture dotted with the
//! per-topic novelty scores.

use std::io::Write;

use rayon::prelude::*;

use crate::corpus::{Corpus, Tweet};
use crate::divergence::{skl_by_topic, TopicScore};
use crate::error::{Error, Result};
use crate::lda::{LdaModel, TopicDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedTweet {
    pub tweet: Tweet,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
    pub topic_mix: TopicDistribution,
}

pub fn tweet_score(topic_mix: &TopicDistribution, topic_scores: &[TopicScore]) -> Result<f64> {
    if topic_mix.domain_size() != topic_scores.len() {
        return Err(Error::LengthMismatch {
            expected: topic_scores.len(),
            actual: topic_mix.domain_size(),
        });
    }
    let skl = skl_by_topic(topic_scores)?;
    Ok(dot(topic_mix.probs(), &skl))
}

fn dot(mix: &[f64], skl: &[f64]) -> f64 {
    mix.iter().zip(skl).map(|(p, s)| p * s).sum::<f64>().max(0.0)
}

/// Seed used for the tweet at `index`; independent of scheduling.
pub fn tweet_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Scores every event-window tweet and sorts by score, highest first; ties
/// keep corpus order.
pub fn rank_tweets(
    corpus: &Corpus,
    model_a: &LdaModel,
    topic_scores: &[TopicScore],
    inference_iterations: usize,
    seed: u64,
) -> Result<Vec<RankedTweet>> {
    if topic_scores.len() != model_a.num_topics() {
        return Err(Error::LengthMismatch {
            expected: model_a.num_topics(),
            actual: topic_scores.len(),
        });
    }
    let skl = skl_by_topic(topic_scores)?;
    let mut scored: Vec<(f64, TopicDistribution)> = corpus
        .tweets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mix = model_a.infer_doc_topics(&t.tokens, inference_iterations, tweet_seed(seed, i));
            (dot(mix.probs(), &skl), mix)
        })
        .collect();

    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));

    let mut ranked = Vec::with_capacity(order.len());
    for (pos, idx) in order.into_iter().enumerate() {
        let (score, mix) = std::mem::replace(&mut scored[idx], (0.0, TopicDistribution::uniform(1)));
        ranked.push(RankedTweet {
            tweet: corpus.tweets[idx].clone(),
            score,
            rank: pos + 1,
            topic_mix: mix,
        });
    }
    Ok(ranked)
}

/// Ids of the first `x` ranked tweets, in rank order.
pub fn label_top_x(ranked: &[RankedTweet], x: usize) -> Result<Vec<String>> {
    if x > ranked.len() {
        return Err(Error::invalid(format!(
            "cannot label {x} tweets out of {}",
            ranked.len()
        )));
    }
    Ok(ranked[..x].iter().map(|r| r.tweet.id.clone()).collect())
}

/// Ids of tweets scoring strictly above `threshold`, in rank order.
pub fn label_above_threshold(ranked: &[RankedTweet], threshold: f64) -> Vec<String> {
    ranked
        .iter()
        .take_while(|r| r.score > threshold)
        .map(|r| r.tweet.id.clone())
        .collect()
}

/// CSV with columns `rank,score,id,text`.
pub fn write_ranked<W: Write>(out: W, ranked: &[RankedTweet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "score", "id", "text"])?;
    for r in ranked {
        w.write_record([
            r.rank.to_string(),
            r.score.to_string(),
            r.tweet.id.clone(),
            r.tweet.raw_text.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranked tweets>", e))?;
    Ok(())
}
