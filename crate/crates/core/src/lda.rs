//! Latent Dirichlet allocation trained by collapsed Gibbs sampling.
//!
//! One model is trained per time window. The topic-word rows are the
//! smoothed final-sweep counts, `(n_kw + beta) / (n_k + V * beta)`, so every
//! row is strictly positive. Held-out documents are folded in with the
//! topic-word rows held fixed.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
pub use crate::vocab::Vocabulary;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_DIRICHLET_BETA: f64 = 0.01;
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_INFERENCE_ITERATIONS: usize = 100;

/// Number of topics for a window of `num_docs` documents:
/// `max(2, floor(scale * log10(num_docs)))`.
pub fn num_topics(num_docs: usize, topic_count_scale: f64) -> Result<usize> {
    num_topics_with_base(num_docs, topic_count_scale, 10.0)
}

/// [`num_topics`] with a configurable logarithm base.
pub fn num_topics_with_base(num_docs: usize, topic_count_scale: f64, log_base: f64) -> Result<usize> {
    if num_docs == 0 {
        return Err(Error::invalid("num_docs must be at least 1"));
    }
    if !(topic_count_scale > 0.0 && topic_count_scale.is_finite()) {
        return Err(Error::invalid(format!(
            "topic_count_scale must be positive, got {topic_count_scale}"
        )));
    }
    if !(log_base > 0.0 && log_base.is_finite()) || log_base == 1.0 {
        return Err(Error::invalid(format!("invalid log base {log_base}")));
    }
    let n = num_docs as f64;
    let log = if log_base == 10.0 { n.log10() } else { n.log(log_base) };
    let raw = (topic_count_scale * log).floor();
    Ok((raw as usize).max(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaHyperparams {
    pub dirichlet_alpha: f64,
    pub dirichlet_beta: f64,
    pub num_topics: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaHyperparams {
    /// Defaults: `alpha = 50 / num_topics`, `beta = 0.01`, 1000 sweeps, seed 0.
    pub fn new(num_topics: usize) -> Self {
        LdaHyperparams {
            dirichlet_alpha: 50.0 / num_topics.max(1) as f64,
            dirichlet_beta: DEFAULT_DIRICHLET_BETA,
            num_topics,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::invalid("dirichlet_alpha must be positive"));
        }
        if !(self.dirichlet_beta > 0.0 && self.dirichlet_beta.is_finite()) {
            return Err(Error::invalid("dirichlet_beta must be positive"));
        }
        if self.num_topics < 2 {
            return Err(Error::invalid("num_topics must be at least 2"));
        }
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        Ok(())
    }
}

/// A probability vector over a vocabulary (one topic) or over topics (one document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicDistribution {
    probs: Vec<f64>,
}

impl TopicDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    /// Checked constructor: entries must be finite, non-negative and sum to 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("distribution entries must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("distribution sums to {sum}, not 1")));
        }
        Ok(TopicDistribution { probs })
    }

    /// Normalizes non-negative weights with a positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("weights must have a positive finite total"));
        }
        TopicDistribution::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty domain");
        TopicDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn domain_size(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of the `n` heaviest entries, heaviest first, lower index on ties.
    pub fn top_indices(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    vocab: Vocabulary,
    topic_word: Vec<TopicDistribution>,
    doc_topic: Vec<TopicDistribution>,
    hyper: LdaHyperparams,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    hyper: LdaHyperparams,
    vocab: Vocabulary,
    topic_word: Vec<TopicDistribution>,
    doc_topic: Vec<TopicDistribution>,
}

impl LdaModel {
    /// Assembles a model from already-estimated parts, checking shapes.
    pub fn from_parts(
        vocab: Vocabulary,
        topic_word: Vec<TopicDistribution>,
        doc_topic: Vec<TopicDistribution>,
        hyper: LdaHyperparams,
    ) -> Result<Self> {
        hyper.validate()?;
        if topic_word.len() != hyper.num_topics {
            return Err(Error::LengthMismatch {
                expected: hyper.num_topics,
                actual: topic_word.len(),
            });
        }
        for row in &topic_word {
            if row.domain_size() != vocab.len() {
                return Err(Error::LengthMismatch {
                    expected: vocab.len(),
                    actual: row.domain_size(),
                });
            }
        }
        for row in &doc_topic {
            if row.domain_size() != hyper.num_topics {
                return Err(Error::LengthMismatch {
                    expected: hyper.num_topics,
                    actual: row.domain_size(),
                });
            }
        }
        Ok(LdaModel {
            vocab,
            topic_word,
            doc_topic,
            hyper,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn topic_word(&self) -> &[TopicDistribution] {
        &self.topic_word
    }

    pub fn doc_topic(&self) -> &[TopicDistribution] {
        &self.doc_topic
    }

    pub fn hyper(&self) -> &LdaHyperparams {
        &self.hyper
    }

    pub fn num_topics(&self) -> usize {
        self.topic_word.len()
    }

    /// The `n` highest-weight tokens of topic `k`.
    pub fn top_tokens(&self, k: usize, n: usize) -> Vec<&str> {
        self.topic_word[k]
            .top_indices(n)
            .into_iter()
            .filter_map(|id| self.vocab.token(id))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            hyper: self.hyper,
            vocab: self.vocab.clone(),
            topic_word: self.topic_word.clone(),
            doc_topic: self.doc_topic.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let check = |rows: &[TopicDistribution]| -> Result<()> {
            for row in rows {
                TopicDistribution::new(row.probs.clone())?;
            }
            Ok(())
        };
        check(&file.topic_word)?;
        check(&file.doc_topic)?;
        LdaModel::from_parts(file.vocab, file.topic_word, file.doc_topic, file.hyper)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LdaModel::from_json(&text)
    }

    /// Topic mixture of a held-out document.
    ///
    /// Gibbs-samples topic assignments for the document's known tokens with
    /// the topic-word rows fixed, averages the topic counts over the second
    /// half of the sweeps and smooths with the model's `dirichlet_alpha`.
    /// Unknown tokens are skipped; a document with no known tokens gets the
    /// uniform prior.
    pub fn infer_doc_topics(
        &self,
        tokens: &[String],
        inference_iterations: usize,
        seed: u64,
    ) -> TopicDistribution {
        let k_topics = self.num_topics();
        let words: Vec<usize> = tokens.iter().filter_map(|t| self.vocab.id(t)).collect();
        if words.is_empty() {
            return TopicDistribution::uniform(k_topics);
        }
        let iterations = inference_iterations.max(1);
        let alpha = self.hyper.dirichlet_alpha;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut z: Vec<usize> = Vec::with_capacity(words.len());
        let mut counts = vec![0u32; k_topics];
        for _ in &words {
            let k = rng.gen_range(0..k_topics);
            counts[k] += 1;
            z.push(k);
        }

        let burn_in = iterations / 2;
        let mut accum = vec![0f64; k_topics];
        let mut kept = 0usize;
        let mut weights = vec![0f64; k_topics];
        for it in 0..iterations {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                for k in 0..k_topics {
                    weights[k] = (counts[k] as f64 + alpha) * self.topic_word[k].probs[w];
                }
                let k = sample_index(&mut rng, &weights);
                counts[k] += 1;
                z[i] = k;
            }
            if it >= burn_in {
                for k in 0..k_topics {
                    accum[k] += counts[k] as f64;
                }
                kept += 1;
            }
        }

        let denom = words.len() as f64 + k_topics as f64 * alpha;
        let probs = accum
            .iter()
            .map(|&a| (a / kept as f64 + alpha) / denom)
            .collect();
        TopicDistribution { probs }
    }
}

/// Draws an index with probability proportional to `weights`.
fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    // rounding can leave u marginally above the last weight
    weights.len() - 1
}

/// Trains one window's model.
pub fn train(corpus: &Corpus, hyper: &LdaHyperparams) -> Result<LdaModel> {
    let docs: Vec<&[String]> = corpus.token_lists().collect();
    train_documents(&docs, hyper)
}

pub fn train_documents<D: AsRef<[String]>>(docs: &[D], hyper: &LdaHyperparams) -> Result<LdaModel> {
    hyper.validate()?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = Vocabulary::from_documents(docs.iter().map(|d| d.as_ref().iter()));
    if vocab.is_empty() {
        return Err(Error::NoTrainableTokens);
    }
    let ids: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.as_ref().iter().map(|t| vocab.id(t).expect("token indexed")).collect())
        .collect();

    let mut sampler = GibbsSampler::new(ids, vocab.len(), hyper);
    for _ in 0..hyper.iterations {
        sampler.sweep();
    }
    let (topic_word, doc_topic) = sampler.estimates();
    Ok(LdaModel {
        vocab,
        topic_word,
        doc_topic,
        hyper: *hyper,
    })
}

struct GibbsSampler {
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    num_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    // doc-major: doc_topic[d * K + k]
    doc_topic: Vec<u32>,
    // word-major: word_topic[w * K + k]
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
}

impl GibbsSampler {
    fn new(docs: Vec<Vec<usize>>, vocab_size: usize, hyper: &LdaHyperparams) -> Self {
        let k_topics = hyper.num_topics;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut doc_topic = vec![0u32; docs.len() * k_topics];
        let mut word_topic = vec![0u32; vocab_size * k_topics];
        let mut topic_total = vec![0u32; k_topics];
        let mut assignments = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let mut z = Vec::with_capacity(doc.len());
            for &w in doc {
                let k = rng.gen_range(0..k_topics);
                doc_topic[d * k_topics + k] += 1;
                word_topic[w * k_topics + k] += 1;
                topic_total[k] += 1;
                z.push(k);
            }
            assignments.push(z);
        }
        GibbsSampler {
            docs,
            assignments,
            num_topics: k_topics,
            vocab_size,
            alpha: hyper.dirichlet_alpha,
            beta: hyper.dirichlet_beta,
            doc_topic,
            word_topic,
            topic_total,
            weights: vec![0.0; k_topics],
            rng,
        }
    }

    fn sweep(&mut self) {
        let k_topics = self.num_topics;
        let v_beta = self.vocab_size as f64 * self.beta;
        for d in 0..self.docs.len() {
            let dt = d * k_topics;
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let wt = w * k_topics;
                let old = self.assignments[d][i];
                self.doc_topic[dt + old] -= 1;
                self.word_topic[wt + old] -= 1;
                self.topic_total[old] -= 1;

                for k in 0..k_topics {
                    self.weights[k] = (self.doc_topic[dt + k] as f64 + self.alpha)
                        * (self.word_topic[wt + k] as f64 + self.beta)
                        / (self.topic_total[k] as f64 + v_beta);
                }
                let new = sample_index(&mut self.rng, &self.weights);

                self.doc_topic[dt + new] += 1;
                self.word_topic[wt + new] += 1;
                self.topic_total[new] += 1;
                self.assignments[d][i] = new;
            }
        }
    }

    fn estimates(&self) -> (Vec<TopicDistribution>, Vec<TopicDistribution>) {
        let k_topics = self.num_topics;
        let v = self.vocab_size;
        let topic_word = (0..k_topics)
            .map(|k| {
                let denom = self.topic_total[k] as f64 + v as f64 * self.beta;
                let probs = (0..v)
                    .map(|w| (self.word_topic[w * k_topics + k] as f64 + self.beta) / denom)
                    .collect();
                TopicDistribution { probs }
            })
            .collect();
        let doc_topic = self
            .docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                let denom = doc.len() as f64 + k_topics as f64 * self.alpha;
                let probs = (0..k_topics)
                    .map(|k| (self.doc_topic[d * k_topics + k] as f64 + self.alpha) / denom)
                    .collect();
                TopicDistribution { probs }
            })
            .collect();
        (topic_word, doc_topic)
    }
}
