//! The detection core shared by the CLI and the evaluation harness: train a
//! model per window, score event topics by novelty, rank event tweets.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::divergence::{rank_attack_topics, TopicScore, DEFAULT_EPSILON};
use crate::error::{Result, Stage, StageExt};
use crate::lda::{
    self, num_topics_with_base, LdaHyperparams, LdaModel, DEFAULT_DIRICHLET_BETA,
    DEFAULT_INFERENCE_ITERATIONS, DEFAULT_ITERATIONS,
};
use crate::scoring::{rank_tweets, RankedTweet};

pub const DEFAULT_TOPIC_COUNT_SCALE: f64 = 10.0;
pub const DEFAULT_LOG_BASE: f64 = 10.0;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub topic_count_scale: f64,
    pub log_base: f64,
    /// `None` means `50 / num_topics` for each model.
    pub dirichlet_alpha: Option<f64>,
    pub dirichlet_beta: f64,
    pub iterations: usize,
    pub inference_iterations: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            topic_count_scale: DEFAULT_TOPIC_COUNT_SCALE,
            log_base: DEFAULT_LOG_BASE,
            dirichlet_alpha: None,
            dirichlet_beta: DEFAULT_DIRICHLET_BETA,
            iterations: DEFAULT_ITERATIONS,
            inference_iterations: DEFAULT_INFERENCE_ITERATIONS,
            seed: DEFAULT_SEED,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// SplitMix64 finalizer; spreads a (seed, tag) pair into an independent seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const BASELINE_TAG: u64 = 1;
const EVENT_TAG: u64 = 2;
const INFERENCE_TAG: u64 = 3;

impl DetectorSettings {
    pub fn hyperparams_for(&self, num_docs: usize, tag: u64) -> Result<LdaHyperparams> {
        let k = num_topics_with_base(num_docs, self.topic_count_scale, self.log_base)?;
        let mut hyper = LdaHyperparams::new(k)
            .with_iterations(self.iterations)
            .with_seed(derive_seed(self.seed, tag));
        if let Some(alpha) = self.dirichlet_alpha {
            hyper.dirichlet_alpha = alpha;
        }
        hyper.dirichlet_beta = self.dirichlet_beta;
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn baseline_hyperparams(&self, baseline: &Corpus) -> Result<LdaHyperparams> {
        self.hyperparams_for(baseline.len(), BASELINE_TAG)
    }

    pub fn event_hyperparams(&self, event: &Corpus) -> Result<LdaHyperparams> {
        self.hyperparams_for(event.len(), EVENT_TAG)
    }

    pub fn inference_seed(&self) -> u64 {
        derive_seed(self.seed, INFERENCE_TAG)
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub event_model: LdaModel,
    pub baseline_model: LdaModel,
    pub topic_scores: Vec<TopicScore>,
    pub ranked: Vec<RankedTweet>,
}

/// Trains both window models (concurrently) and ranks the event tweets.
pub fn train_models(baseline: &Corpus, event: &Corpus, settings: &DetectorSettings) -> Result<(LdaModel, LdaModel)> {
    let hb = settings.baseline_hyperparams(baseline).stage(Stage::TrainBaseline)?;
    let ha = settings.event_hyperparams(event).stage(Stage::TrainEvent)?;
    let (ma, mb) = rayon::join(
        || lda::train(event, &ha).stage(Stage::TrainEvent),
        || lda::train(baseline, &hb).stage(Stage::TrainBaseline),
    );
    Ok((ma?, mb?))
}

/// Topic ranking and tweet ranking for already-trained models.
pub fn score_with_models(
    event: &Corpus,
    event_model: LdaModel,
    baseline_model: LdaModel,
    settings: &DetectorSettings,
) -> Result<Detection> {
    let topic_scores = rank_attack_topics(&event_model, &baseline_model, settings.epsilon);
    let ranked = rank_tweets(
        event,
        &event_model,
        &topic_scores,
        settings.inference_iterations,
        settings.inference_seed(),
    )
    .stage(Stage::Scoring)?;
    Ok(Detection {
        event_model,
        baseline_model,
        topic_scores,
        ranked,
    })
}

pub fn detect(baseline: &Corpus, event: &Corpus, settings: &DetectorSettings) -> Result<Detection> {
    let (ma, mb) = train_models(baseline, event, settings)?;
    score_with_models(event, ma, mb, settings)
}
