//! Evaluation harness: precision/recall at x, DET points, a synthetic
//! corpus generator and the topic-count parameter sweep.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::TweetFilter;
use crate::corpus::{Corpus, Label, TokenizerConfig, Tweet, WindowTag};
use crate::detector::{derive_seed, detect, DetectorSettings};
use crate::error::{Error, Result, Stage, StageExt};
use crate::scoring::RankedTweet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Number of top-ranked tweets considered.
    pub x: usize,
    /// Tweets actually labeled Attack among the top x (x itself unless a filter ran).
    pub labeled: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<EvalPoint>,
    pub total_attacks: usize,
    /// Set when the corpus holds no gold attacks; recall is then reported as 0.
    pub no_gold_attacks: bool,
}

/// Precision and recall when the first `x` ranked tweets are labeled Attack.
pub fn precision_recall_curve(ranked: &[RankedTweet], xs: &[usize]) -> Result<PrCurve> {
    let keep = vec![true; ranked.len()];
    masked_curve(ranked, &keep, xs)
}

/// Like [`precision_recall_curve`], but of the first `x` ranked tweets only
/// those with `keep[i]` set are labeled Attack. Precision is taken over the
/// labeled tweets and is 0 when none are.
pub fn filtered_precision_recall_curve(ranked: &[RankedTweet], keep: &[bool], xs: &[usize]) -> Result<PrCurve> {
    if keep.len() != ranked.len() {
        return Err(Error::LengthMismatch {
            expected: ranked.len(),
            actual: keep.len(),
        });
    }
    masked_curve(ranked, keep, xs)
}

fn masked_curve(ranked: &[RankedTweet], keep: &[bool], xs: &[usize]) -> Result<PrCurve> {
    if let Some(r) = ranked.iter().find(|r| r.tweet.label == Label::Unlabeled) {
        return Err(Error::UnlabeledTweet { id: r.tweet.id.clone() });
    }
    let n = ranked.len();
    if let Some(&bad) = xs.iter().find(|&&x| x == 0 || x > n) {
        return Err(Error::invalid(format!("x = {bad} outside [1, {n}]")));
    }
    // prefix counts of labeled and true-positive tweets
    let mut labeled = vec![0usize; n + 1];
    let mut tp = vec![0usize; n + 1];
    for (i, r) in ranked.iter().enumerate() {
        labeled[i + 1] = labeled[i] + keep[i] as usize;
        tp[i + 1] = tp[i] + (keep[i] && r.tweet.label.is_attack()) as usize;
    }
    let total_attacks = ranked.iter().filter(|r| r.tweet.label.is_attack()).count();
    let points = xs
        .iter()
        .map(|&x| {
            let (lab, hits) = (labeled[x], tp[x]);
            EvalPoint {
                x,
                labeled: lab,
                true_positives: hits,
                precision: if lab == 0 { 0.0 } else { hits as f64 / lab as f64 },
                recall: if total_attacks == 0 {
                    0.0
                } else {
                    hits as f64 / total_attacks as f64
                },
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        total_attacks,
        no_gold_attacks: total_attacks == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub x: usize,
    /// 1 - recall.
    pub missed_detection_rate: f64,
    /// 1 - precision.
    pub false_positive_measure: f64,
}

pub fn det_points(curve: &[EvalPoint]) -> Vec<DetPoint> {
    curve
        .iter()
        .map(|p| DetPoint {
            x: p.x,
            missed_detection_rate: 1.0 - p.recall,
            false_positive_measure: 1.0 - p.precision,
        })
        .collect()
}

/// Parameters of the synthetic two-window corpus.
///
/// Background tokens are named after the seed, so two specs with different
/// seeds have disjoint background vocabularies; attack tokens are shared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_background: usize,
    pub n_attack: usize,
    pub background_vocab_size: usize,
    pub attack_vocab_size: usize,
    pub tokens_per_doc: usize,
    pub overlap_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Equal background and attack counts in the event window.
    fn default() -> Self {
        SynthSpec {
            n_background: 300,
            n_attack: 300,
            background_vocab_size: 200,
            attack_vocab_size: 30,
            tokens_per_doc: 12,
            overlap_fraction: 0.3,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_background == 0 || self.background_vocab_size == 0 || self.attack_vocab_size == 0 || self.tokens_per_doc == 0 {
            return Err(Error::invalid("synthetic corpus sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::invalid("overlap_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn background_token(&self, i: usize) -> String {
        format!("bg{}w{i}", self.seed)
    }

    pub fn attack_token(i: usize) -> String {
        format!("atk{i}")
    }
}

/// Baseline window of `n_background` background documents, and an event
/// window mixing `n_background` background documents (NonAttack) with
/// `n_attack` attack documents (Attack) in shuffled order.
///
/// Background tokens follow a Zipf(1) law over the background vocabulary.
/// An attack document draws `round(overlap_fraction * tokens_per_doc)` of its
/// tokens from the background law and the rest uniformly from the attack
/// vocabulary.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cfg = TokenizerConfig::default();
    let zipf = WeightedIndex::new((0..spec.background_vocab_size).map(|r| 1.0 / (r + 1) as f64))
        .expect("positive weights");

    let background_doc = |rng: &mut ChaCha8Rng| -> String {
        (0..spec.tokens_per_doc)
            .map(|_| spec.background_token(zipf.sample(rng)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let n_overlap = (spec.overlap_fraction * spec.tokens_per_doc as f64).round() as usize;
    let attack_doc = |rng: &mut ChaCha8Rng| -> String {
        let mut words: Vec<String> = (0..spec.tokens_per_doc)
            .map(|i| {
                if i < n_overlap {
                    spec.background_token(zipf.sample(rng))
                } else {
                    SynthSpec::attack_token(rng.gen_range(0..spec.attack_vocab_size))
                }
            })
            .collect();
        words.shuffle(rng);
        words.join(" ")
    };

    let baseline = (0..spec.n_background)
        .map(|i| {
            Tweet::new(format!("b{}-{i}", spec.seed), background_doc(&mut rng), &cfg).with_label(Label::NonAttack)
        })
        .collect();

    let mut event: Vec<(String, Label)> = Vec::with_capacity(spec.n_background + spec.n_attack);
    for _ in 0..spec.n_background {
        event.push((background_doc(&mut rng), Label::NonAttack));
    }
    for _ in 0..spec.n_attack {
        event.push((attack_doc(&mut rng), Label::Attack));
    }
    event.shuffle(&mut rng);
    let event = event
        .into_iter()
        .enumerate()
        .map(|(i, (text, label))| Tweet::new(format!("e{}-{i}", spec.seed), text, &cfg).with_label(label))
        .collect();

    Ok((
        Corpus::new(baseline, WindowTag::Baseline),
        Corpus::new(event, WindowTag::Event),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub topic_count_scale: f64,
    pub use_tree: bool,
    pub curve: Vec<EvalPoint>,
}

/// Evaluates every topic-count scale, with and (optionally) without the
/// tree filter. Each scale gets its own seed derived from the base seed and
/// the scale, so results do not depend on scheduling. Tree on/off cells at
/// one scale share the same ranking.
pub fn parameter_sweep(
    baseline: &Corpus,
    event: &Corpus,
    scales: &[f64],
    xs: &[usize],
    with_and_without_tree: bool,
    tree_training: Option<&Corpus>,
    settings: &DetectorSettings,
    min_leaf: usize,
) -> Result<Vec<SweepResult>> {
    if xs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let filter = if with_and_without_tree {
        let training = tree_training
            .ok_or_else(|| Error::invalid("tree sweep requires a labeled training corpus"))
            .stage(Stage::Classifier)?;
        Some(TweetFilter::train(training, min_leaf).stage(Stage::Classifier)?)
    } else {
        None
    };

    let cells: Vec<Result<Vec<SweepResult>>> = scales
        .par_iter()
        .map(|&scale| {
            let cell = DetectorSettings {
                topic_count_scale: scale,
                seed: derive_seed(settings.seed, scale.to_bits()),
                ..*settings
            };
            let det = detect(baseline, event, &cell)?;
            let plain = precision_recall_curve(&det.ranked, xs).stage(Stage::Eval)?;
            let mut out = vec![SweepResult {
                topic_count_scale: scale,
                use_tree: false,
                curve: plain.points,
            }];
            if let Some(f) = &filter {
                let keep: Vec<bool> = det.ranked.iter().map(|r| f.predict(&r.tweet).is_attack()).collect();
                let curve = filtered_precision_recall_curve(&det.ranked, &keep, xs).stage(Stage::Eval)?;
                out.push(SweepResult {
                    topic_count_scale: scale,
                    use_tree: true,
                    curve: curve.points,
                });
            }
            Ok(out)
        })
        .collect();

    let mut results = Vec::new();
    for cell in cells {
        results.extend(cell?);
    }
    Ok(results)
}

/// Parses a grid like `1..100` (inclusive), `5,10,20` or a mix of both.
pub fn parse_grid(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| Error::invalid(format!("bad range {part:?}")))?;
            let hi: usize = hi.trim().parse().map_err(|_| Error::invalid(format!("bad range {part:?}")))?;
            if lo > hi {
                return Err(Error::invalid(format!("empty range {part:?}")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| Error::invalid(format!("bad grid value {part:?}")))?);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(out)
}

/// Parses a comma-separated list of reals; `a..b` expands to integers a..=b.
pub fn parse_scales(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.contains("..") {
            out.extend(parse_grid(part)?.into_iter().map(|v| v as f64));
        } else {
            out.push(part.parse().map_err(|_| Error::invalid(format!("bad scale {part:?}")))?);
        }
    }
    Ok(out)
}

pub fn write_curve<W: Write>(out: W, curve: &[EvalPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "precision", "recall"])?;
    for p in curve {
        w.write_record([p.x.to_string(), p.precision.to_string(), p.recall.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))?;
    Ok(())
}

pub fn write_det<W: Write>(out: W, points: &[DetPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "missed_detection_rate", "false_positive_measure"])?;
    for p in points {
        w.write_record([
            p.x.to_string(),
            p.missed_detection_rate.to_string(),
            p.false_positive_measure.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<det>", e))?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, results: &[SweepResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scale", "tree", "x", "precision", "recall"])?;
    for r in results {
        for p in &r.curve {
            w.write_record([
                r.topic_count_scale.to_string(),
                r.use_tree.to_string(),
                p.x.to_string(),
                p.precision.to_string(),
                p.recall.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::TopicDistribution;
    use proptest::prelude::*;

    fn ranked_labels(labels: &[Label]) -> Vec<RankedTweet> {
        let cfg = TokenizerConfig::default();
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| RankedTweet {
                tweet: Tweet::new(i.to_string(), "x", &cfg).with_label(l),
                score: (labels.len() - i) as f64,
                rank: i + 1,
                topic_mix: TopicDistribution::uniform(2),
            })
            .collect()
    }

    use Label::{Attack as A, NonAttack as N};

    #[test]
    fn counting_examples() {
        let r = ranked_labels(&[A, A, N, A]);
        let c = precision_recall_curve(&r, &[2]).unwrap();
        assert_eq!(c.points[0].precision, 1.0);
        assert!((c.points[0].recall - 2.0 / 3.0).abs() < 1e-15);

        let all = ranked_labels(&[A, A, A]);
        let c = precision_recall_curve(&all, &[3]).unwrap();
        assert_eq!((c.points[0].precision, c.points[0].recall), (1.0, 1.0));

        let c = precision_recall_curve(&ranked_labels(&[N, A]), &[1]).unwrap();
        assert_eq!(c.points[0].precision, 0.0);
    }

    #[test]
    fn curve_errors_and_warning() {
        let mut r = ranked_labels(&[A, N]);
        assert!(precision_recall_curve(&r, &[0]).is_err());
        assert!(precision_recall_curve(&r, &[3]).is_err());
        r[1].tweet.label = Label::Unlabeled;
        assert!(matches!(precision_recall_curve(&r, &[1]), Err(Error::UnlabeledTweet { .. })));

        let none = precision_recall_curve(&ranked_labels(&[N, N]), &[1, 2]).unwrap();
        assert!(none.no_gold_attacks);
        assert!(none.points.iter().all(|p| p.recall == 0.0));
    }

    #[test]
    fn filtered_curve_counts_only_kept() {
        let r = ranked_labels(&[A, N, A, N]);
        let keep = [true, false, true, false];
        let c = filtered_precision_recall_curve(&r, &keep, &[1, 2, 4]).unwrap();
        assert_eq!(c.points[1].labeled, 1);
        assert_eq!(c.points[1].precision, 1.0);
        assert_eq!(c.points[2].precision, 1.0);
        assert_eq!(c.points[2].recall, 1.0);
        let c = filtered_precision_recall_curve(&r, &[false; 4], &[2]).unwrap();
        assert_eq!((c.points[0].precision, c.points[0].recall), (0.0, 0.0));
        assert!(filtered_precision_recall_curve(&r, &[true], &[1]).is_err());
    }

    #[test]
    fn det_examples() {
        let p = |precision, recall| EvalPoint { x: 1, labeled: 1, true_positives: 1, precision, recall };
        let d = det_points(&[p(1.0, 1.0), p(0.5, 0.5)]);
        assert_eq!((d[0].missed_detection_rate, d[0].false_positive_measure), (0.0, 0.0));
        assert_eq!((d[1].missed_detection_rate, d[1].false_positive_measure), (0.5, 0.5));
        assert!(det_points(&[]).is_empty());
    }

    #[test]
    fn synthetic_construction() {
        let spec = SynthSpec { n_background: 20, n_attack: 10, overlap_fraction: 0.0, seed: 3, ..SynthSpec::default() };
        let (base, event) = generate_synthetic(&spec).unwrap();
        assert_eq!(base.len(), 20);
        assert_eq!(event.len(), 30);
        assert_eq!(base.window_tag, WindowTag::Baseline);
        for t in &event.tweets {
            assert_eq!(t.tokens.len(), spec.tokens_per_doc);
            if t.label == Label::Attack {
                assert!(t.tokens.iter().all(|w| w.starts_with("atk")));
            } else {
                assert!(t.tokens.iter().all(|w| w.starts_with("bg3w")));
            }
        }
        assert_eq!(event.tweets.iter().filter(|t| t.label.is_attack()).count(), 10);
        assert_eq!(generate_synthetic(&spec).unwrap(), (base, event));

        let none = SynthSpec { n_attack: 0, ..spec };
        let (_, ev) = generate_synthetic(&none).unwrap();
        assert!(ev.tweets.iter().all(|t| t.label == Label::NonAttack));
    }

    #[test]
    fn overlap_count_is_exact() {
        let spec = SynthSpec { n_background: 5, n_attack: 10, overlap_fraction: 0.25, seed: 4, ..SynthSpec::default() };
        let (_, event) = generate_synthetic(&spec).unwrap();
        for t in event.tweets.iter().filter(|t| t.label.is_attack()) {
            assert_eq!(t.tokens.iter().filter(|w| w.starts_with("bg")).count(), 3);
        }
    }

    #[test]
    fn distinct_seeds_distinct_backgrounds() {
        let a = SynthSpec { seed: 7, ..SynthSpec::default() };
        let b = SynthSpec { seed: 11, ..SynthSpec::default() };
        assert_ne!(a.background_token(0), b.background_token(0));
        assert!(generate_synthetic(&SynthSpec { overlap_fraction: 1.5, ..a }).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1..3, 7").unwrap(), vec![1, 2, 3, 7]);
        assert!(matches!(parse_grid(""), Err(Error::EmptyGrid)));
        assert!(parse_grid("3..1").is_err());
        assert_eq!(parse_scales("5..7,9.5").unwrap(), vec![5.0, 6.0, 7.0, 9.5]);
    }

    #[test]
    fn sweep_edge_cases() {
        let spec = SynthSpec { n_background: 30, n_attack: 10, seed: 2, ..SynthSpec::default() };
        let (b, e) = generate_synthetic(&spec).unwrap();
        let s = DetectorSettings { iterations: 5, inference_iterations: 4, ..DetectorSettings::default() };
        assert!(parameter_sweep(&b, &e, &[], &[1], false, None, &s, 4).unwrap().is_empty());
        assert!(matches!(parameter_sweep(&b, &e, &[10.0], &[], false, None, &s, 4), Err(Error::EmptyGrid)));
        assert!(parameter_sweep(&b, &e, &[10.0], &[1], true, None, &s, 4).is_err());
    }

    #[test]
    fn curve_csv() {
        let c = precision_recall_curve(&ranked_labels(&[A, N]), &[1, 2]).unwrap();
        let mut buf = Vec::new();
        write_curve(&mut buf, &c.points).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,precision,recall\n1,1,1\n2,0.5,1\n");
    }

    proptest! {
        #[test]
        fn curve_identities(labels in proptest::collection::vec(any::<bool>(), 1..60)) {
            let labels: Vec<Label> = labels.into_iter().map(|a| if a { A } else { N }).collect();
            let r = ranked_labels(&labels);
            let xs: Vec<usize> = (1..=labels.len()).collect();
            let c = precision_recall_curve(&r, &xs).unwrap();
            let mut prev = 0.0;
            for p in &c.points {
                let tp = p.precision * p.x as f64;
                prop_assert!((tp - tp.round()).abs() < 1e-9);
                prop_assert_eq!(tp.round() as usize, p.true_positives);
                prop_assert_eq!(p.true_positives + (p.x - p.true_positives), p.x);
                prop_assert!(p.recall >= prev);
                prev = p.recall;
            }
            let base_rate = c.total_attacks as f64 / labels.len() as f64;
            prop_assert!((c.points.last().unwrap().precision - base_rate).abs() < 1e-12);
            let det = det_points(&c.points);
            prop_assert!(det.windows(2).all(|w| w[1].missed_detection_rate <= w[0].missed_detection_rate));
        }
    }
}
