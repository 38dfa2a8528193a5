//! End-to-end orchestration behind the CLI.
//!
//! Configuration comes from a flat `key = value` file (blank lines and
//! `#` comments ignored) overlaid with command-line overrides. Every key
//! has a default, so only the two corpus paths are needed to run `detect`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::{TweetFilter, DEFAULT_MIN_LEAF};
use crate::corpus::{load_corpus, Corpus, Label, TokenizerConfig, WindowTag};
use crate::detector::{score_with_models, train_models, DetectorSettings};
use crate::divergence::write_topic_table;
use crate::error::{Error, Result, Stage, StageExt};
use crate::eval::{
    det_points, filtered_precision_recall_curve, parameter_sweep, parse_grid, parse_scales,
    precision_recall_curve, write_curve, write_det, write_sweep, EvalPoint, SweepResult,
};
use crate::lda::LdaModel;
use crate::scoring::{write_ranked, RankedTweet};
use crate::severity::{severity_report, SeverityInput, SeverityReport, DEFAULT_SEVERITY_BETA};

/// Number of tweets labeled Attack when neither `top_x` nor
/// `score_threshold` is configured and no tree is in use.
pub const DEFAULT_TOP_X: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorSettings,
    pub top_x: Option<usize>,
    pub score_threshold: Option<f64>,
    pub use_tree: bool,
    /// Trained filter file (see `train-tree`).
    pub tree: Option<PathBuf>,
    /// Labeled corpus to train the filter from when no `tree` file is given.
    pub tree_training: Option<PathBuf>,
    pub min_leaf: usize,
    pub severity_beta: f64,
    pub n_user: Option<u64>,
    pub baseline: Option<PathBuf>,
    pub event: Option<PathBuf>,
    pub event_model: Option<PathBuf>,
    pub baseline_model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub keep_urls: bool,
    pub strip_punctuation: bool,
    pub xs: Vec<usize>,
    pub scales: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorSettings::default(),
            top_x: None,
            score_threshold: None,
            use_tree: false,
            tree: None,
            tree_training: None,
            min_leaf: DEFAULT_MIN_LEAF,
            severity_beta: DEFAULT_SEVERITY_BETA,
            n_user: None,
            baseline: None,
            event: None,
            event_model: None,
            baseline_model: None,
            out_dir: PathBuf::from("ddoslens-out"),
            stopwords: None,
            keep_urls: true,
            strip_punctuation: true,
            xs: (1..=100).collect(),
            scales: (5..=14).map(f64::from).collect(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "topic_count_scale", "log_base", "dirichlet_alpha", "dirichlet_beta", "iterations",
        "inference_iterations", "seed", "epsilon", "top_x", "score_threshold", "use_tree", "tree",
        "tree_training", "min_leaf", "severity_beta", "n_user", "baseline", "event", "event_model",
        "baseline_model", "out_dir", "stopwords", "keep_urls", "strip_punctuation", "xs", "scales",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let d = &mut self.detector;
        match key {
            "topic_count_scale" => d.topic_count_scale = parse(key, value)?,
            "log_base" => d.log_base = parse(key, value)?,
            "dirichlet_alpha" => d.dirichlet_alpha = optional(key, value)?,
            "dirichlet_beta" => d.dirichlet_beta = parse(key, value)?,
            "iterations" => d.iterations = parse(key, value)?,
            "inference_iterations" => d.inference_iterations = parse(key, value)?,
            "seed" => d.seed = parse(key, value)?,
            "epsilon" => d.epsilon = parse(key, value)?,
            "top_x" => self.top_x = optional(key, value)?,
            "score_threshold" => self.score_threshold = optional(key, value)?,
            "use_tree" => self.use_tree = parse_bool(key, value)?,
            "tree" => self.tree = optional_path(value),
            "tree_training" => self.tree_training = optional_path(value),
            "min_leaf" => self.min_leaf = parse(key, value)?,
            "severity_beta" => self.severity_beta = parse(key, value)?,
            "n_user" => self.n_user = optional(key, value)?,
            "baseline" => self.baseline = optional_path(value),
            "event" => self.event = optional_path(value),
            "event_model" => self.event_model = optional_path(value),
            "baseline_model" => self.baseline_model = optional_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "stopwords" => self.stopwords = optional_path(value),
            "keep_urls" => self.keep_urls = parse_bool(key, value)?,
            "strip_punctuation" => self.strip_punctuation = parse_bool(key, value)?,
            "xs" => self.xs = if value.is_empty() { Vec::new() } else { parse_grid(value)? },
            "scales" => self.scales = parse_scales(value)?,
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedRecord {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_x.is_some() && self.score_threshold.is_some() {
            return Err(Error::invalid("set at most one of top_x and score_threshold"));
        }
        if self.use_tree && self.tree.is_none() && self.tree_training.is_none() {
            return Err(Error::invalid("use_tree needs either tree or tree_training"));
        }
        if !(0.0..=1.0).contains(&self.severity_beta) {
            return Err(Error::invalid("severity_beta must lie in [0, 1]"));
        }
        if self.detector.epsilon <= 0.0 || !self.detector.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }

    pub fn tokenizer(&self) -> Result<TokenizerConfig> {
        let mut tok = match &self.stopwords {
            Some(p) => TokenizerConfig::from_stopword_file(p)?,
            None => TokenizerConfig::default(),
        };
        tok.keep_urls = self.keep_urls;
        tok.strip_punctuation = self.strip_punctuation;
        Ok(tok)
    }

    fn required(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        path.clone().ok_or_else(|| Error::invalid(format!("no {what} corpus configured")))
    }

    fn load_windows(&self, tok: &TokenizerConfig) -> Result<(Corpus, Corpus)> {
        let bpath = self.required(&self.baseline, "baseline").stage(Stage::Config)?;
        let epath = self.required(&self.event, "event").stage(Stage::Config)?;
        let baseline = load_corpus(bpath, WindowTag::Baseline, tok).stage(Stage::LoadBaseline)?;
        let event = load_corpus(epath, WindowTag::Event, tok).stage(Stage::LoadEvent)?;
        Ok((baseline, event))
    }

    fn filter(&self, tok: &TokenizerConfig) -> Result<Option<TweetFilter>> {
        if !self.use_tree {
            return Ok(None);
        }
        let filter = match (&self.tree, &self.tree_training) {
            (Some(p), _) => TweetFilter::load(p)?,
            (None, Some(p)) => {
                let training = load_corpus(p, WindowTag::Event, tok)?;
                TweetFilter::train(&training, self.min_leaf)?
            }
            (None, None) => return Err(Error::invalid("use_tree needs either tree or tree_training")),
        };
        Ok(Some(filter))
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone)]
pub struct DetectReport {
    pub ranked: Vec<RankedTweet>,
    pub attack: Vec<RankedTweet>,
    pub n_all: usize,
    pub severity: Option<SeverityReport>,
    pub written: Vec<PathBuf>,
}

/// Tweets labeled Attack under the configured rule.
fn select_attack(cfg: &PipelineConfig, ranked: &[RankedTweet], filter: Option<&TweetFilter>) -> Result<Vec<RankedTweet>> {
    let candidates: &[RankedTweet] = match (cfg.top_x, cfg.score_threshold) {
        (Some(x), _) => {
            if x > ranked.len() {
                return Err(Error::invalid(format!("top_x = {x} exceeds the {} ranked tweets", ranked.len())));
            }
            &ranked[..x]
        }
        (None, Some(t)) => {
            let n = ranked.iter().take_while(|r| r.score > t).count();
            &ranked[..n]
        }
        (None, None) if filter.is_some() => ranked,
        (None, None) => &ranked[..DEFAULT_TOP_X.min(ranked.len())],
    };
    Ok(match filter {
        Some(f) => f.filter(candidates),
        None => candidates.to_vec(),
    })
}

fn severity_text(n_attack: usize, n_all: usize, cfg: &PipelineConfig) -> Result<(String, Option<SeverityReport>)> {
    match cfg.n_user {
        Some(n_user) => {
            let report = severity_report(&SeverityInput {
                n_attack: n_attack as u64,
                n_all: n_all as u64,
                n_user,
                beta: cfg.severity_beta,
            })?;
            Ok((report.to_string(), Some(report)))
        }
        None => {
            let share = n_attack as f64 / n_all as f64;
            let text = format!(
                "n_attack={n_attack}\nn_all={n_all}\nn_user=unset\nbeta={}\nseverity_beta1={share}\nseverity_beta0=unset\nseverity=unset\n",
                cfg.severity_beta
            );
            Ok((text, None))
        }
    }
}

/// Runs the full detection pipeline and writes its artifacts to `out_dir`:
/// `model_event.json`, `model_baseline.json`, `topics.csv`, `ranked.csv`,
/// `attack.csv` and `severity.txt`.
pub fn run_detect(cfg: &PipelineConfig) -> Result<DetectReport> {
    cfg.validate().stage(Stage::Config)?;
    let tok = cfg.tokenizer().stage(Stage::Config)?;
    let (baseline, event) = cfg.load_windows(&tok)?;
    let filter = cfg.filter(&tok).stage(Stage::Classifier)?;

    let (event_model, baseline_model) = match (&cfg.event_model, &cfg.baseline_model) {
        (Some(ep), Some(bp)) => (
            LdaModel::load(ep).stage(Stage::TrainEvent)?,
            LdaModel::load(bp).stage(Stage::TrainBaseline)?,
        ),
        (None, None) => train_models(&baseline, &event, &cfg.detector)?,
        _ => {
            return Err(Error::invalid("event_model and baseline_model must be given together"))
                .stage(Stage::Config)
        }
    };
    let det = score_with_models(&event, event_model, baseline_model, &cfg.detector)?;

    let out = &cfg.out_dir;
    create_out_dir(out).stage(Stage::Report)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = out.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let attack = select_attack(cfg, &det.ranked, filter.as_ref()).stage(Stage::Classifier)?;
    let (sev_text, severity) = severity_text(attack.len(), event.len(), cfg).stage(Stage::Severity)?;

    (|| -> Result<()> {
        emit("model_event.json", det.event_model.to_json()?.into_bytes())?;
        emit("model_baseline.json", det.baseline_model.to_json()?.into_bytes())?;
        emit("topics.csv", csv_bytes(|b| write_topic_table(b, &det.topic_scores, &det.event_model))?)?;
        emit("ranked.csv", csv_bytes(|b| write_ranked(b, &det.ranked))?)?;
        emit("attack.csv", csv_bytes(|b| write_ranked(b, &attack))?)?;
        emit("severity.txt", sev_text.into_bytes())?;
        Ok(())
    })()
    .stage(Stage::Report)?;

    Ok(DetectReport {
        ranked: det.ranked,
        attack,
        n_all: event.len(),
        severity,
        written,
    })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub curve: Vec<EvalPoint>,
    pub tree_curve: Option<Vec<EvalPoint>>,
    pub no_gold_attacks: bool,
    pub written: Vec<PathBuf>,
}

fn require_labels(corpus: &Corpus) -> Result<()> {
    match corpus.tweets.iter().find(|t| t.label == Label::Unlabeled) {
        Some(t) => Err(Error::UnlabeledTweet { id: t.id.clone() }),
        None => Ok(()),
    }
}

/// Precision/recall and DET outputs for one configuration: `curve.csv`,
/// `det.csv`, plus `curve_tree.csv` / `det_tree.csv` when the tree is on.
pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate().stage(Stage::Config)?;
    if cfg.xs.is_empty() {
        return Err(Error::EmptyGrid).stage(Stage::Config);
    }
    let tok = cfg.tokenizer().stage(Stage::Config)?;
    let (baseline, event) = cfg.load_windows(&tok)?;
    require_labels(&event).stage(Stage::LoadEvent)?;
    let filter = cfg.filter(&tok).stage(Stage::Classifier)?;

    let (ma, mb) = train_models(&baseline, &event, &cfg.detector)?;
    let det = score_with_models(&event, ma, mb, &cfg.detector)?;
    let plain = precision_recall_curve(&det.ranked, &cfg.xs).stage(Stage::Eval)?;
    let tree_curve = match &filter {
        Some(f) => {
            let keep: Vec<bool> = det.ranked.iter().map(|r| f.predict(&r.tweet).is_attack()).collect();
            Some(filtered_precision_recall_curve(&det.ranked, &keep, &cfg.xs).stage(Stage::Eval)?.points)
        }
        None => None,
    };

    let out = &cfg.out_dir;
    create_out_dir(out).stage(Stage::Report)?;
    let mut written = Vec::new();
    (|| -> Result<()> {
        let mut emit = |name: &str, curve: &[EvalPoint]| -> Result<()> {
            let path = out.join(format!("curve{name}.csv"));
            write_file(&path, &csv_bytes(|b| write_curve(b, curve))?)?;
            written.push(path);
            let path = out.join(format!("det{name}.csv"));
            write_file(&path, &csv_bytes(|b| write_det(b, &det_points(curve)))?)?;
            written.push(path);
            Ok(())
        };
        emit("", &plain.points)?;
        if let Some(tc) = &tree_curve {
            emit("_tree", tc)?;
        }
        Ok(())
    })()
    .stage(Stage::Report)?;

    Ok(EvalReport {
        curve: plain.points,
        tree_curve,
        no_gold_attacks: plain.no_gold_attacks,
        written,
    })
}

/// Cross product of `scales` and tree on/off (when `use_tree`), written to `sweep.csv`.
pub fn run_sweep(cfg: &PipelineConfig) -> Result<Vec<SweepResult>> {
    cfg.validate().stage(Stage::Config)?;
    if cfg.xs.is_empty() {
        return Err(Error::EmptyGrid).stage(Stage::Config);
    }
    let tok = cfg.tokenizer().stage(Stage::Config)?;
    let (baseline, event) = cfg.load_windows(&tok)?;
    require_labels(&event).stage(Stage::LoadEvent)?;
    let training = match (&cfg.tree_training, cfg.use_tree) {
        (Some(p), true) => Some(load_corpus(p, WindowTag::Event, &tok).stage(Stage::Classifier)?),
        (None, true) => {
            return Err(Error::invalid("sweep with the tree needs tree_training")).stage(Stage::Config)
        }
        _ => None,
    };
    let results = parameter_sweep(
        &baseline,
        &event,
        &cfg.scales,
        &cfg.xs,
        cfg.use_tree,
        training.as_ref(),
        &cfg.detector,
        cfg.min_leaf,
    )?;
    create_out_dir(&cfg.out_dir).stage(Stage::Report)?;
    let path = cfg.out_dir.join("sweep.csv");
    write_file(&path, &csv_bytes(|b| write_sweep(b, &results))?).stage(Stage::Report)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_overrides_defaults() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(
            "# comment\n\ntopic_count_scale = 7.5\nseed=42\ntop_x = 10\nxs = 1..5\nn_user = 308300\ndirichlet_alpha = none\n",
        )
        .unwrap();
        assert_eq!(cfg.detector.topic_count_scale, 7.5);
        assert_eq!(cfg.detector.seed, 42);
        assert_eq!(cfg.top_x, Some(10));
        assert_eq!(cfg.xs, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.n_user, Some(308_300));
        assert_eq!(cfg.detector.dirichlet_alpha, None);
    }

    #[test]
    fn config_errors_name_the_line() {
        let mut cfg = PipelineConfig::default();
        let err = cfg.apply_str("seed = 1\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }));
        let err = cfg.apply_str("no equals sign\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }));
        assert!(cfg.set("seed", "minus one").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = PipelineConfig::default();
        for key in PipelineConfig::KEYS {
            let value = match *key {
                "use_tree" | "keep_urls" | "strip_punctuation" => "false",
                "xs" => "1..3",
                "scales" => "5,6",
                "dirichlet_alpha" | "top_x" | "score_threshold" | "n_user" => "none",
                "tree" | "tree_training" | "baseline" | "event" | "event_model" | "baseline_model"
                | "out_dir" | "stopwords" => "some/path",
                _ => "1",
            };
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn conflicting_labeling_rules() {
        let cfg = PipelineConfig { top_x: Some(3), score_threshold: Some(1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig { use_tree: true, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
