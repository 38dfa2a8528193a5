use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddoslens::classifier::{TweetFilter, DEFAULT_MIN_LEAF};
use ddoslens::corpus::{load_corpus, write_corpus, TokenizerConfig, WindowTag};
use ddoslens::eval::{generate_synthetic, SynthSpec};
use ddoslens::pipeline::{run_detect, run_eval, run_sweep, PipelineConfig};
use ddoslens::severity::{severity_report, SeverityInput, DEFAULT_SEVERITY_BETA};
use ddoslens::{Error, Result};

#[derive(Parser)]
#[command(name = "ddoslens", version, about = "Detect and grade denial-of-service events from tweet windows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank event-window tweets and compute severity.
    Detect(WindowArgs),
    /// Precision/recall and DET curves on a labeled event window.
    Eval(WindowArgs),
    /// Topic-count scale sweep, optionally with and without the tree filter.
    Sweep(WindowArgs),
    /// Write a synthetic baseline/event pair.
    Synth(SynthArgs),
    /// Train the CART filter on a labeled corpus.
    TrainTree(TrainTreeArgs),
    /// Evaluate the severity formula directly.
    Severity(SeverityArgs),
}

#[derive(Args)]
struct WindowArgs {
    /// Baseline-window corpus (JSON lines).
    baseline: PathBuf,
    /// Event-window corpus (JSON lines).
    event: PathBuf,
    /// Flat key = value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    log_base: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    inference_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, conflicts_with = "score_threshold")]
    top_x: Option<usize>,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Trained filter file; turns the tree on.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Labeled corpus to train the filter from; turns the tree on.
    #[arg(long)]
    tree_training: Option<PathBuf>,
    #[arg(long)]
    severity_beta: Option<f64>,
    #[arg(long)]
    n_user: Option<u64>,
    #[arg(long)]
    event_model: Option<PathBuf>,
    #[arg(long)]
    baseline_model: Option<PathBuf>,
    /// Evaluation grid, e.g. `1..100`.
    #[arg(long)]
    xs: Option<String>,
    /// Sweep scales, e.g. `5..14`.
    #[arg(long)]
    scales: Option<String>,
}

impl WindowArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        let path = |p: &PathBuf| p.display().to_string();
        let mut overrides: Vec<(&str, String)> = vec![
            ("baseline", path(&self.baseline)),
            ("event", path(&self.event)),
        ];
        let mut push = |key: &'static str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((key, v));
            }
        };
        push("out_dir", self.out_dir.as_ref().map(path));
        push("topic_count_scale", self.scale.map(|v| v.to_string()));
        push("log_base", self.log_base.map(|v| v.to_string()));
        push("iterations", self.iterations.map(|v| v.to_string()));
        push("inference_iterations", self.inference_iterations.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("epsilon", self.epsilon.map(|v| v.to_string()));
        push("stopwords", self.stopwords.as_ref().map(path));
        push("top_x", self.top_x.map(|v| v.to_string()));
        push("score_threshold", self.score_threshold.map(|v| v.to_string()));
        push("tree", self.tree.as_ref().map(path));
        push("tree_training", self.tree_training.as_ref().map(path));
        push("severity_beta", self.severity_beta.map(|v| v.to_string()));
        push("n_user", self.n_user.map(|v| v.to_string()));
        push("event_model", self.event_model.as_ref().map(path));
        push("baseline_model", self.baseline_model.as_ref().map(path));
        push("xs", self.xs.clone());
        push("scales", self.scales.clone());
        if self.tree.is_some() || self.tree_training.is_some() {
            push("use_tree", Some("true".into()));
        }
        for (k, v) in overrides {
            cfg.set(k, &v)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().n_background)]
    n_background: usize,
    #[arg(long, default_value_t = SynthSpec::default().n_attack)]
    n_attack: usize,
    #[arg(long, default_value_t = SynthSpec::default().background_vocab_size)]
    background_vocab: usize,
    #[arg(long, default_value_t = SynthSpec::default().attack_vocab_size)]
    attack_vocab: usize,
    #[arg(long, default_value_t = SynthSpec::default().tokens_per_doc)]
    tokens_per_doc: usize,
    #[arg(long, default_value_t = SynthSpec::default().overlap_fraction)]
    overlap: f64,
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    seed: u64,
}

#[derive(Args)]
struct TrainTreeArgs {
    /// Labeled corpus (every record needs a label).
    labeled: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_LEAF)]
    min_leaf: usize,
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct SeverityArgs {
    #[arg(long)]
    n_attack: u64,
    #[arg(long)]
    n_all: u64,
    #[arg(long)]
    n_user: u64,
    #[arg(long, default_value_t = DEFAULT_SEVERITY_BETA)]
    beta: f64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect(args) => {
            let report = run_detect(&args.config()?)?;
            eprintln!(
                "ranked {} tweets, {} labeled attack",
                report.ranked.len(),
                report.attack.len()
            );
            for p in &report.written {
                println!("{}", p.display());
            }
        }
        Command::Eval(args) => {
            let report = run_eval(&args.config()?)?;
            if report.no_gold_attacks {
                eprintln!("warning: no gold attack tweets; recall reported as 0");
            }
            for p in &report.written {
                println!("{}", p.display());
            }
        }
        Command::Sweep(args) => {
            let cfg = args.config()?;
            let results = run_sweep(&cfg)?;
            eprintln!("{} sweep cells", results.len());
            println!("{}", cfg.out_dir.join("sweep.csv").display());
        }
        Command::Synth(a) => {
            let spec = SynthSpec {
                n_background: a.n_background,
                n_attack: a.n_attack,
                background_vocab_size: a.background_vocab,
                attack_vocab_size: a.attack_vocab,
                tokens_per_doc: a.tokens_per_doc,
                overlap_fraction: a.overlap,
                seed: a.seed,
            };
            let (baseline, event) = generate_synthetic(&spec)?;
            std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io { path: a.out_dir.clone(), source: e })?;
            let bpath = a.out_dir.join("baseline.jsonl");
            let epath = a.out_dir.join("event.jsonl");
            write_corpus(&bpath, &baseline)?;
            write_corpus(&epath, &event)?;
            println!("{}\n{}", bpath.display(), epath.display());
        }
        Command::TrainTree(a) => {
            let tok = match &a.stopwords {
                Some(p) => TokenizerConfig::from_stopword_file(p)?,
                None => TokenizerConfig::default(),
            };
            let corpus = load_corpus(&a.labeled, WindowTag::Event, &tok)?;
            let filter = TweetFilter::train(&corpus, a.min_leaf)?;
            filter.save(&a.out)?;
            eprintln!("{} nodes", filter.tree.nodes().len());
            println!("{}", a.out.display());
        }
        Command::Severity(a) => {
            let report = severity_report(&SeverityInput {
                n_attack: a.n_attack,
                n_all: a.n_all,
                n_user: a.n_user,
                beta: a.beta,
            })?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
