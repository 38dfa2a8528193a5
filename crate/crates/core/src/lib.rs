//! Detection of denial-of-service events in short-text streams.
//!
//! Two time windows of tweets (a baseline window and an event window) each
//! get an LDA topic model. Event topics are scored by how far they sit from
//! their closest baseline topic under symmetric KL divergence, each event
//! tweet is scored by its topic mixture against those novelty scores, and
//! the top of the resulting ranking is taken as attack tweets. An optional
//! CART filter removes new-event tweets that are not attacks, and a severity
//! score summarizes the share of volume and audience the attack reached.
//!
//! ```no_run
//! use ddoslens::corpus::{load_corpus, TokenizerConfig, WindowTag};
//! use ddoslens::detector::{detect, DetectorSettings};
//!
//! let tok = TokenizerConfig::default();
//! let baseline = load_corpus("baseline.jsonl", WindowTag::Baseline, &tok)?;
//! let event = load_corpus("event.jsonl", WindowTag::Event, &tok)?;
//! let det = detect(&baseline, &event, &DetectorSettings::default())?;
//! for r in det.ranked.iter().take(5) {
//!     println!("{:.4} {}", r.score, r.tweet.raw_text);
//! }
//! # Ok::<(), ddoslens::Error>(())
//! ```

pub mod classifier;
pub mod corpus;
pub mod detector;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod lda;
pub mod pipeline;
pub mod scoring;
pub mod severity;
pub mod vocab;

pub use error::{Error, Result, Stage};
