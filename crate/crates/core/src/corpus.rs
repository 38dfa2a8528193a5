//! Tweet ingestion and preprocessing.
//!
//! Raw records are line-delimited JSON objects with a required `text` field,
//! an optional `id` and an optional gold `label` (`"attack"` / `"non_attack"`).
//! Each record's text is normalized, lowercased, split on whitespace and
//! filtered against a stopword list before it reaches the topic models.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// The classic English stopword list.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "aren't", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can't", "cannot", "could", "couldn't", "did", "didn't", "do", "does", "doesn't",
    "doing", "don't", "down", "during", "each", "few", "for", "from", "further", "had", "hadn't",
    "has", "hasn't", "have", "haven't", "having", "he", "he'd", "he'll", "he's", "her", "here",
    "here's", "hers", "herself", "him", "himself", "his", "how", "how's", "i", "i'd", "i'll",
    "i'm", "i've", "if", "in", "into", "is", "isn't", "it", "it's", "its", "itself", "let's", "me",
    "more", "most", "mustn't", "my", "myself", "no", "nor", "not", "of", "off", "on", "once",
    "only", "or", "other", "ought", "our", "ours", "ourselves", "out", "over", "own", "same",
    "shan't", "she", "she'd", "she'll", "she's", "should", "shouldn't", "so", "some", "such",
    "than", "that", "that's", "the", "their", "theirs", "them", "themselves", "then", "there",
    "there's", "these", "they", "they'd", "they'll", "they're", "they've", "this", "those",
    "through", "to", "too", "under", "until", "up", "very", "was", "wasn't", "we", "we'd",
    "we'll", "we're", "we've", "were", "weren't", "what", "what's", "when", "when's", "where",
    "where's", "which", "while", "who", "who's", "whom", "why", "why's", "with", "won't", "would",
    "wouldn't", "you", "you'd", "you'll", "you're", "you've", "your", "yours", "yourself",
    "yourselves",
];

/// Gold annotation carried by a tweet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Attack,
    NonAttack,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn is_attack(self) -> bool {
        self == Label::Attack
    }
}

/// Which of the two compared time windows a corpus belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowTag {
    Baseline,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tweet {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

impl Tweet {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, cfg: &TokenizerConfig) -> Self {
        let raw_text = raw_text.into();
        let tokens = preprocess(&raw_text, cfg);
        Tweet {
            id: id.into(),
            raw_text,
            tokens,
            label: Label::Unlabeled,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub tweets: Vec<Tweet>,
    pub window_tag: WindowTag,
}

impl Corpus {
    pub fn new(tweets: Vec<Tweet>, window_tag: WindowTag) -> Self {
        Corpus { tweets, window_tag }
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.tweets.iter().map(|t| t.tokens.len()).sum()
    }

    pub fn token_lists(&self) -> impl Iterator<Item = &[String]> {
        self.tweets.iter().map(|t| t.tokens.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerConfig {
    stopwords: BTreeSet<String>,
    pub keep_urls: bool,
    pub strip_punctuation: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig::with_stopwords(DEFAULT_STOPWORDS.iter().copied())
    }
}

impl TokenizerConfig {
    /// Stopwords are lowercased on the way in.
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let stopwords = words
            .into_iter()
            .map(|w| normalize_case(w.as_ref().trim()))
            .filter(|w| !w.is_empty())
            .collect();
        TokenizerConfig {
            stopwords,
            keep_urls: true,
            strip_punctuation: true,
        }
    }

    /// Reads a one-word-per-line stopword file; blank lines are ignored.
    pub fn from_stopword_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(TokenizerConfig::with_stopwords(text.lines()))
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }
}

// NFC, lowercase, NFC again. Characters with an uppercase property but no
// lowercase mapping (mathematical capitals and the like) are dropped so the
// result never carries uppercase characters.
fn normalize_case(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    lowered.nfc().filter(|c| !c.is_uppercase()).collect()
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://")
}

fn is_kept_edge_char(c: char) -> bool {
    c.is_alphanumeric() || c == '#' || c == '@'
}

/// Tokenizes one tweet: normalize, lowercase, split on whitespace, trim
/// punctuation off token edges (URLs excepted), drop stopwords.
pub fn preprocess(raw_text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let text = normalize_case(raw_text);
    let mut tokens = Vec::new();
    for piece in text.split_whitespace() {
        if is_url(piece) {
            if cfg.keep_urls {
                tokens.push(piece.to_string());
            }
            continue;
        }
        let token = if cfg.strip_punctuation {
            piece.trim_matches(|c: char| !is_kept_edge_char(c))
        } else {
            piece
        };
        if token.is_empty() || cfg.is_stopword(token) {
            continue;
        }
        tokens.push(token.to_string());
    }
    tokens
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    text: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

fn parse_label(value: Option<&str>, line: usize) -> Result<Label> {
    match value {
        None => Ok(Label::Unlabeled),
        Some("attack") => Ok(Label::Attack),
        Some("non_attack") => Ok(Label::NonAttack),
        Some(other) => Err(Error::MalformedRecord {
            line,
            message: format!("unknown label {other:?} (expected \"attack\" or \"non_attack\")"),
        }),
    }
}

/// Parses line-delimited records. Blank lines are skipped; records without
/// an `id` get their 1-based line number as id.
pub fn parse_corpus(text: &str, window_tag: WindowTag, cfg: &TokenizerConfig) -> Result<Corpus> {
    let mut tweets = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        let label = parse_label(record.label.as_deref(), line_no)?;
        let id = record.id.unwrap_or_else(|| line_no.to_string());
        tweets.push(Tweet::new(id, record.text, cfg).with_label(label));
    }
    if tweets.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus::new(tweets, window_tag))
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    window_tag: WindowTag,
    cfg: &TokenizerConfig,
) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, window_tag, cfg)
}

/// Writes a corpus back out in the ingestion format.
pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    #[derive(Serialize)]
    struct OutRecord<'a> {
        id: &'a str,
        text: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<&'static str>,
    }

    let path = path.as_ref();
    let mut out = String::new();
    for t in &corpus.tweets {
        let label = match t.label {
            Label::Attack => Some("attack"),
            Label::NonAttack => Some("non_attack"),
            Label::Unlabeled => None,
        };
        let rec = OutRecord {
            id: &t.id,
            text: &t.raw_text,
            label,
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
