//! Optional CART filter over bag-of-words counts.
//!
//! Trained on annotated tweets from a different entity than the one being
//! ranked; applied to the ranked list to drop tweets that are new events but
//! not attacks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, Tweet};
use crate::error::{Error, Result};
use crate::lda::Vocabulary;
use crate::scoring::RankedTweet;

pub const DEFAULT_MIN_LEAF: usize = 4;
pub const TREE_FORMAT_VERSION: u32 = 1;

/// Sparse token counts; only non-zero entries are stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BowVector {
    counts: BTreeMap<usize, u32>,
}

impl BowVector {
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(iter: I) -> Self {
        let counts = iter.into_iter().filter(|&(_, c)| c > 0).collect();
        BowVector { counts }
    }

    /// Count for `feature`; absent features read as 0.
    pub fn get(&self, feature: usize) -> u32 {
        self.counts.get(&feature).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&f, &c)| (f, c))
    }
}

/// Token counts over `vocab`; out-of-vocabulary tokens are dropped.
pub fn featurize(tweet: &Tweet, vocab: &Vocabulary) -> BowVector {
    featurize_tokens(&tweet.tokens, vocab)
}

pub fn featurize_tokens(tokens: &[String], vocab: &Vocabulary) -> BowVector {
    let mut counts = BTreeMap::new();
    for id in tokens.iter().filter_map(|t| vocab.id(t)) {
        *counts.entry(id).or_insert(0) += 1;
    }
    BowVector { counts }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `count <= threshold` go left.
    Split {
        feature: usize,
        threshold: u32,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
        samples: usize,
        attack: usize,
        non_attack: usize,
    },
}

/// Binary CART tree stored as an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub min_leaf: usize,
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }

    pub fn predict(&self, vec: &BowVector) -> Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if vec.get(*feature) <= *threshold { *left } else { *right };
                }
                Node::Leaf { label, .. } => return *label,
            }
        }
    }

    fn check_shape(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("tree has no nodes"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                    return Err(Error::invalid(format!("node {i} has invalid children")));
                }
            }
        }
        Ok(())
    }
}

pub fn predict(tree: &DecisionTree, vec: &BowVector) -> Label {
    tree.predict(vec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ClassCounts {
    attack: usize,
    non_attack: usize,
}

impl ClassCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::Attack => self.attack += 1,
            _ => self.non_attack += 1,
        }
    }

    fn total(self) -> usize {
        self.attack + self.non_attack
    }

    fn gini(self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let pa = self.attack as f64 / n;
        let pn = self.non_attack as f64 / n;
        1.0 - pa * pa - pn * pn
    }

    // ties go to NonAttack
    fn majority(self) -> Label {
        if self.attack > self.non_attack {
            Label::Attack
        } else {
            Label::NonAttack
        }
    }
}

const MIN_GAIN: f64 = 1e-12;

/// Greedy Gini CART. Features and thresholds are scanned in ascending order
/// and the first strictly-best split wins. A node becomes a leaf when no
/// split leaves `min_leaf` samples on both sides or none lowers impurity.
pub fn train_cart(samples: &[(BowVector, Label)], min_leaf: usize) -> Result<DecisionTree> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot train a tree on zero samples"));
    }
    if min_leaf == 0 {
        return Err(Error::invalid("min_leaf must be at least 1"));
    }
    if let Some((_, l)) = samples.iter().find(|(_, l)| *l == Label::Unlabeled) {
        return Err(Error::invalid(format!("training labels must be binary, found {l:?}")));
    }
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..samples.len()).collect();
    grow(samples, idx, min_leaf, &mut nodes);
    Ok(DecisionTree { min_leaf, nodes })
}

struct Split {
    feature: usize,
    threshold: u32,
    impurity: f64,
}

fn grow(samples: &[(BowVector, Label)], idx: Vec<usize>, min_leaf: usize, nodes: &mut Vec<Node>) -> usize {
    let mut counts = ClassCounts::default();
    for &i in &idx {
        counts.add(samples[i].1);
    }
    let at = nodes.len();
    let leaf = Node::Leaf {
        label: counts.majority(),
        samples: idx.len(),
        attack: counts.attack,
        non_attack: counts.non_attack,
    };
    nodes.push(leaf.clone());

    let parent = counts.gini();
    let best = match best_split(samples, &idx, min_leaf) {
        Some(s) if parent - s.impurity > MIN_GAIN => s,
        _ => return at,
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| samples[i].0.get(best.feature) <= best.threshold);
    let left = grow(samples, left_idx, min_leaf, nodes);
    let right = grow(samples, right_idx, min_leaf, nodes);
    nodes[at] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    at
}

fn best_split(samples: &[(BowVector, Label)], idx: &[usize], min_leaf: usize) -> Option<Split> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut features: Vec<usize> = idx.iter().flat_map(|&i| samples[i].0.counts.keys().copied()).collect();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    let mut column: Vec<(u32, Label)> = Vec::with_capacity(n);
    for f in features {
        column.clear();
        column.extend(idx.iter().map(|&i| (samples[i].0.get(f), samples[i].1)));
        column.sort_by_key(|&(v, _)| v);

        let mut total = ClassCounts::default();
        for &(_, l) in &column {
            total.add(l);
        }
        let mut left = ClassCounts::default();
        for pos in 0..n - 1 {
            left.add(column[pos].1);
            let (v, next) = (column[pos].0, column[pos + 1].0);
            if v == next {
                continue;
            }
            let n_left = pos + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right = ClassCounts {
                attack: total.attack - left.attack,
                non_attack: total.non_attack - left.non_attack,
            };
            let impurity = (n_left as f64 * left.gini() + right.total() as f64 * right.gini()) / n as f64;
            if best.as_ref().map_or(true, |b| impurity < b.impurity) {
                best = Some(Split {
                    feature: f,
                    // floor of the midpoint between consecutive distinct counts
                    threshold: (v + next) / 2,
                    impurity,
                });
            }
        }
    }
    best
}

/// Keeps the ranked tweets the tree predicts as attacks, in rank order.
pub fn filter_ranked(ranked: &[RankedTweet], tree: &DecisionTree, vocab: &Vocabulary) -> Vec<RankedTweet> {
    ranked
        .iter()
        .filter(|r| tree.predict(&featurize(&r.tweet, vocab)) == Label::Attack)
        .cloned()
        .collect()
}

/// A trained tree together with the vocabulary that defines its features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetFilter {
    pub vocab: Vocabulary,
    pub tree: DecisionTree,
}

#[derive(Serialize, Deserialize)]
struct FilterFile {
    format_version: u32,
    vocab: Vocabulary,
    tree: DecisionTree,
}

impl TweetFilter {
    /// Trains on every labeled tweet of `corpus`; unlabeled tweets are an error.
    pub fn train(corpus: &Corpus, min_leaf: usize) -> Result<Self> {
        if let Some(t) = corpus.tweets.iter().find(|t| t.label == Label::Unlabeled) {
            return Err(Error::UnlabeledTweet { id: t.id.clone() });
        }
        let vocab = Vocabulary::from_documents(corpus.token_lists());
        let samples: Vec<(BowVector, Label)> = corpus
            .tweets
            .iter()
            .map(|t| (featurize(t, &vocab), t.label))
            .collect();
        let tree = train_cart(&samples, min_leaf)?;
        Ok(TweetFilter { vocab, tree })
    }

    pub fn predict(&self, tweet: &Tweet) -> Label {
        self.tree.predict(&featurize(tweet, &self.vocab))
    }

    pub fn filter(&self, ranked: &[RankedTweet]) -> Vec<RankedTweet> {
        filter_ranked(ranked, &self.tree, &self.vocab)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = FilterFile {
            format_version: TREE_FORMAT_VERSION,
            vocab: self.vocab.clone(),
            tree: self.tree.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FilterFile = serde_json::from_str(text)?;
        if file.format_version != TREE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: TREE_FORMAT_VERSION,
            });
        }
        file.tree.check_shape()?;
        Ok(TweetFilter {
            vocab: file.vocab,
            tree: file.tree,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TweetFilter::from_json(&text)
    }
}
