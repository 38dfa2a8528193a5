//! Acceptance criteria. Each test prints one PASS/FAIL line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1` to see them.

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddoslens::classifier::{train_cart, BowVector, Node, TweetFilter};
use ddoslens::corpus::Label;
use ddoslens::detector::{detect, DetectorSettings};
use ddoslens::divergence::{kl_divergence, rank_attack_topics, symmetric_kl, DEFAULT_EPSILON};
use ddoslens::eval::{filtered_precision_recall_curve, generate_synthetic, precision_recall_curve, SynthSpec};
use ddoslens::lda::{num_topics, train, LdaHyperparams, LdaModel, TopicDistribution, Vocabulary};
use ddoslens::pipeline::{run_detect, PipelineConfig};
use ddoslens::scoring::tweet_score;
use ddoslens::severity::{severity_level, SeverityInput};

fn report(id: &str, what: &str, ok: bool, detail: String) {
    println!("[{}] {id}: {what} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn acceptance_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_background: 500,
        n_attack: 100,
        background_vocab_size: 200,
        attack_vocab_size: 30,
        tokens_per_doc: 12,
        overlap_fraction: 0.3,
        seed,
    }
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> TopicDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    TopicDistribution::from_weights(w).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Divergence oracle equivalence

/// Direct evaluation: sorted union vocabulary, epsilon for missing tokens,
/// renormalize, all pairs, first minimum.
fn brute_force_rank(
    a: (&[&str], &[Vec<f64>]),
    b: (&[&str], &[Vec<f64>]),
    eps: f64,
) -> Vec<(usize, f64, usize)> {
    let mut union: Vec<&str> = a.0.iter().chain(b.0.iter()).copied().collect();
    union.sort();
    union.dedup();
    let expand = |tokens: &[&str], row: &[f64]| -> Vec<f64> {
        let missing = union.iter().any(|u| !tokens.contains(u));
        let raw: Vec<f64> = union
            .iter()
            .map(|u| tokens.iter().position(|t| t == u).map_or(eps, |i| row[i]))
            .collect();
        if !missing {
            return raw;
        }
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    };
    let kl = |x: &[f64], y: &[f64]| -> f64 {
        x.iter().zip(y).filter(|(xi, _)| **xi > 0.0).map(|(xi, yi)| xi * (xi / yi).ln()).sum()
    };
    let ta: Vec<Vec<f64>> = a.1.iter().map(|r| expand(a.0, r)).collect();
    let tb: Vec<Vec<f64>> = b.1.iter().map(|r| expand(b.0, r)).collect();
    let mut out: Vec<(usize, f64, usize)> = ta
        .iter()
        .enumerate()
        .map(|(j, tj)| {
            let mut best = (j, f64::INFINITY, 0);
            for (m, tm) in tb.iter().enumerate() {
                let s = kl(tj, tm) + kl(tm, tj);
                if s < best.1 {
                    best = (j, s, m);
                }
            }
            best
        })
        .collect();
    // descending skl, lower index first on ties; insertion sort keeps it obviously stable
    for i in 1..out.len() {
        let mut k = i;
        while k > 0 && out[k].1 > out[k - 1].1 {
            out.swap(k, k - 1);
            k -= 1;
        }
    }
    out
}

fn small_model(tokens: &[&str], rows: &[Vec<f64>]) -> LdaModel {
    let vocab: Vocabulary = tokens.iter().map(|t| t.to_string()).collect();
    let topics = rows.iter().map(|r| TopicDistribution::new(r.clone()).unwrap()).collect();
    LdaModel::from_parts(vocab, topics, vec![], LdaHyperparams::new(rows.len())).unwrap()
}

#[test]
fn c1_divergence_matches_brute_force() {
    let start = Instant::now();
    let pool = ["w", "x", "y", "z"];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0;
    let mut worst = 0.0f64;
    let mut index_mismatch = 0;
    for _ in 0..2000 {
        let pick = |rng: &mut ChaCha8Rng| -> Vec<&str> {
            let n = rng.gen_range(1..=4);
            let mut v: Vec<&str> = pool.to_vec();
            for i in (1..v.len()).rev() {
                let j = rng.gen_range(0..=i);
                v.swap(i, j);
            }
            v.truncate(n);
            v
        };
        let (va, vb) = (pick(&mut rng), pick(&mut rng));
        let (ka, kb) = (rng.gen_range(2..=3), rng.gen_range(2..=3));
        let ra: Vec<Vec<f64>> = (0..ka).map(|_| random_dist(&mut rng, va.len()).probs().to_vec()).collect();
        let rb: Vec<Vec<f64>> = (0..kb).map(|_| random_dist(&mut rng, vb.len()).probs().to_vec()).collect();
        let eps = if rng.gen_bool(0.5) { DEFAULT_EPSILON } else { 1e-3 };

        let got = rank_attack_topics(&small_model(&va, &ra), &small_model(&vb, &rb), eps);
        let want = brute_force_rank((&va, &ra), (&vb, &rb), eps);
        for (g, w) in got.iter().zip(&want) {
            if g.topic_index != w.0 || g.matched_baseline_index != w.2 {
                index_mismatch += 1;
            }
            worst = worst.max((g.skl - w.1).abs());
        }
        cases += 1;
    }
    let elapsed = start.elapsed();
    let ok = index_mismatch == 0 && worst <= 1e-12 && elapsed < Duration::from_secs(1);
    report(
        "C1",
        "rank_attack_topics equals brute-force enumeration",
        ok,
        format!("{cases} cases, index mismatches {index_mismatch}, max |dskl| {worst:.3e}, {elapsed:?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 2. Synthetic detection quality

#[test]
fn c2_synthetic_detection_quality() {
    let start = Instant::now();
    let (baseline, event) = generate_synthetic(&acceptance_spec(7)).unwrap();
    let det = detect(&baseline, &event, &DetectorSettings::default()).unwrap();
    let xs: Vec<usize> = (1..=event.len()).collect();
    let curve = precision_recall_curve(&det.ranked, &xs).unwrap();
    let p50 = curve.points[49].precision;
    let p100 = curve.points[99].precision;
    let monotone = curve.points.windows(2).all(|w| w[1].recall >= w[0].recall);
    let elapsed = start.elapsed();
    let ok = p50 >= 0.9 && p100 >= 0.8 && monotone && elapsed < Duration::from_secs(60);
    report(
        "C2",
        "synthetic precision@50 >= 0.9, precision@100 >= 0.8, recall non-decreasing",
        ok,
        format!("p@50 {p50:.3}, p@100 {p100:.3}, monotone {monotone}, {elapsed:?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 3. Generalization protocol

#[test]
fn c3_tree_trades_recall_for_precision_across_entities() {
    let start = Instant::now();
    let (_, train_event) = generate_synthetic(&acceptance_spec(7)).unwrap();
    let filter = TweetFilter::train(&train_event, 4).unwrap();

    let (baseline, event) = generate_synthetic(&acceptance_spec(11)).unwrap();
    let det = detect(&baseline, &event, &DetectorSettings::default()).unwrap();
    let xs = [25, 100];
    let plain = precision_recall_curve(&det.ranked, &xs).unwrap();
    let keep: Vec<bool> = det.ranked.iter().map(|r| filter.predict(&r.tweet).is_attack()).collect();
    let filtered = filtered_precision_recall_curve(&det.ranked, &keep, &xs).unwrap();

    let (p25, fp25) = (plain.points[0].precision, filtered.points[0].precision);
    let (r100, fr100) = (plain.points[1].recall, filtered.points[1].recall);
    let elapsed = start.elapsed();
    let ok = fp25 >= p25 && fr100 <= r100 && elapsed < Duration::from_secs(120);
    report(
        "C3",
        "tree filter: precision@25 not lower, recall@100 not higher (train seed 7, test seed 11)",
        ok,
        format!(
            "p@25 {p25:.3} -> {fp25:.3} ({} kept), r@100 {r100:.3} -> {fr100:.3}, {elapsed:?}",
            filtered.points[0].labeled
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 4. Severity arithmetic

#[test]
fn c4_severity_endpoints() {
    let input = |beta| SeverityInput { n_attack: 40, n_all: 590, n_user: 308_300, beta };
    let hi = severity_level(&input(1.0)).unwrap();
    let lo = severity_level(&input(0.0)).unwrap();
    let ok = (hi - 0.067797).abs() <= 1e-5 && (lo - 1.2974e-4).abs() <= 1e-8;
    report("C4", "severity endpoints for 40 / 590 / 308300", ok, format!("beta=1 {hi:.6}, beta=0 {lo:.4e}"));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 5. Topic-count formula

#[test]
fn c5_topic_count() {
    let a = num_topics(1180, 10.0).unwrap();
    let b = num_topics(1, 10.0).unwrap();
    let mut monotone = true;
    let mut prev = 0;
    for n in 1..=20_000 {
        let k = num_topics(n, 10.0).unwrap();
        monotone &= k >= prev;
        prev = k;
    }
    let ok = a == 30 && b == 2 && monotone;
    report("C5", "num_topics(1180,10)=30, num_topics(1,10)=2, non-decreasing", ok, format!("{a}, {b}, monotone {monotone}"));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 6. Invariant suites

#[test]
fn c6_invariant_suites() {
    let mut failures: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // normalization of trained models and inferred mixtures
    let (baseline, event) = generate_synthetic(&SynthSpec { n_background: 120, n_attack: 40, seed: 5, ..SynthSpec::default() }).unwrap();
    let hyper = LdaHyperparams::new(6).with_iterations(60).with_seed(3);
    let model = train(&event, &hyper).unwrap();
    let mut rows: Vec<TopicDistribution> = model.topic_word().to_vec();
    rows.extend(model.doc_topic().iter().cloned());
    rows.extend(event.tweets.iter().take(30).enumerate().map(|(i, t)| model.infer_doc_topics(&t.tokens, 20, i as u64)));
    let worst = rows.iter().map(|r| (r.probs().iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    if worst > 1e-9 {
        failures.push(format!("normalization off by {worst:e}"));
    }

    // KL non-negativity and SKL symmetry on 10^4 random pairs
    let mut kl_neg = 0;
    let mut asym = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let (p, q) = (random_dist(&mut rng, n), random_dist(&mut rng, n));
        if kl_divergence(&p, &q).unwrap() < 0.0 {
            kl_neg += 1;
        }
        asym = asym.max((symmetric_kl(&p, &q).unwrap() - symmetric_kl(&q, &p).unwrap()).abs());
    }
    if kl_neg > 0 {
        failures.push(format!("{kl_neg} negative KL values"));
    }
    if asym > 1e-12 {
        failures.push(format!("SKL asymmetry {asym:e}"));
    }

    // self-match
    let self_scores = rank_attack_topics(&model, &model, DEFAULT_EPSILON);
    if self_scores.iter().any(|s| s.skl != 0.0) {
        failures.push("self-match skl not zero".into());
    }

    // score linearity and bound, against a real ranking
    let other = train(&baseline, &LdaHyperparams::new(5).with_iterations(60).with_seed(4)).unwrap();
    let scores = rank_attack_topics(&model, &other, DEFAULT_EPSILON);
    let max_skl = scores.iter().map(|s| s.skl).fold(0.0, f64::max);
    let doubled: Vec<_> = scores.iter().map(|s| ddoslens::divergence::TopicScore { skl: 2.0 * s.skl, ..*s }).collect();
    for r in rows.iter().skip(model.num_topics()).filter(|r| r.domain_size() == model.num_topics()) {
        let s = tweet_score(r, &scores).unwrap();
        let s2 = tweet_score(r, &doubled).unwrap();
        if !(0.0..=max_skl * (1.0 + 1e-12)).contains(&s) || (s2 - 2.0 * s).abs() > 1e-9 * (1.0 + s2) {
            failures.push(format!("score linearity/bound broken: {s} vs {s2}, max {max_skl}"));
            break;
        }
    }

    // CART leaf size on 100 random training sets
    let mut small_leaves = 0;
    for _ in 0..100 {
        let n = rng.gen_range(8..80);
        let samples: Vec<(BowVector, Label)> = (0..n)
            .map(|_| {
                let counts: Vec<(usize, u32)> = (0..rng.gen_range(0..5)).map(|_| (rng.gen_range(0..10), rng.gen_range(1..4))).collect();
                let label = if rng.gen_bool(0.4) { Label::Attack } else { Label::NonAttack };
                (BowVector::from_counts(counts), label)
            })
            .collect();
        let tree = train_cart(&samples, 4).unwrap();
        small_leaves += tree
            .leaves()
            .filter(|l| matches!(l, Node::Leaf { samples, .. } if *samples < 4))
            .count();
    }
    if small_leaves > 0 {
        failures.push(format!("{small_leaves} leaves under 4 samples"));
    }

    // counting identity precision(x) * x in N
    let mut runner = TestRunner::new(Config { cases: 200, ..Config::default() });
    let det = detect(
        &baseline,
        &event,
        &DetectorSettings { iterations: 40, inference_iterations: 10, ..DetectorSettings::default() },
    )
    .unwrap();
    let counting = runner.run(&(1usize..=det.ranked.len()), |x| {
        let c = precision_recall_curve(&det.ranked, &[x]).unwrap();
        let tp = c.points[0].precision * x as f64;
        prop_assert!((tp - tp.round()).abs() < 1e-9);
        Ok(())
    });
    if let Err(e) = counting {
        failures.push(format!("counting identity: {e}"));
    }

    let ok = failures.is_empty();
    report(
        "C6",
        "normalization, KL >= 0, SKL symmetry, self-match, score linearity/bound, leaf size, counting identity",
        ok,
        if ok { "all hold".to_string() } else { failures.join("; ") },
    );
    assert!(ok, "{failures:?}");
}

// ---------------------------------------------------------------------------
// 7. Determinism

#[test]
fn c7_detect_is_deterministic_and_models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (baseline, event) = generate_synthetic(&SynthSpec { n_background: 200, n_attack: 40, seed: 13, ..SynthSpec::default() }).unwrap();
    let bpath = dir.path().join("baseline.jsonl");
    let epath = dir.path().join("event.jsonl");
    ddoslens::corpus::write_corpus(&bpath, &baseline).unwrap();
    ddoslens::corpus::write_corpus(&epath, &event).unwrap();

    let config = |out: &str| {
        let mut c = PipelineConfig::default();
        c.baseline = Some(bpath.clone());
        c.event = Some(epath.clone());
        c.out_dir = dir.path().join(out);
        c.n_user = Some(100_000);
        c.detector.iterations = 300;
        c
    };
    let r1 = run_detect(&config("run1")).unwrap();
    let r2 = run_detect(&config("run2")).unwrap();
    let mut identical = r1.written.len() == r2.written.len();
    for (a, b) in r1.written.iter().zip(&r2.written) {
        identical &= std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
    }

    let mut reload = config("run3");
    reload.event_model = Some(dir.path().join("run1/model_event.json"));
    reload.baseline_model = Some(dir.path().join("run1/model_baseline.json"));
    let r3 = run_detect(&reload).unwrap();
    let same_scores = r1.ranked.len() == r3.ranked.len()
        && r1.ranked.iter().zip(&r3.ranked).all(|(a, b)| a.score.to_bits() == b.score.to_bits() && a.tweet.id == b.tweet.id);

    let ok = identical && same_scores;
    report(
        "C7",
        "two detect runs byte-identical; save/load preserves every ranked score",
        ok,
        format!("{} files identical: {identical}, reloaded scores exact: {same_scores}", r1.written.len()),
    );
    assert!(ok);
}
