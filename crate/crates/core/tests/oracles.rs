//! Library results against hand-computed, closed-form or independently
//! simulated values.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use leaning::classifier::{fit_model, ModelConfig, Prediction};
use leaning::corpus::{
    export_tweet_ids, load_posts, save_posts, split_train_valid, DatasetSplit, Format, Post, SplitName, TopicId,
};
use leaning::evaluate::{aggregate_user, curve_from_predictions, leave_one_topic_out, score, writer_shift_eval, CurveConfig};
use leaning::ingest::TopicMatcher;
use leaning::labeler::{label_users, LabelingThresholds};
use leaning::pipeline::{DatasetConfig, EvalConfig};
use leaning::seeds::{default_priors, default_topics, POLL_PERCENT};
use leaning::synth::{generate, CountDist, SynthConfig};
use leaning::{Error, Party};
use Party::*;

fn onehot(label: Party) -> Prediction {
    let mut scores = [0.0; 5];
    scores[label.index()] = 1.0;
    Prediction { label, scores }
}

#[test]
fn hand_counted_scores() {
    let r = score(&[PiS, PiS, PO, PO], &[PiS, PO, PO, PO]).unwrap();
    assert!((r.per_class[&PiS].f1 - 2.0 / 3.0).abs() < 1e-12);
    assert!((r.per_class[&PO].f1 - 0.8).abs() < 1e-12);
    assert!((r.micro_f1 - 0.75).abs() < 1e-12);
    assert_eq!(r.per_class[&Lewica].f1, 0.0);
    assert!(matches!(score(&[], &[]), Err(Error::EmptyEvaluation)));
    assert!(matches!(score(&[PiS], &[]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn aggregation_examples() {
    let votes = [PiS, PiS, PO, PiS, Lewica].map(onehot);
    assert_eq!(aggregate_user(&votes).unwrap(), PiS);

    // Two votes each; PO carries more probability mass.
    let tied = [
        Prediction { label: PiS, scores: [0.0, 0.3, 0.0, 0.6, 0.1] },
        Prediction { label: PiS, scores: [0.0, 0.4, 0.0, 0.5, 0.1] },
        Prediction { label: PO, scores: [0.0, 0.9, 0.0, 0.1, 0.0] },
        Prediction { label: PO, scores: [0.0, 0.8, 0.0, 0.2, 0.0] },
    ];
    assert_eq!(aggregate_user(&tied).unwrap(), PO);

    // Full tie falls back to spectrum order.
    assert_eq!(aggregate_user(&[onehot(Konfederacja), onehot(PL2050)]).unwrap(), PL2050);
    assert!(matches!(aggregate_user(&[]), Err(Error::EmptyPredictions)));
}

#[test]
fn curve_matches_exact_majority_vote_probabilities() {
    let acc = 0.7;
    let (n_users, n_posts, k_max) = (5000, 12, 9);
    let mut rng = ChaCha20Rng::seed_from_u64(44);
    let users: Vec<(Party, Vec<Prediction>)> = (0..n_users)
        .map(|_| {
            let truth = Party::ALL[rng.random_range(0..5)];
            let preds = (0..n_posts)
                .map(|_| {
                    if rng.random_bool(acc) {
                        onehot(truth)
                    } else {
                        let mut other = rng.random_range(0..4);
                        if other >= truth.index() {
                            other += 1;
                        }
                        onehot(Party::ALL[other])
                    }
                })
                .collect();
            (truth, preds)
        })
        .collect();
    let curve = curve_from_predictions(&users, &CurveConfig { k_max, repetitions: 30, seed: 3 });
    for p in &curve.points {
        let expected = users
            .iter()
            .map(|(t, _)| common::majority_vote_accuracy(p.k, acc, t.index()))
            .sum::<f64>()
            / n_users as f64;
        assert!(
            (p.mean_f1 - expected).abs() < 0.02,
            "k = {}: {} vs {}",
            p.k,
            p.mean_f1,
            expected
        );
    }
}

#[test]
fn large_split_sizes() {
    let posts: Vec<Post> = (0..147_000)
        .map(|i| Post::new(format!("p{i}"), format!("u{}", i % 9000), "a b c d e").with_label(Party::ALL[i % 5]))
        .collect();
    let (train, valid) = split_train_valid(&posts, 1, false).unwrap();
    assert_eq!((train.len(), valid.len()), (132_300, 14_700));
}

#[test]
fn id_export_has_header_plus_one_line_per_post() {
    let posts: Vec<Post> = (0..1000)
        .map(|i| Post::new(format!("p{i}"), "u", "tekst, z przecinkiem\ni nową linią").with_label(PO))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.csv");
    export_tweet_ids(&DatasetSplit::new(SplitName::Train, posts), &path).unwrap();
    let body = std::fs::read_to_string(&path).unwrap();
    assert_eq!(body.lines().count(), 1001);
    assert!(!body.contains("przecinkiem"));
}

#[test]
fn jsonl_row_without_text_is_skipped() {
    let posts: Vec<Post> = (0..200).map(|i| Post::new(format!("p{i}"), "u", "jeden dwa trzy cztery pięć")).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("posts.jsonl");
    save_posts(&posts, &path, Format::Jsonl).unwrap();
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    let mut row: serde_json::Value = serde_json::from_str(&lines[57]).unwrap();
    row.as_object_mut().unwrap().remove("text");
    lines[57] = row.to_string();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let loaded = load_posts(&path, Format::Jsonl).unwrap();
    assert_eq!(loaded.posts.len(), 199);
    assert_eq!(loaded.row_errors.len(), 1);
    assert_eq!(loaded.row_errors[0].line, 58);
}

#[test]
fn synthetic_users_follow_the_priors() {
    let corpus = generate(&SynthConfig {
        n_users: 10_000,
        posts_per_user: CountDist::Fixed { value: 0 },
        likes_per_user: CountDist::Fixed { value: 1 },
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let truth = corpus.truth();
    for prior in default_priors() {
        let share = truth.values().filter(|p| **p == prior.party).count() as f64 / 10_000.0;
        assert!((share - prior.share).abs() < 0.015, "{}: {share} vs {}", prior.party, prior.share);
    }
}

#[test]
fn heuristic_accuracy_falls_with_like_noise() {
    let mut last = f64::INFINITY;
    for (i, eps) in [0.0, 0.2, 0.4, 0.6].into_iter().enumerate() {
        let corpus = generate(&SynthConfig {
            n_users: 5000,
            likes_per_user: CountDist::Fixed { value: 10 },
            like_noise: eps,
            posts_per_user: CountDist::Fixed { value: 0 },
            seed: 20 + i as u64,
            ..Default::default()
        })
        .unwrap();
        let truth = corpus.truth();
        let labeled = label_users(&corpus.likes, &LabelingThresholds::default());
        let correct = labeled
            .profiles
            .iter()
            .filter(|p| p.party().is_some() && p.party() == truth.get(p.user_id.as_str()).copied())
            .count();
        let acc = correct as f64 / 5000.0;
        let oracle = common::monte_carlo_heuristic_accuracy(&POLL_PERCENT, 10, eps, 100_000, 70 + i as u64);
        assert!((acc - oracle).abs() < 0.02, "eps {eps}: {acc} vs {oracle}");
        assert!(acc <= last, "eps {eps}: {acc} > {last}");
        last = acc;
    }
}

#[test]
fn published_setup_values() {
    let priors = default_priors();
    let expected = [(Lewica, 8.0), (PO, 26.0), (PL2050, 14.0), (PiS, 38.0), (Konfederacja, 9.0)];
    for (prior, (party, pct)) in priors.iter().zip(expected) {
        assert_eq!(prior.party, party);
        assert!((prior.share - pct / 95.0).abs() < 1e-12);
    }
    assert!((priors[PiS.index()].share - 0.4).abs() < 1e-12);

    let counts: Vec<(TopicId, usize)> = default_topics().iter().map(|t| (t.topic_id, t.keywords.len())).collect();
    assert_eq!(
        counts,
        vec![
            (TopicId::Abortion, 9),
            (TopicId::EuCjeu, 13),
            (TopicId::LexTvn, 2),
            (TopicId::PolishOrder, 4)
        ]
    );

    assert_eq!(LabelingThresholds::default().min_likes, 10);
    assert_eq!(DatasetConfig::default().min_words, 5);
    assert_eq!(DatasetConfig::default().min_test_posts, 15);
    let eval = EvalConfig::default();
    assert_eq!((eval.curve_k_max, eval.curve_repetitions), (15, 30));
    let synth = SynthConfig::default();
    assert_eq!((synth.annotated_users, synth.annotators), (133, 3));
}

fn small_corpus(seed: u64, politician_token_rate: Option<f64>) -> leaning::synth::SynthCorpus {
    generate(&SynthConfig {
        n_users: 600,
        like_noise: 0.0,
        posts_per_user: CountDist::Fixed { value: 12 },
        politician_token_rate,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn writer_shift_bounds() {
    let corpus = small_corpus(5, Some(0.0));
    let (train, valid) = split_train_valid(&corpus.posts, 5, false).unwrap();
    let model = fit_model(&train.posts, &valid.posts, &ModelConfig::default()).unwrap();

    // Politicians share no party vocabulary with supporters here.
    let report = writer_shift_eval(&model, &corpus.politician_posts).unwrap();
    let largest_prior = default_priors().iter().map(|p| p.share).fold(0.0, f64::max);
    assert!(report.micro_f1 <= largest_prior + 0.1, "{}", report.micro_f1);

    // A single politician is one profile: F1 is 0 or 1.
    let one: Vec<Post> = corpus
        .politician_posts
        .iter()
        .filter(|p| p.user_id == corpus.politician_posts[0].user_id)
        .cloned()
        .collect();
    let r = writer_shift_eval(&model, &one).unwrap();
    assert!(r.micro_f1 == 0.0 || r.micro_f1 == 1.0);
    assert!(matches!(writer_shift_eval(&model, &[]), Err(Error::EmptyEvaluation)));

    let matched = small_corpus(5, Some(1.0));
    let single: Vec<Post> = matched
        .politician_posts
        .iter()
        .filter(|p| p.user_id == matched.politician_posts[0].user_id)
        .cloned()
        .collect();
    assert_eq!(writer_shift_eval(&model, &single).unwrap().micro_f1, 1.0);
}

#[test]
fn held_out_topic_never_reaches_training() {
    let corpus = small_corpus(6, None);
    let topics = default_topics();
    let matcher = TopicMatcher::new(&topics);
    for topic in TopicId::ALL {
        let fold = leave_one_topic_out(&corpus.posts, topic, &topics, &ModelConfig::default(), 6).unwrap();
        let leaked = corpus
            .posts
            .iter()
            .filter(|p| fold.train_post_ids.contains(&p.post_id))
            .filter(|p| matcher.match_text(&p.text).contains(&topic))
            .count();
        assert_eq!(leaked, 0, "{topic}");
        assert!(fold.n_test_posts > 0);
    }

    let abortion_only: Vec<Post> = corpus
        .posts
        .iter()
        .filter(|p| matcher.match_text(&p.text).iter().eq([TopicId::Abortion].iter()))
        .cloned()
        .collect();
    assert!(matches!(
        leave_one_topic_out(&abortion_only, TopicId::Abortion, &topics, &ModelConfig::default(), 6),
        Err(Error::TooFewTopics(1))
    ));
}
