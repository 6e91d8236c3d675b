//! Measurement: per-class precision/recall/F1, micro-F1 and confusion
//! matrices at post and profile level, the k-post aggregation curve, and
//! the topic- and writer-shift protocols.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_model, Classify, ModelConfig, Prediction};
use crate::corpus::{split_train_valid, Post, TopicId};
use crate::error::{Error, Result};
use crate::ingest::TopicMatcher;
use crate::party::{Party, N_PARTIES};
use crate::seed::{derive_seed, rng_for};
use crate::seeds::TopicKeywordSet;

/// Rows are gold classes, columns predictions, both in canonical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_PARTIES]; N_PARTIES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, gold: Party) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn col_sum(&self, predicted: Party) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    /// Each row divided by its gold count; empty rows stay zero.
    pub fn row_normalized(&self) -> [[f64; N_PARTIES]; N_PARTIES] {
        let mut out = [[0.0; N_PARTIES]; N_PARTIES];
        for (r, row) in self.counts.iter().enumerate() {
            let s: u64 = row.iter().sum();
            if s > 0 {
                for (c, v) in row.iter().enumerate() {
                    out[r][c] = *v as f64 / s as f64;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLevel {
    Post,
    Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment_tag: String,
    pub level: EvalLevel,
    pub n: usize,
    pub micro_f1: f64,
    pub per_class: BTreeMap<Party, ClassScores>,
    pub confusion: ConfusionMatrix,
    pub confusion_row_normalized: [[f64; N_PARTIES]; N_PARTIES],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores single-label predictions. Precision, recall or F1 with a zero
/// denominator are reported as 0.
pub fn score(gold: &[Party], predicted: &[Party]) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(predicted) {
        cm.counts[g.index()][p.index()] += 1;
    }

    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0, 0, 0);
    let mut per_class = BTreeMap::new();
    for party in Party::ALL {
        let tp = cm.counts[party.index()][party.index()];
        let fp = cm.col_sum(party) - tp;
        let fn_ = cm.row_sum(party) - tp;
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn_;
        per_class.insert(
            party,
            ClassScores {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: ratio(2 * tp, 2 * tp + fp + fn_),
                support: tp + fn_,
            },
        );
    }
    let micro_p = ratio(tp_sum, tp_sum + fp_sum);
    let micro_r = ratio(tp_sum, tp_sum + fn_sum);
    let micro_f1 = if micro_p + micro_r > 0.0 {
        2.0 * micro_p * micro_r / (micro_p + micro_r)
    } else {
        0.0
    };

    Ok(EvalReport {
        experiment_tag: String::new(),
        level: EvalLevel::Post,
        n: gold.len(),
        micro_f1,
        per_class,
        confusion: cm,
        confusion_row_normalized: cm.row_normalized(),
    })
}

impl EvalReport {
    pub fn tagged(mut self, tag: impl Into<String>, level: EvalLevel) -> Self {
        self.experiment_tag = tag.into();
        self.level = level;
        self
    }

    pub fn to_table(&self) -> String {
        let level = match self.level {
            EvalLevel::Post => "post",
            EvalLevel::Profile => "profile",
        };
        let mut s = format!("{} ({level}-level, n = {})\n", self.experiment_tag, self.n);
        s.push_str(&format!("{:<14}{:>10}{:>10}{:>10}{:>9}\n", "party", "precision", "recall", "f1", "support"));
        for (party, c) in &self.per_class {
            s.push_str(&format!(
                "{:<14}{:>10.4}{:>10.4}{:>10.4}{:>9}\n",
                party.as_str(),
                c.precision,
                c.recall,
                c.f1,
                c.support
            ));
        }
        s.push_str(&format!("{:<14}{:>10}{:>10}{:>10.4}{:>9}\n", "micro", "-", "-", self.micro_f1, self.n));
        s.push_str("\nconfusion (rows gold, cols predicted)\n");
        s.push_str(&format!("{:<14}", ""));
        for p in Party::ALL {
            s.push_str(&format!("{:>13}", p.as_str()));
        }
        s.push('\n');
        for g in Party::ALL {
            s.push_str(&format!("{:<14}", g.as_str()));
            for p in Party::ALL {
                s.push_str(&format!(
                    "{:>6} ({:>4.2})",
                    self.confusion.counts[g.index()][p.index()],
                    self.confusion_row_normalized[g.index()][p.index()]
                ));
            }
            s.push('\n');
        }
        s
    }
}

/// Most frequent predicted label; ties go to the higher summed softmax
/// score, then to canonical order.
pub fn aggregate_user(predictions: &[Prediction]) -> Result<Party> {
    if predictions.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let mut votes = [0usize; N_PARTIES];
    let mut mass = [0.0f64; N_PARTIES];
    for p in predictions {
        votes[p.label.index()] += 1;
        for (m, s) in mass.iter_mut().zip(&p.scores) {
            *m += s;
        }
    }
    let mut best = 0;
    for c in 1..N_PARTIES {
        if votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best]) {
            best = c;
        }
    }
    Ok(Party::ALL[best])
}

/// Posts grouped by user, with each user's single gold label.
pub fn group_by_user(posts: &[Post]) -> Result<BTreeMap<&str, (Party, Vec<&Post>)>> {
    let mut users: BTreeMap<&str, (Party, Vec<&Post>)> = BTreeMap::new();
    for p in posts {
        let label = p.label.ok_or_else(|| Error::UnlabeledPost(p.post_id.clone()))?;
        let entry = users.entry(p.user_id.as_str()).or_insert((label, Vec::new()));
        if entry.0 != label {
            return Err(Error::ConflictingUserLabels(p.user_id.clone()));
        }
        entry.1.push(p);
    }
    Ok(users)
}

pub fn post_level_eval(classifier: &dyn Classify, posts: &[Post], tag: &str) -> Result<EvalReport> {
    let gold = posts
        .iter()
        .map(|p| p.label.ok_or_else(|| Error::UnlabeledPost(p.post_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<Party> = posts.iter().map(|p| classifier.classify(&p.text).label).collect();
    Ok(score(&gold, &pred)?.tagged(tag, EvalLevel::Post))
}

/// Aggregates each user's post predictions with [`aggregate_user`] and
/// scores users.
pub fn profile_level_eval(classifier: &dyn Classify, posts: &[Post], tag: &str) -> Result<EvalReport> {
    let users = group_by_user(posts)?;
    let mut gold = Vec::with_capacity(users.len());
    let mut pred = Vec::with_capacity(users.len());
    for (g, user_posts) in users.values() {
        let preds: Vec<Prediction> = user_posts.iter().map(|p| classifier.classify(&p.text)).collect();
        gold.push(*g);
        pred.push(aggregate_user(&preds)?);
    }
    Ok(score(&gold, &pred)?.tagged(tag, EvalLevel::Profile))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationCurve {
    pub k_max: usize,
    pub repetitions: usize,
    pub n_users: usize,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl AggregationCurve {
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.k == k).map(|p| p.mean_f1)
    }

    /// Root mean square of the per-k standard deviations.
    pub fn pooled_std(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        (self.points.iter().map(|p| p.std_f1 * p.std_f1).sum::<f64>() / self.points.len() as f64).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,mean_f1,std_f1\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.k, p.mean_f1, p.std_f1));
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CurveConfig {
    pub k_max: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            k_max: 15,
            repetitions: 30,
            seed: 0,
        }
    }
}

/// User-level micro-F1 when each user is judged from `k` randomly chosen
/// posts, for `k = 1..=k_max`, averaged over repetitions. Each
/// (k, repetition) draws from its own sub-seed.
pub fn aggregation_curve(classifier: &dyn Classify, posts: &[Post], cfg: &CurveConfig) -> Result<AggregationCurve> {
    let users = group_by_user(posts)?;
    if users.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if let Some((u, (_, p))) = users.iter().find(|(_, (_, p))| p.len() < cfg.k_max) {
        return Err(Error::TooFewPosts {
            user: u.to_string(),
            found: p.len(),
            required: cfg.k_max,
        });
    }
    let predicted: Vec<(Party, Vec<Prediction>)> = users
        .values()
        .map(|(g, ps)| (*g, ps.iter().map(|p| classifier.classify(&p.text)).collect()))
        .collect();
    Ok(curve_from_predictions(&predicted, cfg))
}

/// Curve over precomputed per-post predictions, one entry per user.
pub fn curve_from_predictions(users: &[(Party, Vec<Prediction>)], cfg: &CurveConfig) -> AggregationCurve {
    let gold: Vec<Party> = users.iter().map(|(g, _)| *g).collect();
    let mut points = Vec::with_capacity(cfg.k_max);
    for k in 1..=cfg.k_max {
        let scores: Vec<f64> = (0..cfg.repetitions)
            .map(|rep| {
                let mut rng = rng_for(cfg.seed, "aggregation-curve", &[k as u64, rep as u64]);
                let pred: Vec<Party> = users
                    .iter()
                    .map(|(_, preds)| {
                        let chosen: Vec<Prediction> =
                            index::sample(&mut rng, preds.len(), k).iter().map(|i| preds[i]).collect();
                        aggregate_user(&chosen).expect("k >= 1")
                    })
                    .collect();
                score(&gold, &pred).map(|r| r.micro_f1).unwrap_or(0.0)
            })
            .collect();
        let n = scores.len().max(1) as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        points.push(CurvePoint {
            k,
            mean_f1: mean,
            std_f1: var.sqrt(),
        });
    }
    AggregationCurve {
        k_max: cfg.k_max,
        repetitions: cfg.repetitions,
        n_users: users.len(),
        seed: cfg.seed,
        points,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicShiftResult {
    pub topic: TopicId,
    pub report: EvalReport,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test_posts: usize,
    #[serde(skip)]
    pub train_post_ids: Vec<String>,
}

fn topics_present(posts: &[Post], matcher: &TopicMatcher) -> (Vec<BTreeSet<TopicId>>, BTreeSet<TopicId>) {
    let per_post: Vec<BTreeSet<TopicId>> = posts.iter().map(|p| matcher.match_text(&p.text)).collect();
    let present = per_post.iter().flatten().copied().collect();
    (per_post, present)
}

fn train_and_eval(
    train_pool: Vec<Post>,
    test: &[Post],
    cfg: &ModelConfig,
    split_seed: u64,
    tag: &str,
    topic: TopicId,
) -> Result<TopicShiftResult> {
    let (train, valid) = split_train_valid(&train_pool, split_seed, false)?;
    let model = fit_model(&train.posts, &valid.posts, cfg)?;
    let report = profile_level_eval(&model, test, tag)?;
    Ok(TopicShiftResult {
        topic,
        report,
        n_train: train.len(),
        n_valid: valid.len(),
        n_test_posts: test.len(),
        train_post_ids: train.posts.into_iter().map(|p| p.post_id).collect(),
    })
}

/// Holds out every post matching `topic`'s keywords (including posts that
/// also match other topics), trains on the rest and reports profile-level
/// scores on the held-out posts.
pub fn leave_one_topic_out(
    corpus: &[Post],
    topic: TopicId,
    keywords: &[TopicKeywordSet],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TopicShiftResult> {
    let matcher = TopicMatcher::new(keywords);
    let (per_post, present) = topics_present(corpus, &matcher);
    if present.len() < 2 {
        return Err(Error::TooFewTopics(present.len()));
    }
    let (test, pool): (Vec<(&Post, bool)>, Vec<(&Post, bool)>) = corpus
        .iter()
        .zip(per_post.iter().map(|t| t.contains(&topic)))
        .partition(|(_, held)| *held);
    if test.is_empty() {
        return Err(Error::EmptyTopic(topic.to_string()));
    }
    let test: Vec<Post> = test.into_iter().map(|(p, _)| p.clone()).collect();
    let pool: Vec<Post> = pool.into_iter().map(|(p, _)| p.clone()).collect();
    train_and_eval(
        pool,
        &test,
        cfg,
        derive_seed(seed, "loo-split", &[topic.index() as u64]),
        &format!("loo-{topic}"),
        topic,
    )
}

/// In-domain reference for a topic fold: half of the topic's users (seeded)
/// are held out with their posts on that topic; the model trains on
/// everything else, including the other users' posts on the topic.
pub fn in_domain_topic_control(
    corpus: &[Post],
    topic: TopicId,
    keywords: &[TopicKeywordSet],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TopicShiftResult> {
    let matcher = TopicMatcher::new(keywords);
    let (per_post, _) = topics_present(corpus, &matcher);
    let mut users: Vec<&str> = corpus
        .iter()
        .zip(&per_post)
        .filter(|(_, t)| t.contains(&topic))
        .map(|(p, _)| p.user_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if users.is_empty() {
        return Err(Error::EmptyTopic(topic.to_string()));
    }
    users.shuffle(&mut rng_for(seed, "in-domain-users", &[topic.index() as u64]));
    let held: BTreeSet<&str> = users[..users.len().div_ceil(2)].iter().copied().collect();

    let mut test = Vec::new();
    let mut pool = Vec::new();
    for (p, t) in corpus.iter().zip(&per_post) {
        if t.contains(&topic) && held.contains(p.user_id.as_str()) {
            test.push(p.clone());
        } else {
            pool.push(p.clone());
        }
    }
    train_and_eval(
        pool,
        &test,
        cfg,
        derive_seed(seed, "in-domain-split", &[topic.index() as u64]),
        &format!("in-domain-{topic}"),
        topic,
    )
}

/// Profile-level scores on politicians' own posts, each labeled with the
/// author's party.
pub fn writer_shift_eval(classifier: &dyn Classify, politician_posts: &[Post]) -> Result<EvalReport> {
    if politician_posts.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    profile_level_eval(classifier, politician_posts, "writer-shift")
}
