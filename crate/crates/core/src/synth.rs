//! Synthetic population with known affiliations.
//!
//! Users draw a party from the priors. Each like goes to a post of the
//! user's own party with probability `1 - like_noise`, otherwise to a
//! uniformly chosen other party. Post text is a party-conditioned unigram
//! bag: each word comes from the author's party vocabulary with probability
//! `party_token_rate`, otherwise from a shared vocabulary. Adjacent parties
//! on the spectrum can share part of their vocabulary, and party words on a
//! topical post can come from a party-and-topic specific component.
//!
//! The output is written in the same fixture layout the file-backed source
//! reads, so generated corpora feed straight into the pipeline.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::agreement::{write_annotations, AnnotationRecord};
use crate::corpus::{save_posts, Format, LabelSource, Post, TopicId, UserProfile, MIN_TEST_POSTS_PER_USER};
use crate::error::{Error, Result};
use crate::ingest::{LikeRecord, LikeRow};
use crate::party::{Party, PartyLabel, Tally, N_PARTIES};
use crate::seed::rng_for;
use crate::seeds::{default_priors, default_topics, PartyPrior, Politician, SeedRegistry, TopicKeywordSet};

/// Start of the generated timestamps (2021-03-01T00:00:00Z).
const EPOCH_START: i64 = 1_614_556_800;
const SPAN_SECONDS: i64 = 330 * 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CountDist {
    Fixed { value: u32 },
    Poisson { mean: f64 },
}

impl CountDist {
    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            CountDist::Poisson { mean } if !(mean > 0.0 && mean.is_finite()) => {
                Err(Error::Config(format!("{what}: Poisson mean must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        match *self {
            CountDist::Fixed { value } => value,
            CountDist::Poisson { mean } => {
                let d = Poisson::new(mean).expect("validated mean");
                d.sample(rng) as u32
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub priors: Vec<PartyPrior>,
    pub likes_per_user: CountDist,
    /// Probability that a like goes to a random other party.
    pub like_noise: f64,
    pub politicians_per_party: usize,
    pub posts_per_politician: usize,
    pub vocab_size_per_party: usize,
    pub shared_vocab_size: usize,
    /// Probability that a word comes from the author's party vocabulary.
    pub party_token_rate: f64,
    /// Word rate used for politicians' own posts; `None` uses
    /// `party_token_rate`.
    pub politician_token_rate: Option<f64>,
    /// Probability that a party word is borrowed from a spectrum neighbor's
    /// vocabulary instead of the author's own.
    pub neighbor_borrow_rate: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub posts_per_user: CountDist,
    /// Probability that a post carries a topic keyword.
    pub topic_plant_rate: f64,
    /// Probability that a topical post carries a second topic keyword.
    pub second_topic_rate: f64,
    /// Probability that a party word on a topical post comes from the
    /// party-and-topic component.
    pub topic_vocab_share: f64,
    pub topic_vocab_size: usize,
    /// Probability of appending a mention or link to a post.
    pub markup_rate: f64,
    pub annotated_users: usize,
    pub annotators: usize,
    /// Probability that an annotator picks a random wrong party.
    pub annotator_noise: f64,
    pub topics: Vec<TopicKeywordSet>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2000,
            priors: default_priors(),
            likes_per_user: CountDist::Fixed { value: 20 },
            like_noise: 0.1,
            politicians_per_party: 4,
            posts_per_politician: 30,
            vocab_size_per_party: 150,
            shared_vocab_size: 1500,
            party_token_rate: 0.6,
            politician_token_rate: None,
            neighbor_borrow_rate: 0.45,
            min_words: 6,
            max_words: 12,
            posts_per_user: CountDist::Fixed { value: 20 },
            topic_plant_rate: 1.0,
            second_topic_rate: 0.1,
            topic_vocab_share: 0.0,
            topic_vocab_size: 40,
            markup_rate: 0.3,
            annotated_users: 133,
            annotators: 3,
            annotator_noise: 0.1,
            topics: default_topics(),
            seed: 0,
        }
    }
}

fn check_fraction(name: &str, v: f64, upper_inclusive: bool) -> Result<()> {
    let ok = v >= 0.0 && if upper_inclusive { v <= 1.0 } else { v < 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} is out of range")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.priors.iter().map(|p| p.share).sum();
        let mut seen = [false; N_PARTIES];
        for p in &self.priors {
            if !(p.share > 0.0 && p.share <= 1.0) || std::mem::replace(&mut seen[p.party.index()], true) {
                return Err(Error::Config("priors must give each party one share in (0, 1]".into()));
            }
        }
        if seen.iter().any(|s| !s) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("priors must cover all parties and sum to 1 (sum = {sum})")));
        }
        check_fraction("like_noise", self.like_noise, false)?;
        if !(self.party_token_rate > 0.0 && self.party_token_rate <= 1.0) {
            return Err(Error::Config("party_token_rate must be in (0, 1]".into()));
        }
        if let Some(r) = self.politician_token_rate {
            check_fraction("politician_token_rate", r, true)?;
        }
        check_fraction("neighbor_borrow_rate", self.neighbor_borrow_rate, false)?;
        for (name, v) in [
            ("topic_plant_rate", self.topic_plant_rate),
            ("second_topic_rate", self.second_topic_rate),
            ("topic_vocab_share", self.topic_vocab_share),
            ("markup_rate", self.markup_rate),
            ("annotator_noise", self.annotator_noise),
        ] {
            check_fraction(name, v, true)?;
        }
        self.likes_per_user.validate("likes_per_user")?;
        self.posts_per_user.validate("posts_per_user")?;
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::Config("need 1 <= min_words <= max_words".into()));
        }
        if self.vocab_size_per_party == 0 || self.shared_vocab_size == 0 || self.topic_vocab_size == 0 {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        if self.politicians_per_party == 0 || self.posts_per_politician == 0 {
            return Err(Error::Config("every party needs politicians with posts".into()));
        }
        if self.topics.is_empty() || self.topics.iter().any(|t| t.keywords.is_empty()) {
            return Err(Error::Config("topics need non-empty keyword lists".into()));
        }
        Ok(())
    }
}

/// Generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub politicians: Vec<Politician>,
    /// Politicians' own posts, labeled with their party.
    pub politician_posts: Vec<Post>,
    /// One profile per user: like tally and true party.
    pub users: Vec<UserProfile>,
    pub likes: Vec<LikeRecord>,
    /// User posts, labeled with the author's true party.
    pub posts: Vec<Post>,
    pub annotations: Vec<AnnotationRecord>,
}

impl SynthCorpus {
    pub fn truth(&self) -> BTreeMap<&str, Party> {
        self.users
            .iter()
            .filter_map(|u| u.party().map(|p| (u.user_id.as_str(), p)))
            .collect()
    }

    pub fn registry(&self) -> SeedRegistry {
        SeedRegistry {
            politicians: self.politicians.clone(),
            priors: self.config.priors.clone(),
            topics: self.config.topics.clone(),
        }
    }
}

/// Disjoint per-party vocabularies, a shared vocabulary and one
/// component per (topic, party).
struct Vocabulary {
    party: Vec<Vec<String>>,
    shared: Vec<String>,
    topical: BTreeMap<(TopicId, usize), Vec<String>>,
}

impl Vocabulary {
    fn new(cfg: &SynthConfig) -> Self {
        let party = (0..N_PARTIES)
            .map(|i| (0..cfg.vocab_size_per_party).map(|j| format!("p{i}n{j}")).collect())
            .collect();
        let shared = (0..cfg.shared_vocab_size).map(|j| format!("s{j}")).collect();
        let topical = cfg
            .topics
            .iter()
            .flat_map(|t| {
                (0..N_PARTIES).map(move |i| {
                    let words = (0..cfg.topic_vocab_size)
                        .map(|j| format!("t{}{i}n{j}", t.topic_id.index()))
                        .collect();
                    ((t.topic_id, i), words)
                })
            })
            .collect();
        Vocabulary { party, shared, topical }
    }
}

fn neighbors(i: usize) -> Vec<usize> {
    (i.saturating_sub(1)..=(i + 1).min(N_PARTIES - 1)).filter(|&j| j != i).collect()
}

struct TextGen<'a> {
    cfg: &'a SynthConfig,
    vocab: Vocabulary,
}

impl TextGen<'_> {
    fn post(&self, rng: &mut impl Rng, party: Party, token_rate: f64) -> (String, Vec<TopicId>) {
        let cfg = self.cfg;
        let mut topics = Vec::new();
        if rng.random_bool(cfg.topic_plant_rate) {
            let first = cfg.topics.choose(rng).expect("validated topics");
            topics.push(first);
            if cfg.topics.len() > 1 && rng.random_bool(cfg.second_topic_rate) {
                let others: Vec<&TopicKeywordSet> =
                    cfg.topics.iter().filter(|t| t.topic_id != first.topic_id).collect();
                topics.push(*others.choose(rng).expect("at least one other topic"));
            }
        }

        let n_words = rng.random_range(cfg.min_words..=cfg.max_words);
        let pi = party.index();
        let mut words: Vec<String> = (0..n_words)
            .map(|_| {
                if rng.random_bool(token_rate) {
                    let source = if cfg.neighbor_borrow_rate > 0.0 && rng.random_bool(cfg.neighbor_borrow_rate) {
                        *neighbors(pi).choose(rng).expect("every party has a neighbor")
                    } else {
                        pi
                    };
                    let topical = topics
                        .first()
                        .filter(|_| cfg.topic_vocab_share > 0.0 && rng.random_bool(cfg.topic_vocab_share));
                    match topical {
                        Some(t) => self.vocab.topical[&(t.topic_id, source)].choose(rng),
                        None => self.vocab.party[source].choose(rng),
                    }
                } else {
                    self.vocab.shared.choose(rng)
                }
                .expect("non-empty vocabulary")
                .clone()
            })
            .collect();

        for t in &topics {
            let kw = t.keywords.choose(rng).expect("validated keywords");
            let token = if !kw.contains(' ') && rng.random_bool(0.5) {
                format!("#{kw}")
            } else {
                kw.clone()
            };
            let at = rng.random_range(0..=words.len());
            words.insert(at, token);
        }
        if rng.random_bool(cfg.markup_rate) {
            let n: u32 = rng.random_range(0..100_000);
            words.push(if rng.random_bool(0.5) {
                format!("@konto{n}")
            } else {
                format!("https://t.co/{n:x}")
            });
        }
        (words.join(" "), topics.iter().map(|t| t.topic_id).collect())
    }
}

fn other_party(rng: &mut impl Rng, own: Party) -> Party {
    let others: Vec<Party> = Party::ALL.into_iter().filter(|p| *p != own).collect();
    *others.choose(rng).expect("four other parties")
}

fn timestamp(rng: &mut impl Rng) -> i64 {
    EPOCH_START + rng.random_range(0..SPAN_SECONDS)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let text = TextGen {
        cfg,
        vocab: Vocabulary::new(cfg),
    };

    let mut rng = rng_for(cfg.seed, "synth-politicians", &[]);
    let pol_rate = cfg.politician_token_rate.unwrap_or(cfg.party_token_rate);
    let mut politicians = Vec::new();
    let mut politician_posts = Vec::new();
    let mut party_posts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); N_PARTIES];
    for party in Party::ALL {
        for i in 0..cfg.politicians_per_party {
            let account_id = format!("pol_{}_{i}", party.as_str().to_lowercase());
            let pol_idx = politicians.len();
            politicians.push(Politician {
                display_name: format!("{party} politician {i}"),
                account_id: account_id.clone(),
                party,
            });
            for _ in 0..cfg.posts_per_politician {
                let (t, _) = text.post(&mut rng, party, pol_rate);
                let mut post = Post::new(format!("pp{:06}", politician_posts.len()), account_id.clone(), t).with_label(party);
                post.created_at = timestamp(&mut rng);
                party_posts[party.index()].push((pol_idx, politician_posts.len()));
                politician_posts.push(post);
            }
        }
    }

    let mut rng = rng_for(cfg.seed, "synth-users", &[]);
    let weights: Vec<f64> = Party::ALL
        .iter()
        .map(|p| cfg.priors.iter().find(|q| q.party == *p).map_or(0.0, |q| q.share))
        .collect();
    let party_dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let user_ids: Vec<String> = (0..cfg.n_users).map(|i| format!("u{i:06}")).collect();
    let parties: Vec<Party> = (0..cfg.n_users).map(|_| Party::ALL[party_dist.sample(&mut rng)]).collect();

    let mut rng = rng_for(cfg.seed, "synth-likes", &[]);
    let mut likes = Vec::new();
    let mut users = Vec::with_capacity(cfg.n_users);
    for (user_id, &party) in user_ids.iter().zip(&parties) {
        let n_likes = cfg.likes_per_user.sample(&mut rng) as usize;
        let mut liked: HashSet<usize> = HashSet::new();
        let mut tally = Tally::default();
        for _ in 0..n_likes {
            let target = if rng.random_bool(cfg.like_noise) {
                other_party(&mut rng, party)
            } else {
                party
            };
            let pool = &party_posts[target.index()];
            let available: Vec<&(usize, usize)> = pool.iter().filter(|(_, p)| !liked.contains(p)).collect();
            let &&(pol_idx, post_idx) = available.choose(&mut rng).ok_or_else(|| {
                Error::Config(format!("not enough {target} politician posts for {n_likes} likes per user"))
            })?;
            liked.insert(post_idx);
            tally[target] += 1;
            likes.push(LikeRecord {
                user_id: user_id.clone(),
                post_id: politician_posts[post_idx].post_id.clone(),
                politician_id: politicians[pol_idx].account_id.clone(),
                party: target,
            });
        }
        users.push(UserProfile {
            user_id: user_id.clone(),
            tally,
            assigned: Some(PartyLabel::Party(party)),
            source: LabelSource::GroundTruth,
        });
    }
    likes.sort_by(|a, b| (&a.politician_id, &a.post_id, &a.user_id).cmp(&(&b.politician_id, &b.post_id, &b.user_id)));

    let mut rng = rng_for(cfg.seed, "synth-posts", &[]);
    let mut posts = Vec::new();
    let mut post_counts = Vec::with_capacity(cfg.n_users);
    for (user_id, &party) in user_ids.iter().zip(&parties) {
        let n = cfg.posts_per_user.sample(&mut rng) as usize;
        post_counts.push(n);
        for _ in 0..n {
            let (t, _) = text.post(&mut rng, party, cfg.party_token_rate);
            let mut post = Post::new(format!("up{:07}", posts.len()), user_id.clone(), t).with_label(party);
            post.created_at = timestamp(&mut rng);
            posts.push(post);
        }
    }

    let mut rng = rng_for(cfg.seed, "synth-annotations", &[]);
    let mut eligible: Vec<usize> = (0..cfg.n_users)
        .filter(|&i| post_counts[i] >= MIN_TEST_POSTS_PER_USER)
        .collect();
    eligible.shuffle(&mut rng);
    eligible.truncate(cfg.annotated_users);
    eligible.sort_unstable();
    let mut annotations = Vec::new();
    for i in eligible {
        for a in 0..cfg.annotators {
            let label = if rng.random_bool(cfg.annotator_noise) {
                other_party(&mut rng, parties[i])
            } else {
                parties[i]
            };
            annotations.push(AnnotationRecord::new(user_ids[i].clone(), format!("annotator{}", a + 1), label));
        }
    }

    Ok(SynthCorpus {
        config: cfg.clone(),
        politicians,
        politician_posts,
        users,
        likes,
        posts,
        annotations,
    })
}

/// Writes `posts.jsonl`, `likes.jsonl`, `seeds.toml`, `annotations.csv`
/// and `truth.csv` into `dir`. Posts are written unlabeled and without
/// topics, the way a raw source would deliver them.
pub fn write_fixtures(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw: Vec<Post> = corpus
        .politician_posts
        .iter()
        .chain(&corpus.posts)
        .map(|p| Post {
            label: None,
            topics: Default::default(),
            ..p.clone()
        })
        .collect();
    save_posts(&raw, &dir.join("posts.jsonl"), Format::Jsonl)?;

    let mut likes = String::new();
    for l in &corpus.likes {
        likes.push_str(&serde_json::to_string(&LikeRow {
            user_id: l.user_id.clone(),
            post_id: l.post_id.clone(),
        })?);
        likes.push('\n');
    }
    let path = dir.join("likes.jsonl");
    fs::write(&path, likes).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("seeds.toml");
    fs::write(&path, corpus.registry().to_toml_string()).map_err(|e| Error::io(&path, e))?;

    write_annotations(&corpus.annotations, &dir.join("annotations.csv"))?;

    let mut truth = String::from("user_id,party\n");
    for (u, p) in corpus.truth() {
        truth.push_str(&format!("{u},{p}\n"));
    }
    let path = dir.join("truth.csv");
    fs::write(&path, truth).map_err(|e| Error::io(&path, e))
}

/// Reads `truth.csv` back into a user → party map.
pub fn read_truth(path: &Path) -> Result<BTreeMap<String, Party>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        out.insert(rec[0].to_string(), rec[1].parse()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::count_plain_words;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 60,
            annotated_users: 10,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.posts, b.posts);
        assert_eq!(a.likes, b.likes);
        assert_eq!(a.annotations, b.annotations);
        let c = generate(&SynthConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a.posts, c.posts);
    }

    #[test]
    fn noise_free_likes_concentrate_on_true_party() {
        let cfg = SynthConfig {
            like_noise: 0.0,
            likes_per_user: CountDist::Fixed { value: 10 },
            ..small()
        };
        let c = generate(&cfg).unwrap();
        for u in &c.users {
            let truth = u.party().unwrap();
            assert_eq!(u.tally[truth], 10);
            assert_eq!(u.tally.total(), 10);
        }
    }

    #[test]
    fn posts_pass_the_word_minimum_and_carry_topics() {
        let c = generate(&small()).unwrap();
        assert!(c.posts.iter().all(|p| count_plain_words(&p.text) >= 5));
        let topics = default_topics();
        assert!(c
            .posts
            .iter()
            .all(|p| !crate::ingest::match_topics(p, &topics).is_empty()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate(&SynthConfig { like_noise: 1.0, ..small() }).is_err());
        assert!(generate(&SynthConfig { party_token_rate: 0.0, ..small() }).is_err());
        let mut bad = small();
        bad.priors.pop();
        assert!(generate(&bad).is_err());
        let many = SynthConfig {
            likes_per_user: CountDist::Fixed { value: 500 },
            ..small()
        };
        assert!(matches!(generate(&many), Err(Error::Config(_))));
    }

    #[test]
    fn borrowed_words_come_from_neighbors_only() {
        let party_of_word = |w: &str| w.strip_prefix('p').and_then(|r| r[..1].parse::<usize>().ok());
        let words_of = |cfg: &SynthConfig, party: Party| -> HashSet<usize> {
            generate(cfg)
                .unwrap()
                .posts
                .iter()
                .filter(|p| p.label == Some(party))
                .flat_map(|p| p.text.split_whitespace().filter_map(party_of_word).collect::<Vec<_>>())
                .collect()
        };
        let own_only = SynthConfig {
            neighbor_borrow_rate: 0.0,
            ..small()
        };
        assert_eq!(words_of(&own_only, Party::PO), HashSet::from([1]));
        let cfg = SynthConfig {
            neighbor_borrow_rate: 0.4,
            ..small()
        };
        assert_eq!(words_of(&cfg, Party::PO), HashSet::from([0, 1, 2]));
        assert_eq!(words_of(&cfg, Party::Lewica), HashSet::from([0, 1]));
        assert_eq!(neighbors(4), vec![3]);
    }
}
