//! Acquisition of politicians' posts, like records and user posts, plus
//! controversial-topic filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Format, Post, TopicId};
use crate::error::{Error, Result};
use crate::party::Party;
use crate::seeds::{Politician, TopicKeywordSet};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LikeRecord {
    pub user_id: String,
    pub post_id: String,
    pub politician_id: String,
    pub party: Party,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceError {
    /// The backend asked us to slow down; the call may be retried.
    RateLimited,
    Failed(String),
}

impl SourceError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SourceError::RateLimited)
    }
}

impl std::fmt::Display for SourceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceError::RateLimited => f.write_str("rate limited"),
            SourceError::Failed(m) => f.write_str(m),
        }
    }
}

/// A backend that can list an account's posts and a post's likers.
pub trait SourceClient {
    fn fetch_posts(&self, account_id: &str) -> std::result::Result<Vec<Post>, SourceError>;
    fn fetch_likers(&self, post_id: &str) -> std::result::Result<Vec<String>, SourceError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    /// Runs `op`, retrying retryable errors with exponential backoff.
    pub fn run<T>(&self, mut op: impl FnMut() -> std::result::Result<T, SourceError>) -> Result<T> {
        let max = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < max => {
                    let delay = self.base_delay * 2u32.saturating_pow(attempt - 1);
                    log::debug!("{e}; retrying in {delay:?} (attempt {attempt}/{max})");
                    std::thread::sleep(delay);
                }
                Err(e) => {
                    return Err(Error::Source {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        }
    }
}

/// Enumerates every (liker, post) pair for the registry's politicians and
/// stamps the politician's party. Output is sorted by
/// `(politician_id, post_id, user_id)` and deduplicated.
pub fn collect_like_records(
    client: &dyn SourceClient,
    politicians: &[Politician],
    retry: &RetryPolicy,
) -> Result<Vec<LikeRecord>> {
    let mut records = Vec::new();
    for pol in politicians {
        let posts = retry.run(|| client.fetch_posts(&pol.account_id))?;
        for post in posts {
            let likers = retry.run(|| client.fetch_likers(&post.post_id))?;
            records.extend(likers.into_iter().map(|user_id| LikeRecord {
                user_id,
                post_id: post.post_id.clone(),
                politician_id: pol.account_id.clone(),
                party: pol.party,
            }));
        }
    }
    records.sort_by(|a, b| {
        (&a.politician_id, &a.post_id, &a.user_id).cmp(&(&b.politician_id, &b.post_id, &b.user_id))
    });
    records.dedup();
    Ok(records)
}

/// Fetches each politician's own posts, labeled with the politician's party.
pub fn collect_politician_posts(
    client: &dyn SourceClient,
    politicians: &[Politician],
    retry: &RetryPolicy,
) -> Result<Vec<Post>> {
    let mut out = Vec::new();
    for pol in politicians {
        let posts = retry.run(|| client.fetch_posts(&pol.account_id))?;
        out.extend(posts.into_iter().map(|p| p.with_label(pol.party)));
    }
    Ok(out)
}

/// Fetches the given users' posts, in user order.
pub fn collect_user_posts<'a>(
    client: &dyn SourceClient,
    user_ids: impl IntoIterator<Item = &'a str>,
    retry: &RetryPolicy,
) -> Result<Vec<Post>> {
    let mut out = Vec::new();
    for user in user_ids {
        out.extend(retry.run(|| client.fetch_posts(user))?);
    }
    Ok(out)
}

/// Splits text into lowercase word pieces. Mentions and URLs are skipped;
/// a hashtag contributes its body.
fn word_pieces(s: &str) -> Vec<String> {
    s.split_whitespace()
        .filter(|t| !text::is_mention(t) && !text::is_url(t))
        .flat_map(|t| t.split(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Compiled keyword matcher: case-insensitive, diacritic-exact, whole-word.
#[derive(Debug, Clone)]
pub struct TopicMatcher {
    keywords: Vec<(TopicId, Vec<String>)>,
}

impl TopicMatcher {
    pub fn new(topics: &[TopicKeywordSet]) -> Self {
        let keywords = topics
            .iter()
            .flat_map(|t| t.keywords.iter().map(move |k| (t.topic_id, word_pieces(k))))
            .filter(|(_, seq)| !seq.is_empty())
            .collect();
        TopicMatcher { keywords }
    }

    pub fn match_text(&self, s: &str) -> BTreeSet<TopicId> {
        let words = word_pieces(s);
        self.keywords
            .iter()
            .filter(|(_, seq)| words.windows(seq.len()).any(|w| w == seq.as_slice()))
            .map(|(id, _)| *id)
            .collect()
    }
}

pub fn match_topics(post: &Post, topics: &[TopicKeywordSet]) -> BTreeSet<TopicId> {
    TopicMatcher::new(topics).match_text(&post.text)
}

/// Keeps posts matching at least one topic and records the matched set.
pub fn filter_topical(posts: &[Post], topics: &[TopicKeywordSet]) -> Vec<Post> {
    let matcher = TopicMatcher::new(topics);
    posts
        .iter()
        .filter_map(|p| {
            let found = matcher.match_text(&p.text);
            (!found.is_empty()).then(|| Post {
                topics: found,
                ..p.clone()
            })
        })
        .collect()
}

/// Recomputes the `topics` field of every post without filtering.
pub fn annotate_topics(posts: &mut [Post], topics: &[TopicKeywordSet]) {
    let matcher = TopicMatcher::new(topics);
    for p in posts {
        p.topics = matcher.match_text(&p.text);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikeRow {
    pub user_id: String,
    pub post_id: String,
}

/// File-backed client over `posts.jsonl` (dataset JSONL rows; `user_id`
/// is the author account) and `likes.jsonl` (`user_id`, `post_id`).
#[derive(Debug, Clone)]
pub struct FileSource {
    dir: PathBuf,
    posts_by_author: BTreeMap<String, Vec<Post>>,
    likers: BTreeMap<String, Vec<String>>,
}

impl FileSource {
    pub fn open(dir: &Path) -> Result<Self> {
        let loaded = corpus::load_posts(&dir.join("posts.jsonl"), Format::Jsonl)?;
        if let Some(e) = loaded.row_errors.first() {
            return Err(Error::Config(format!("posts.jsonl line {}: {}", e.line, e.message)));
        }
        let mut posts_by_author: BTreeMap<String, Vec<Post>> = BTreeMap::new();
        for p in loaded.posts {
            posts_by_author.entry(p.user_id.clone()).or_default().push(p);
        }
        for posts in posts_by_author.values_mut() {
            posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        }

        let likes_path = dir.join("likes.jsonl");
        let file = File::open(&likes_path).map_err(|e| Error::io(&likes_path, e))?;
        let mut likers: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&likes_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: LikeRow = serde_json::from_str(&line)?;
            likers.entry(row.post_id).or_default().push(row.user_id);
        }
        for users in likers.values_mut() {
            users.sort();
            users.dedup();
        }
        Ok(FileSource {
            dir: dir.to_path_buf(),
            posts_by_author,
            likers,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl SourceClient for FileSource {
    fn fetch_posts(&self, account_id: &str) -> std::result::Result<Vec<Post>, SourceError> {
        Ok(self.posts_by_author.get(account_id).cloned().unwrap_or_default())
    }

    fn fetch_likers(&self, post_id: &str) -> std::result::Result<Vec<String>, SourceError> {
        Ok(self.likers.get(post_id).cloned().unwrap_or_default())
    }
}

/// Parses a `--source` value of the form `file:<dir>`.
pub fn parse_source_spec(spec: &str) -> Result<PathBuf> {
    spec.strip_prefix("file:")
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config(format!("unsupported source `{spec}` (expected file:<dir>)")))
}

pub fn write_like_records(records: &[LikeRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_like_records(path: &Path) -> Result<Vec<LikeRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::default_topics;
    use std::cell::Cell;
    use std::collections::HashMap;

    struct MapSource {
        posts: HashMap<String, Vec<Post>>,
        likers: HashMap<String, Vec<String>>,
    }

    impl SourceClient for MapSource {
        fn fetch_posts(&self, a: &str) -> std::result::Result<Vec<Post>, SourceError> {
            Ok(self.posts.get(a).cloned().unwrap_or_default())
        }
        fn fetch_likers(&self, p: &str) -> std::result::Result<Vec<String>, SourceError> {
            Ok(self.likers.get(p).cloned().unwrap_or_default())
        }
    }

    fn politician(id: &str, party: Party) -> Politician {
        Politician {
            account_id: id.into(),
            display_name: id.into(),
            party,
        }
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::ZERO,
        }
    }

    #[test]
    fn one_politician_two_posts() {
        let src = MapSource {
            posts: HashMap::from([("pol".to_string(), vec![Post::new("a", "pol", "x"), Post::new("b", "pol", "y")])]),
            likers: HashMap::from([
                ("a".to_string(), vec!["u1".to_string()]),
                ("b".to_string(), vec!["u1".to_string(), "u2".to_string()]),
            ]),
        };
        let recs = collect_like_records(&src, &[politician("pol", Party::PO)], &no_wait()).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.party == Party::PO && r.politician_id == "pol"));
        assert!(collect_like_records(&src, &[], &no_wait()).unwrap().is_empty());
    }

    struct Flaky {
        failures_left: Cell<u32>,
    }

    impl SourceClient for Flaky {
        fn fetch_posts(&self, a: &str) -> std::result::Result<Vec<Post>, SourceError> {
            if self.failures_left.get() > 0 {
                self.failures_left.set(self.failures_left.get() - 1);
                return Err(SourceError::RateLimited);
            }
            Ok(vec![Post::new("p", a, "t")])
        }
        fn fetch_likers(&self, _: &str) -> std::result::Result<Vec<String>, SourceError> {
            Ok(vec!["u".into()])
        }
    }

    #[test]
    fn rate_limits_are_retried_then_surfaced() {
        let pols = [politician("x", Party::PiS)];
        let ok = Flaky { failures_left: Cell::new(4) };
        assert_eq!(collect_like_records(&ok, &pols, &no_wait()).unwrap().len(), 1);
        let bad = Flaky { failures_left: Cell::new(5) };
        match collect_like_records(&bad, &pols, &no_wait()) {
            Err(Error::Source { attempts, .. }) => assert_eq!(attempts, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn topics_of(s: &str) -> BTreeSet<TopicId> {
        match_topics(&Post::new("1", "u", s), &default_topics())
    }

    #[test]
    fn keyword_matching_rules() {
        assert_eq!(topics_of("Dziś #tsue zdecydował"), BTreeSet::from([TopicId::EuCjeu]));
        assert_eq!(topics_of("Polski Ład to katastrofa"), BTreeSet::from([TopicId::PolishOrder]));
        assert_eq!(topics_of("#lextvn i aborcja"), BTreeSet::from([TopicId::LexTvn, TopicId::Abortion]));
        assert_eq!(topics_of("TSUE orzekł"), BTreeSet::from([TopicId::EuCjeu]));
        // whole words only
        assert!(topics_of("jestem lextvnfan i tvn24").is_empty());
        // diacritics are significant: "turow" is not "turów"
        assert!(topics_of("kopalnia turow").is_empty());
        assert_eq!(topics_of("kopalnia Turów"), BTreeSet::from([TopicId::EuCjeu]));
        assert_eq!(topics_of("Polski   Lad"), BTreeSet::from([TopicId::PolishOrder]));
        assert!(topics_of("@tvn https://tvn.pl").is_empty());
    }

    #[test]
    fn filter_topical_keeps_multi_topic_posts_once() {
        let posts = vec![
            Post::new("1", "u", "nic tu nie ma"),
            Post::new("2", "u", "tvn oraz #StrajkKobiet"),
        ];
        let out = filter_topical(&posts, &default_topics());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].topics.len(), 2);
    }
}
