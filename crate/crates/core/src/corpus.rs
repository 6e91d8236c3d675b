//! Posts, user profiles and dataset splits, with their on-disk formats.
//!
//! Dataset files are CSV (`post_id,user_id,label,topics,created_at[,text]`,
//! `topics` joined by `|`) or JSONL with the same field names. The ID-only
//! CSV variant omits `text`; a JSONL hydration store (`post_id`, `text`)
//! restores it.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::{Party, PartyLabel, Tally};
use crate::seed::rng_for;
use crate::text;

/// Minimum posts per user in the manually annotated test split.
pub const MIN_TEST_POSTS_PER_USER: usize = 15;

/// Default number of plain words a post must contain.
pub const DEFAULT_MIN_WORDS: usize = 5;

const ID_COLUMNS: [&str; 5] = ["post_id", "user_id", "label", "topics", "created_at"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicId {
    Abortion,
    EuCjeu,
    #[serde(rename = "lextvn")]
    LexTvn,
    PolishOrder,
}

impl TopicId {
    pub const ALL: [TopicId; 4] = [
        TopicId::Abortion,
        TopicId::EuCjeu,
        TopicId::LexTvn,
        TopicId::PolishOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicId::Abortion => "abortion",
            TopicId::EuCjeu => "eu_cjeu",
            TopicId::LexTvn => "lextvn",
            TopicId::PolishOrder => "polish_order",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopicId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        TopicId::ALL
            .into_iter()
            .find(|id| id.as_str() == t)
            .ok_or_else(|| Error::UnknownTopic(t.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub text: String,
    pub created_at: i64,
    #[serde(default)]
    pub topics: BTreeSet<TopicId>,
    #[serde(default)]
    pub label: Option<Party>,
}

impl Post {
    pub fn new(post_id: impl Into<String>, user_id: impl Into<String>, text: impl Into<String>) -> Self {
        Post {
            post_id: post_id.into(),
            user_id: user_id.into(),
            text: text.into(),
            created_at: 0,
            topics: BTreeSet::new(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Party) -> Self {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Heuristic,
    Manual,
    GroundTruth,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Heuristic => "heuristic",
            LabelSource::Manual => "manual",
            LabelSource::GroundTruth => "ground-truth",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "heuristic" => Ok(LabelSource::Heuristic),
            "manual" => Ok(LabelSource::Manual),
            "ground-truth" => Ok(LabelSource::GroundTruth),
            other => Err(Error::Config(format!("unknown label source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub tally: Tally,
    pub assigned: Option<PartyLabel>,
    pub source: LabelSource,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>, tally: Tally) -> Self {
        UserProfile {
            user_id: user_id.into(),
            tally,
            assigned: None,
            source: LabelSource::Heuristic,
        }
    }

    /// The assigned party, if any; `None` for unassigned or Inconclusive users.
    pub fn party(&self) -> Option<Party> {
        self.assigned.and_then(PartyLabel::party)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitName {
    Train,
    Validation,
    HeuristicsTest,
    ManualTest,
    AmbiguousTest,
    Politicians,
}

impl SplitName {
    pub const ALL: [SplitName; 6] = [
        SplitName::Train,
        SplitName::Validation,
        SplitName::HeuristicsTest,
        SplitName::ManualTest,
        SplitName::AmbiguousTest,
        SplitName::Politicians,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::HeuristicsTest => "heuristics-test",
            SplitName::ManualTest => "manual-test",
            SplitName::AmbiguousTest => "ambiguous-test",
            SplitName::Politicians => "politicians",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownSplit(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub posts: Vec<Post>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, posts: Vec<Post>) -> Self {
        DatasetSplit { name, posts }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Post counts per user, ordered by user id.
    pub fn posts_per_user(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.posts {
            *counts.entry(p.user_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Users with fewer than `min` posts, as `(user_id, count)`.
    pub fn users_below(&self, min: usize) -> Vec<(String, usize)> {
        self.posts_per_user()
            .into_iter()
            .filter(|(_, n)| *n < min)
            .map(|(u, n)| (u.to_string(), n))
            .collect()
    }

    /// Checks id uniqueness and, for the manual test split, the per-user
    /// post minimum.
    pub fn validate(&self) -> Result<()> {
        check_unique_ids(&self.posts)?;
        if self.name == SplitName::ManualTest {
            if let Some((user, found)) = self.users_below(MIN_TEST_POSTS_PER_USER).into_iter().next() {
                return Err(Error::TooFewPosts {
                    user,
                    found,
                    required: MIN_TEST_POSTS_PER_USER,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }

    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "jsonl" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// A row that could not be parsed, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadedPosts {
    pub posts: Vec<Post>,
    pub row_errors: Vec<RowError>,
    /// False for ID-only CSV files, whose posts carry empty text.
    pub has_text: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub split: DatasetSplit,
    pub row_errors: Vec<RowError>,
    pub has_text: bool,
}

fn check_unique_ids(posts: &[Post]) -> Result<()> {
    let mut seen = HashSet::with_capacity(posts.len());
    for p in posts {
        if !seen.insert(p.post_id.as_str()) {
            return Err(Error::DuplicatePostId(p.post_id.clone()));
        }
    }
    Ok(())
}

fn parse_label(s: &str) -> std::result::Result<Option<Party>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<PartyLabel>().map_err(|e| e.to_string())? {
        PartyLabel::Party(p) => Ok(Some(p)),
        PartyLabel::Inconclusive => Err("post label cannot be Inconclusive".into()),
    }
}

fn parse_topics(s: &str) -> std::result::Result<BTreeSet<TopicId>, String> {
    s.split('|')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<TopicId>().map_err(|e| e.to_string()))
        .collect()
}

fn join_topics(topics: &BTreeSet<TopicId>) -> String {
    topics.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("|")
}

/// Reads posts from a CSV or JSONL file. Malformed rows are reported and
/// skipped; a duplicate `post_id` is fatal.
pub fn load_posts(path: &Path, format: Format) -> Result<LoadedPosts> {
    let loaded = match format {
        Format::Csv => load_csv(path)?,
        Format::Jsonl => load_jsonl(path)?,
    };
    check_unique_ids(&loaded.posts)?;
    Ok(loaded)
}

/// Loads a split whose name is taken from the file stem
/// (e.g. `manual-test.csv`).
pub fn load_dataset(path: &Path, format: Format) -> Result<LoadedSplit> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let name: SplitName = stem.parse()?;
    let loaded = load_posts(path, format)?;
    Ok(LoadedSplit {
        split: DatasetSplit::new(name, loaded.posts),
        row_errors: loaded.row_errors,
        has_text: loaded.has_text,
    })
}

fn load_csv(path: &Path) -> Result<LoadedPosts> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let has_text = if cols == ID_COLUMNS {
        false
    } else if cols.len() == 6 && cols[..5] == ID_COLUMNS && cols[5] == "text" {
        true
    } else {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: format!("{}[,text]", ID_COLUMNS.join(",")),
            found: cols.join(","),
        });
    };
    let width = if has_text { 6 } else { 5 };

    let mut posts = Vec::new();
    let mut row_errors = Vec::new();
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_csv_row(&record, width) {
            Ok(post) => posts.push(post),
            Err(message) => row_errors.push(RowError { line, message }),
        }
    }
    Ok(LoadedPosts {
        posts,
        row_errors,
        has_text,
    })
}

fn parse_csv_row(record: &csv::StringRecord, width: usize) -> std::result::Result<Post, String> {
    if record.len() != width {
        return Err(format!("expected {width} fields, found {}", record.len()));
    }
    let post_id = record[0].to_string();
    if post_id.is_empty() {
        return Err("empty post_id".into());
    }
    let user_id = record[1].to_string();
    if user_id.is_empty() {
        return Err("empty user_id".into());
    }
    let label = parse_label(&record[2])?;
    let topics = parse_topics(&record[3])?;
    let created_at = record[4]
        .trim()
        .parse::<i64>()
        .map_err(|e| format!("bad created_at `{}`: {e}", &record[4]))?;
    let text = if width == 6 { record[5].to_string() } else { String::new() };
    Ok(Post {
        post_id,
        user_id,
        text,
        created_at,
        topics,
        label,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonPostRow {
    post_id: String,
    user_id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    topics: Vec<String>,
    created_at: i64,
    text: String,
}

#[derive(Serialize)]
struct JsonPostOut<'a> {
    post_id: &'a str,
    user_id: &'a str,
    label: Option<Party>,
    topics: Vec<&'a str>,
    created_at: i64,
    text: &'a str,
}

fn load_jsonl(path: &Path) -> Result<LoadedPosts> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut row_errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<JsonPostRow>(&line)
            .map_err(|e| e.to_string())
            .and_then(|row| {
                let label = parse_label(row.label.as_deref().unwrap_or(""))?;
                let topics = row
                    .topics
                    .iter()
                    .map(|t| t.parse::<TopicId>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?;
                Ok(Post {
                    post_id: row.post_id,
                    user_id: row.user_id,
                    text: row.text,
                    created_at: row.created_at,
                    topics,
                    label,
                })
            });
        match parsed {
            Ok(post) => posts.push(post),
            Err(message) => row_errors.push(RowError {
                line: line_no,
                message,
            }),
        }
    }
    Ok(LoadedPosts {
        posts,
        row_errors,
        has_text: true,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_csv(posts: &[Post], path: &Path, with_text: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if with_text {
        let mut header = ID_COLUMNS.to_vec();
        header.push("text");
        w.write_record(&header)?;
    } else {
        w.write_record(ID_COLUMNS)?;
    }
    for p in posts {
        let label = p.label.map(|l| l.as_str()).unwrap_or("");
        let topics = join_topics(&p.topics);
        let created = p.created_at.to_string();
        let mut row = vec![p.post_id.as_str(), p.user_id.as_str(), label, topics.as_str(), created.as_str()];
        if with_text {
            row.push(p.text.as_str());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes posts (with text) in canonical form.
pub fn save_posts(posts: &[Post], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(posts, path, true),
        Format::Jsonl => {
            let mut w = create(path)?;
            for p in posts {
                let row = JsonPostOut {
                    post_id: &p.post_id,
                    user_id: &p.user_id,
                    label: p.label,
                    topics: p.topics.iter().map(|t| t.as_str()).collect(),
                    created_at: p.created_at,
                    text: &p.text,
                };
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn save_dataset(split: &DatasetSplit, path: &Path, format: Format) -> Result<()> {
    save_posts(&split.posts, path, format)
}

/// Writes the redistributable ID-only form of a split (no text column).
pub fn export_tweet_ids(split: &DatasetSplit, path: &Path) -> Result<()> {
    write_csv(&split.posts, path, false)
}

#[derive(Serialize, Deserialize)]
struct HydrationRow {
    post_id: String,
    text: String,
}

/// Writes a `post_id → text` JSONL store.
pub fn write_hydration_store(posts: &[Post], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for p in posts {
        serde_json::to_writer(
            &mut w,
            &HydrationRow {
                post_id: p.post_id.clone(),
                text: p.text.clone(),
            },
        )?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_hydration_store(path: &Path) -> Result<HashMap<String, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut store = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: HydrationRow = serde_json::from_str(&line)?;
        store.insert(row.post_id, row.text);
    }
    Ok(store)
}

/// Fills post text from a hydration store. Every post must be present.
pub fn hydrate(split: &mut DatasetSplit, store: &HashMap<String, String>) -> Result<()> {
    for p in &mut split.posts {
        p.text = store
            .get(&p.post_id)
            .cloned()
            .ok_or_else(|| Error::MissingHydration(p.post_id.clone()))?;
    }
    Ok(())
}

/// Keeps posts with at least `min_words` whitespace tokens that are not
/// hashtags, mentions or URLs.
pub fn min_word_filter(posts: &[Post], min_words: usize) -> Vec<Post> {
    let min_words = min_words.max(1);
    posts
        .iter()
        .filter(|p| text::count_plain_words(&p.text) >= min_words)
        .cloned()
        .collect()
}

/// Validation size for a 9:1 split, rounding half up.
pub fn validation_size(n: usize) -> usize {
    (n + 5) / 10
}

/// Splits labeled posts 9:1 into train and validation.
///
/// Post-level mode matches the validation size exactly. User-disjoint mode
/// moves whole users (in shuffled order) into validation until it reaches
/// the target size, so its size is approximate.
pub fn split_train_valid(posts: &[Post], seed: u64, user_disjoint: bool) -> Result<(DatasetSplit, DatasetSplit)> {
    if let Some(p) = posts.iter().find(|p| p.label.is_none()) {
        return Err(Error::UnlabeledPost(p.post_id.clone()));
    }
    let target = validation_size(posts.len());
    let mut rng = rng_for(seed, "split-train-valid", &[]);
    let mut in_valid = vec![false; posts.len()];

    if user_disjoint {
        let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, p) in posts.iter().enumerate() {
            by_user.entry(p.user_id.as_str()).or_default().push(i);
        }
        let mut users: Vec<&str> = by_user.keys().copied().collect();
        users.shuffle(&mut rng);
        let mut taken = 0;
        for u in users {
            if taken >= target {
                break;
            }
            for &i in &by_user[u] {
                in_valid[i] = true;
                taken += 1;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..posts.len()).collect();
        order.shuffle(&mut rng);
        for &i in &order[..target] {
            in_valid[i] = true;
        }
    }

    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for (p, v) in posts.iter().zip(in_valid) {
        if v {
            valid.push(p.clone());
        } else {
            train.push(p.clone());
        }
    }
    Ok((
        DatasetSplit::new(SplitName::Train, train),
        DatasetSplit::new(SplitName::Validation, valid),
    ))
}
