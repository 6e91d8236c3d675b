//! Stage runners behind the CLI. Each stage reads its inputs from the run
//! directory (or the source), writes artifacts back into it, and returns a
//! serializable report. Reports never contain timestamps; those live only
//! in the per-run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::{agreement_report, manual_labels, read_annotations, AgreementReport};
use crate::classifier::{fit_model, Classify, LinearModel, ModelConfig, TrainingMeta};
use crate::corpus::{
    load_dataset, min_word_filter, save_dataset, split_train_valid, DatasetSplit, Format, Post, SplitName,
    DEFAULT_MIN_WORDS, MIN_TEST_POSTS_PER_USER,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    aggregation_curve, in_domain_topic_control, leave_one_topic_out, post_level_eval, profile_level_eval,
    writer_shift_eval, AggregationCurve, CurveConfig, EvalReport, TopicShiftResult,
};
use crate::ingest::{
    collect_like_records, collect_politician_posts, collect_user_posts, filter_topical, read_like_records,
    write_like_records, FileSource, RetryPolicy,
};
use crate::labeler::{label_users, propagate_labels, read_profiles, write_profiles, LabelingSummary, LabelingThresholds};
use crate::party::Party;
use crate::seed::derive_seed;
use crate::seeds::{load_seed_config, SeedRegistry};
use crate::synth::{generate, read_truth, write_fixtures, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub min_words: usize,
    pub min_test_posts: usize,
    pub user_disjoint: bool,
    /// Keep only posts matching a topic keyword.
    pub topical_only: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            min_words: DEFAULT_MIN_WORDS,
            min_test_posts: MIN_TEST_POSTS_PER_USER,
            user_disjoint: false,
            topical_only: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub curve_k_max: usize,
    pub curve_repetitions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            curve_k_max: 15,
            curve_repetitions: 30,
        }
    }
}

/// Everything a run can be configured with, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub labeling: LabelingThresholds,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => Self::from_toml_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    /// Sets the global seed and fans it out to the stage seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.model.train.seed = derive_seed(seed, "train", &[]);
        self
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split", &[])
    }

    pub fn curve_seed(&self) -> u64 {
        derive_seed(self.seed, "curve", &[])
    }

    pub fn loo_seed(&self) -> u64 {
        derive_seed(self.seed, "loo", &[])
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// Paths of one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub format: Format,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>, format: Format) -> Self {
        RunDir {
            root: root.into(),
            format,
        }
    }

    pub fn ingest(&self) -> PathBuf {
        self.root.join("ingest")
    }
    pub fn likes(&self) -> PathBuf {
        self.ingest().join("likes.jsonl")
    }
    pub fn user_posts(&self) -> PathBuf {
        self.ingest().join("user_posts.jsonl")
    }
    pub fn politician_posts(&self) -> PathBuf {
        self.ingest().join("politician_posts.jsonl")
    }
    pub fn seeds(&self) -> PathBuf {
        self.ingest().join("seeds.toml")
    }
    pub fn annotations(&self) -> PathBuf {
        self.ingest().join("annotations.csv")
    }
    pub fn truth(&self) -> PathBuf {
        self.ingest().join("truth.csv")
    }
    pub fn profiles(&self) -> PathBuf {
        self.root.join("labels").join("profiles.csv")
    }
    pub fn exclusions(&self) -> PathBuf {
        self.root.join("labels").join("exclusions.csv")
    }
    pub fn split(&self, name: SplitName) -> PathBuf {
        self.root
            .join("dataset")
            .join(format!("{}.{}", name.as_str(), self.format.extension()))
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model").join("model.json")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn load_split(&self, name: SplitName) -> Result<DatasetSplit> {
        let path = self.split(name);
        let loaded = load_dataset(&path, self.format)?;
        if let Some(e) = loaded.row_errors.first() {
            return Err(Error::Config(format!("{} line {}: {}", path.display(), e.line, e.message)));
        }
        Ok(loaded.split)
    }

    fn registry(&self) -> Result<SeedRegistry> {
        load_seed_config(Some(&self.seeds()))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes `<reports>/<name>.json` and, when given, `<name>.txt`.
pub fn write_report<T: Serialize>(run: &RunDir, name: &str, value: &T, table: Option<&str>) -> Result<PathBuf> {
    let json = run.reports().join(format!("{name}.json"));
    write_text(&json, &(serde_json::to_string_pretty(value)? + "\n"))?;
    if let Some(t) = table {
        write_text(&run.reports().join(format!("{name}.txt")), t)?;
    }
    Ok(json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub model_format: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(subcommand: &str, cfg: &RunConfig, started_at: u64) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model_format: "leaning-linear/1".into(),
            subcommand: subcommand.into(),
            seed: cfg.seed,
            config_sha256: cfg.fingerprint(),
            config: cfg.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at,
            finished_at: started_at,
        }
    }

    /// Digests each path; directories contribute their files in name order.
    pub fn digest_all(paths: &[PathBuf]) -> Vec<FileDigest> {
        let mut out = Vec::new();
        for p in paths {
            if p.is_dir() {
                let mut files: Vec<PathBuf> = fs::read_dir(p)
                    .into_iter()
                    .flatten()
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .collect();
                files.sort();
                out.extend(Self::digest_all(&files));
            } else {
                out.push(FileDigest {
                    path: p.clone(),
                    sha256: file_digest(p),
                });
            }
        }
        out
    }

    pub fn write(&self, run: &RunDir) -> Result<PathBuf> {
        let path = run.manifests().join(format!("{}.json", self.subcommand));
        write_text(&path, &(serde_json::to_string_pretty(self)? + "\n"))?;
        Ok(path)
    }
}

/// What a stage read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct StageIo {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl StageIo {
    fn merge(&mut self, other: StageIo) {
        self.inputs.extend(other.inputs);
        self.outputs.extend(other.outputs);
    }
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub users: usize,
    pub politicians: usize,
    pub politician_posts: usize,
    pub user_posts: usize,
    pub likes: usize,
    pub annotations: usize,
    pub party_counts: BTreeMap<Party, usize>,
}

pub fn run_synth(cfg: &RunConfig, dir: &Path) -> Result<(SynthSummary, StageIo)> {
    let corpus = generate(&cfg.synth)?;
    write_fixtures(&corpus, dir)?;
    let mut party_counts: BTreeMap<Party, usize> = Party::ALL.iter().map(|p| (*p, 0)).collect();
    for p in corpus.truth().values() {
        *party_counts.get_mut(p).expect("all parties present") += 1;
    }
    let summary = SynthSummary {
        users: corpus.users.len(),
        politicians: corpus.politicians.len(),
        politician_posts: corpus.politician_posts.len(),
        user_posts: corpus.posts.len(),
        likes: corpus.likes.len(),
        annotations: corpus.annotations.len(),
        party_counts,
    };
    let outputs = ["posts.jsonl", "likes.jsonl", "seeds.toml", "annotations.csv", "truth.csv"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    Ok((
        summary,
        StageIo {
            inputs: Vec::new(),
            outputs,
        },
    ))
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub politicians: usize,
    pub like_records: usize,
    pub likers: usize,
    pub politician_posts: usize,
    pub user_posts: usize,
}

/// Pulls likes, politician posts and likers' posts from the source and
/// copies the seed registry (plus annotations and truth, when present)
/// into the run directory so later stages do not need the source.
pub fn run_ingest(source: &Path, seeds: Option<&Path>, run: &RunDir) -> Result<(IngestSummary, StageIo)> {
    let seeds_path = seeds.map(Path::to_path_buf).unwrap_or_else(|| source.join("seeds.toml"));
    let registry = load_seed_config(Some(&seeds_path))?;
    if registry.politicians.is_empty() {
        return Err(Error::Config(format!("{}: no politicians registered", seeds_path.display())));
    }
    let client = FileSource::open(source)?;
    let retry = RetryPolicy::default();
    let likes = collect_like_records(&client, &registry.politicians, &retry)?;
    let politician_posts = collect_politician_posts(&client, &registry.politicians, &retry)?;
    let likers: BTreeSet<&str> = likes.iter().map(|l| l.user_id.as_str()).collect();
    let politician_ids: BTreeSet<&str> = registry.politicians.iter().map(|p| p.account_id.as_str()).collect();
    let user_posts = collect_user_posts(
        &client,
        likers.iter().copied().filter(|u| !politician_ids.contains(u)),
        &retry,
    )?;

    ensure_dir(&run.ingest())?;
    write_like_records(&likes, &run.likes())?;
    crate::corpus::save_posts(&politician_posts, &run.politician_posts(), Format::Jsonl)?;
    crate::corpus::save_posts(&user_posts, &run.user_posts(), Format::Jsonl)?;
    write_text(&run.seeds(), &registry.to_toml_string())?;
    let mut io = StageIo {
        inputs: vec![source.join("posts.jsonl"), source.join("likes.jsonl"), seeds_path],
        outputs: vec![run.likes(), run.politician_posts(), run.user_posts(), run.seeds()],
    };
    for (name, dest) in [("annotations.csv", run.annotations()), ("truth.csv", run.truth())] {
        let src = source.join(name);
        if src.exists() {
            fs::copy(&src, &dest).map_err(|e| Error::io(&src, e))?;
            io.inputs.push(src);
            io.outputs.push(dest);
        }
    }
    Ok((
        IngestSummary {
            politicians: registry.politicians.len(),
            like_records: likes.len(),
            likers: likers.len(),
            politician_posts: politician_posts.len(),
            user_posts: user_posts.len(),
        },
        io,
    ))
}

// ---------------------------------------------------------------- label

pub fn run_label(cfg: &RunConfig, run: &RunDir) -> Result<(LabelingSummary, StageIo)> {
    let likes = read_like_records(&run.likes())?;
    let outcome = label_users(&likes, &cfg.labeling);
    write_profiles(&outcome.profiles, &run.profiles())?;
    let mut excl = String::from("user_id,likes\n");
    for (u, n) in &outcome.excluded {
        excl.push_str(&format!("{u},{n}\n"));
    }
    write_text(&run.exclusions(), &excl)?;
    Ok((
        outcome.summary(),
        StageIo {
            inputs: vec![run.likes()],
            outputs: vec![run.profiles(), run.exclusions()],
        },
    ))
}

// ---------------------------------------------------------------- agree

pub fn run_agree(run: &RunDir, annotations: Option<&Path>) -> Result<(AgreementReport, StageIo)> {
    let path = annotations.map(Path::to_path_buf).unwrap_or_else(|| run.annotations());
    let ann = read_annotations(&path)?;
    let mut inputs = vec![path];
    let profiles = if run.profiles().exists() {
        inputs.push(run.profiles());
        Some(read_profiles(&run.profiles())?)
    } else {
        None
    };
    let report = agreement_report(&ann, profiles.as_deref())?;
    Ok((
        report,
        StageIo {
            inputs,
            outputs: Vec::new(),
        },
    ))
}

// ---------------------------------------------------------------- build-dataset

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub sizes: BTreeMap<String, usize>,
    pub users: BTreeMap<String, usize>,
    pub dropped_by_filters: usize,
    pub annotated_users_below_post_minimum: usize,
    pub annotated_users_without_majority: usize,
}

/// Builds the six splits:
/// - annotated users with a heuristic party label and enough posts form
///   `heuristics-test` (heuristic labels) and `manual-test` (majority
///   annotator labels) over the same posts;
/// - annotated users the heuristic left Inconclusive or dropped form
///   `ambiguous-test` with their annotator labels;
/// - every other heuristically labeled user's posts are split 9:1 into
///   `train` and `validation`;
/// - politicians' own posts, labeled by party, form `politicians`.
pub fn build_splits(
    cfg: &RunConfig,
    registry: &SeedRegistry,
    profiles: &[crate::corpus::UserProfile],
    user_posts: &[Post],
    politician_posts: &[Post],
    annotations: &[crate::agreement::AnnotationRecord],
) -> Result<(Vec<DatasetSplit>, DatasetSummary)> {
    let d = &cfg.dataset;
    let clean = |posts: &[Post]| -> Vec<Post> {
        let posts = if d.topical_only {
            filter_topical(posts, &registry.topics)
        } else {
            let mut v = posts.to_vec();
            crate::ingest::annotate_topics(&mut v, &registry.topics);
            v
        };
        min_word_filter(&posts, d.min_words)
    };
    let posts = clean(user_posts);
    let dropped = user_posts.len() - posts.len();

    let votes = manual_labels(annotations)?;
    let without_majority = votes.values().filter(|v| v.needs_review).count();
    let manual: BTreeMap<&str, Party> = votes
        .iter()
        .filter_map(|(u, v)| v.label.party().map(|l| (u.as_str(), l)))
        .collect();
    let annotated: BTreeSet<&str> = votes.keys().map(String::as_str).collect();
    let heuristic: BTreeMap<&str, &crate::corpus::UserProfile> =
        profiles.iter().map(|p| (p.user_id.as_str(), p)).collect();

    let mut per_user: BTreeMap<&str, Vec<&Post>> = BTreeMap::new();
    for p in &posts {
        per_user.entry(p.user_id.as_str()).or_default().push(p);
    }

    let mut heur_test = Vec::new();
    let mut manual_test = Vec::new();
    let mut ambiguous = Vec::new();
    let mut below_minimum = 0;
    for (&user, &label) in &manual {
        let user_posts = per_user.get(user).map(Vec::as_slice).unwrap_or(&[]);
        match heuristic.get(user).and_then(|p| p.party()) {
            Some(h) => {
                if user_posts.len() < d.min_test_posts {
                    below_minimum += 1;
                    continue;
                }
                heur_test.extend(user_posts.iter().map(|p| (*p).clone().with_label(h)));
                manual_test.extend(user_posts.iter().map(|p| (*p).clone().with_label(label)));
            }
            None => ambiguous.extend(user_posts.iter().map(|p| (*p).clone().with_label(label))),
        }
    }

    let pool_profiles: Vec<crate::corpus::UserProfile> = profiles
        .iter()
        .filter(|p| !annotated.contains(p.user_id.as_str()))
        .cloned()
        .collect();
    let pool = propagate_labels(&pool_profiles, &posts);
    let (train, valid) = split_train_valid(&pool, cfg.split_seed(), d.user_disjoint)?;

    let politicians = clean(politician_posts)
        .into_iter()
        .filter_map(|p| registry.party_of(&p.user_id).map(|party| p.with_label(party)))
        .collect();

    let splits = vec![
        train,
        valid,
        DatasetSplit::new(SplitName::HeuristicsTest, heur_test),
        DatasetSplit::new(SplitName::ManualTest, manual_test),
        DatasetSplit::new(SplitName::AmbiguousTest, ambiguous),
        DatasetSplit::new(SplitName::Politicians, politicians),
    ];
    for s in &splits {
        s.validate()?;
    }
    let summary = DatasetSummary {
        sizes: splits.iter().map(|s| (s.name.to_string(), s.len())).collect(),
        users: splits
            .iter()
            .map(|s| (s.name.to_string(), s.posts_per_user().len()))
            .collect(),
        dropped_by_filters: dropped,
        annotated_users_below_post_minimum: below_minimum,
        annotated_users_without_majority: without_majority,
    };
    Ok((splits, summary))
}

fn load_jsonl_posts(path: &Path) -> Result<Vec<Post>> {
    let loaded = crate::corpus::load_posts(path, Format::Jsonl)?;
    if let Some(e) = loaded.row_errors.first() {
        return Err(Error::Config(format!("{} line {}: {}", path.display(), e.line, e.message)));
    }
    Ok(loaded.posts)
}

pub fn run_build_dataset(cfg: &RunConfig, run: &RunDir) -> Result<(DatasetSummary, StageIo)> {
    let registry = run.registry()?;
    let profiles = read_profiles(&run.profiles())?;
    let user_posts = load_jsonl_posts(&run.user_posts())?;
    let politician_posts = load_jsonl_posts(&run.politician_posts())?;
    let mut inputs = vec![run.seeds(), run.profiles(), run.user_posts(), run.politician_posts()];
    let annotations = if run.annotations().exists() {
        inputs.push(run.annotations());
        read_annotations(&run.annotations())?
    } else {
        Vec::new()
    };
    let (splits, summary) = build_splits(cfg, &registry, &profiles, &user_posts, &politician_posts, &annotations)?;
    let mut outputs = Vec::new();
    for s in &splits {
        let path = run.split(s.name);
        save_dataset(s, &path, run.format)?;
        outputs.push(path);
    }
    Ok((summary, StageIo { inputs, outputs }))
}

// ---------------------------------------------------------------- train

pub fn run_train(cfg: &RunConfig, run: &RunDir) -> Result<(TrainingMeta, StageIo)> {
    let train = run.load_split(SplitName::Train)?;
    let valid = run.load_split(SplitName::Validation)?;
    let model = fit_model(&train.posts, &valid.posts, &cfg.model)?;
    model.save(&run.model())?;
    Ok((
        model.meta.clone(),
        StageIo {
            inputs: vec![run.split(SplitName::Train), run.split(SplitName::Validation)],
            outputs: vec![run.model()],
        },
    ))
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub reports: Vec<EvalReport>,
}

impl EvalSummary {
    pub fn get(&self, tag: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.experiment_tag == tag)
    }

    pub fn to_table(&self) -> String {
        self.reports.iter().map(EvalReport::to_table).collect::<Vec<_>>().join("\n")
    }
}

/// Relabels posts with the ground-truth party of their author.
fn with_truth(posts: &[Post], truth: &BTreeMap<String, Party>) -> Vec<Post> {
    posts
        .iter()
        .filter_map(|p| truth.get(&p.user_id).map(|t| p.clone().with_label(*t)))
        .collect()
}

/// Post- and profile-level reports on every non-empty test split; with a
/// ground-truth file, also profile-level scores against the true parties
/// of the manual-test users.
pub fn run_eval(run: &RunDir) -> Result<(EvalSummary, StageIo)> {
    let model = LinearModel::load(&run.model())?;
    let mut inputs = vec![run.model()];
    let mut reports = Vec::new();
    for name in [SplitName::HeuristicsTest, SplitName::ManualTest, SplitName::AmbiguousTest] {
        let split = run.load_split(name)?;
        inputs.push(run.split(name));
        if split.is_empty() {
            continue;
        }
        reports.push(post_level_eval(&model, &split.posts, &format!("{name}-post"))?);
        reports.push(profile_level_eval(&model, &split.posts, &format!("{name}-profile"))?);
    }
    if run.truth().exists() {
        let truth = read_truth(&run.truth())?;
        inputs.push(run.truth());
        let manual = run.load_split(SplitName::ManualTest)?;
        let relabeled = with_truth(&manual.posts, &truth);
        if !relabeled.is_empty() {
            reports.push(profile_level_eval(&model, &relabeled, "ground-truth-profile")?);
        }
    }
    if reports.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok((
        EvalSummary { reports },
        StageIo {
            inputs,
            outputs: Vec::new(),
        },
    ))
}

// ---------------------------------------------------------------- curve

pub fn run_curve(cfg: &RunConfig, run: &RunDir) -> Result<(AggregationCurve, StageIo)> {
    let model = LinearModel::load(&run.model())?;
    let split = run.load_split(SplitName::ManualTest)?;
    let curve = aggregation_curve(
        &model,
        &split.posts,
        &CurveConfig {
            k_max: cfg.eval.curve_k_max,
            repetitions: cfg.eval.curve_repetitions,
            seed: cfg.curve_seed(),
        },
    )?;
    Ok((
        curve,
        StageIo {
            inputs: vec![run.model(), run.split(SplitName::ManualTest)],
            outputs: Vec::new(),
        },
    ))
}

// ---------------------------------------------------------------- loo

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicFold {
    pub held_out: TopicShiftResult,
    pub in_domain: TopicShiftResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooSummary {
    pub folds: Vec<TopicFold>,
}

impl LooSummary {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<14} {:>9} {:>9} {:>8}\n", "topic", "held-out", "in-domain", "n_test");
        for f in &self.folds {
            s.push_str(&format!(
                "{:<14} {:>9.4} {:>9.4} {:>8}\n",
                f.held_out.topic.as_str(),
                f.held_out.report.micro_f1,
                f.in_domain.report.micro_f1,
                f.held_out.n_test_posts
            ));
        }
        s
    }
}

/// Leave-one-topic-out folds over the labeled training pool, each paired
/// with its in-domain control. Topics with no posts are skipped.
pub fn topic_folds(corpus: &[Post], registry: &SeedRegistry, model: &ModelConfig, seed: u64) -> Result<LooSummary> {
    let mut folds = Vec::new();
    for t in &registry.topics {
        match leave_one_topic_out(corpus, t.topic_id, &registry.topics, model, seed) {
            Err(Error::EmptyTopic(_)) => continue,
            r => {
                let held_out = r?;
                let in_domain = in_domain_topic_control(corpus, t.topic_id, &registry.topics, model, seed)?;
                folds.push(TopicFold { held_out, in_domain });
            }
        }
    }
    Ok(LooSummary { folds })
}

pub fn run_loo(cfg: &RunConfig, run: &RunDir) -> Result<(LooSummary, StageIo)> {
    let registry = run.registry()?;
    let mut pool = run.load_split(SplitName::Train)?.posts;
    pool.extend(run.load_split(SplitName::Validation)?.posts);
    let summary = topic_folds(&pool, &registry, &cfg.model, cfg.loo_seed())?;
    Ok((
        summary,
        StageIo {
            inputs: vec![run.seeds(), run.split(SplitName::Train), run.split(SplitName::Validation)],
            outputs: Vec::new(),
        },
    ))
}

// ---------------------------------------------------------------- writer-shift

pub fn run_writer_shift(run: &RunDir) -> Result<(EvalReport, StageIo)> {
    let model = LinearModel::load(&run.model())?;
    let split = run.load_split(SplitName::Politicians)?;
    let report = writer_shift_eval(&model, &split.posts)?;
    Ok((
        report,
        StageIo {
            inputs: vec![run.model(), run.split(SplitName::Politicians)],
            outputs: Vec::new(),
        },
    ))
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub post_id: String,
    pub label: Party,
    pub scores: BTreeMap<Party, f64>,
}

pub fn predict_posts(model: &dyn Classify, posts: &[Post]) -> Vec<PredictionRow> {
    posts
        .iter()
        .map(|p| {
            let pred = model.classify(&p.text);
            PredictionRow {
                post_id: p.post_id.clone(),
                label: pred.label,
                scores: Party::ALL.iter().map(|q| (*q, pred.scores[q.index()])).collect(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------- pipeline

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub ingest: IngestSummary,
    pub labeling: LabelingSummary,
    pub agreement: Option<AgreementReport>,
    pub dataset: DatasetSummary,
    pub training: TrainingMeta,
    pub eval: EvalSummary,
    pub curve: Option<AggregationCurve>,
    pub loo: Option<LooSummary>,
    pub writer_shift: Option<EvalReport>,
    /// Profile-level micro-F1 on the manual-test users.
    pub user_level_micro_f1: Option<f64>,
}

/// Runs every stage in order, writing each stage's report. Optional
/// experiments (agreement, curve, topic folds, writer shift) are skipped
/// when their inputs are missing or too small.
pub fn run_pipeline(cfg: &RunConfig, source: &Path, seeds: Option<&Path>, run: &RunDir) -> Result<(PipelineSummary, StageIo)> {
    let mut io = StageIo::default();

    let (ingest, s) = run_ingest(source, seeds, run)?;
    io.merge(s);
    write_report(run, "ingest", &ingest, None)?;

    let (labeling, s) = run_label(cfg, run)?;
    io.merge(s);
    write_report(run, "label", &labeling, None)?;

    let agreement = if run.annotations().exists() {
        let (a, s) = run_agree(run, None)?;
        io.merge(s);
        write_report(run, "agree", &a, Some(&a.to_table()))?;
        Some(a)
    } else {
        None
    };

    let (dataset, s) = run_build_dataset(cfg, run)?;
    io.merge(s);
    write_report(run, "build-dataset", &dataset, None)?;

    let (training, s) = run_train(cfg, run)?;
    io.merge(s);
    write_report(run, "train", &training, None)?;

    let (eval, s) = run_eval(run)?;
    io.merge(s);
    write_report(run, "eval", &eval, Some(&eval.to_table()))?;

    let curve = match run_curve(cfg, run) {
        Ok((c, s)) => {
            io.merge(s);
            write_report(run, "curve", &c, Some(&c.to_csv()))?;
            Some(c)
        }
        Err(Error::TooFewPosts { .. } | Error::EmptyEvaluation) => None,
        Err(e) => return Err(e),
    };

    let loo = match run_loo(cfg, run) {
        Ok((l, s)) => {
            io.merge(s);
            write_report(run, "loo", &l, Some(&l.to_table()))?;
            Some(l)
        }
        Err(Error::TooFewTopics(_)) => None,
        Err(e) => return Err(e),
    };

    let writer_shift = match run_writer_shift(run) {
        Ok((w, s)) => {
            io.merge(s);
            write_report(run, "writer-shift", &w, Some(&w.to_table()))?;
            Some(w)
        }
        Err(Error::EmptyPredictions | Error::EmptyEvaluation) => None,
        Err(e) => return Err(e),
    };

    let user_level_micro_f1 = eval.get("manual-test-profile").map(|r| r.micro_f1);
    let summary = PipelineSummary {
        ingest,
        labeling,
        agreement,
        dataset,
        training,
        eval,
        curve,
        loo,
        writer_shift,
        user_level_micro_f1,
    };
    write_report(run, "pipeline", &summary, None)?;
    io.outputs.push(run.reports());
    Ok((summary, io))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_reads_partial_toml() {
        let cfg = RunConfig::from_toml_str(
            "seed = 3\n[labeling]\nmin_likes = 4\n[synth]\nn_users = 50\n[model.train]\nmax_epochs = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.labeling.min_likes, 4);
        assert_eq!(cfg.synth.n_users, 50);
        assert_eq!(cfg.model.train.max_epochs, 7);
        assert_eq!(cfg.dataset, DatasetConfig::default());
        assert!(RunConfig::from_toml_str("[labeling]\nmin_likes = \"x\"\n").is_err());
    }

    #[test]
    fn seed_fan_out_is_stable() {
        let a = RunConfig::default().with_seed(9);
        let b = RunConfig::default().with_seed(9);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.split_seed(), a.curve_seed());
        assert_ne!(a.fingerprint(), RunConfig::default().with_seed(10).fingerprint());
    }
}
