use std::path::PathBuf;

use crate::party::Party;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: expected `{expected}`, found `{found}`")]
    MalformedHeader {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("duplicate post_id `{0}`")]
    DuplicatePostId(String),
    #[error("unknown split name `{0}`")]
    UnknownSplit(String),
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("post `{0}` is unlabeled")]
    UnlabeledPost(String),
    #[error("post `{0}` is missing from the hydration store")]
    MissingHydration(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("source client failed after {attempts} attempt(s): {message}")]
    Source { attempts: u32, message: String },
    #[error("annotator `{annotator}` labeled user `{user}` more than once")]
    DuplicateAnnotation { user: String, annotator: String },
    #[error("no annotations given")]
    EmptyAnnotations,
    #[error("need at least 2 items with 2 or more annotations, found {0}")]
    TooFewPairableItems(usize),
    #[error("heuristic and manual label sets do not overlap")]
    EmptyOverlap,
    #[error("vocabulary is empty after applying min_doc_freq = {0}")]
    EmptyVocabulary(usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("class {0} is absent from the training data")]
    MissingClass(Party),
    #[error("training diverged at epoch {0} (non-finite loss)")]
    Diverged(usize),
    #[error("length mismatch: {gold} gold labels vs {predicted} predictions")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("no predictions to aggregate")]
    EmptyPredictions,
    #[error("user `{user}` has {found} posts, {required} required")]
    TooFewPosts {
        user: String,
        found: usize,
        required: usize,
    },
    #[error("user `{0}` has posts with conflicting labels")]
    ConflictingUserLabels(String),
    #[error("corpus needs at least 2 topics, found {0}")]
    TooFewTopics(usize),
    #[error("held-out topic `{0}` has no posts")]
    EmptyTopic(String),
    #[error("evaluation input is empty")]
    EmptyEvaluation,
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
