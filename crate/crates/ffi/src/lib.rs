//! C ABI over the `leaning` toolkit.
//!
//! Every fallible call returns a `LeaningStatus`; on failure a message is
//! available from `leaning_last_error` on the same thread. Models are
//! opaque handles created by `leaning_model_load` and released with
//! `leaning_model_free`. Party indices follow the spectrum order
//! Lewica = 0, PO = 1, PL2050 = 2, PiS = 3, Konfederacja = 4.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use leaning::agreement::{krippendorff_alpha, AnnotationRecord};
use leaning::classifier::LinearModel;
use leaning::corpus::{TopicId, UserProfile};
use leaning::ingest::TopicMatcher;
use leaning::labeler::{assign_label, LabelingThresholds};
use leaning::seeds::default_topics;
use leaning::text::count_plain_words;
use leaning::{Error, Party, PartyLabel, Tally};

pub const LEANING_N_PARTIES: usize = 5;
pub const LEANING_N_TOPICS: usize = 4;
/// Label value for a user whose top like counts tie.
pub const LEANING_LABEL_INCONCLUSIVE: i32 = -1;
/// Label value for a user below the like threshold.
pub const LEANING_LABEL_EXCLUDED: i32 = -2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaningStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Model = 5,
    Computation = 6,
    Panic = 7,
}

/// Opaque classifier handle.
pub struct LeaningModel {
    inner: LinearModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> LeaningStatus {
    match e {
        Error::Io { .. } => LeaningStatus::Io,
        Error::Model(_) | Error::Json(_) => LeaningStatus::Model,
        Error::Config(_) | Error::UnknownParty(_) | Error::DuplicateAnnotation { .. } | Error::EmptyAnnotations => {
            LeaningStatus::InvalidArgument
        }
        _ => LeaningStatus::Computation,
    }
}

fn fail(status: LeaningStatus, msg: impl Into<String>) -> LeaningStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into `LeaningStatus::Panic`.
fn guarded(f: impl FnOnce() -> LeaningStatus) -> LeaningStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LeaningStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, LeaningStatus> {
    if p.is_null() {
        return Err(fail(LeaningStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LeaningStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn label_code(label: Option<PartyLabel>) -> i32 {
    match label {
        Some(PartyLabel::Party(p)) => p.index() as i32,
        Some(PartyLabel::Inconclusive) => LEANING_LABEL_INCONCLUSIVE,
        None => LEANING_LABEL_EXCLUDED,
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn leaning_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn leaning_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static name of party `index`, or null when out of range.
#[no_mangle]
pub extern "C" fn leaning_party_name(index: i32) -> *const c_char {
    const NAMES: [&str; LEANING_N_PARTIES] = ["Lewica\0", "PO\0", "PL2050\0", "PiS\0", "Konfederacja\0"];
    usize::try_from(index)
        .ok()
        .and_then(|i| NAMES.get(i))
        .map_or(ptr::null(), |s| s.as_ptr().cast())
}

/// Loads a model file. On success `*out` owns a handle that must be
/// released with `leaning_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn leaning_model_load(path: *const c_char, out: *mut *mut LeaningModel) -> LeaningStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LeaningStatus::NullPointer, "`out` is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match LinearModel::load(Path::new(path)) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(LeaningModel { inner: m }));
                LeaningStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a handle from `leaning_model_load`. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leaning_model_free(model: *mut LeaningModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features in the model vocabulary.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn leaning_model_dim(model: *const LeaningModel, out: *mut usize) -> LeaningStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(LeaningStatus::NullPointer, "null argument");
        }
        *out = (*model).inner.features.dim();
        LeaningStatus::Ok
    })
}

/// Classifies one text. Writes the party index to `*label` and, when
/// `scores` is non-null, the five softmax scores in party order.
///
/// # Safety
/// `model` must be a live handle, `text` NUL-terminated, `label` writable
/// and `scores` null or writable for `LEANING_N_PARTIES` doubles.
#[no_mangle]
pub unsafe extern "C" fn leaning_model_predict(
    model: *const LeaningModel,
    text: *const c_char,
    label: *mut i32,
    scores: *mut f64,
) -> LeaningStatus {
    guarded(|| {
        if model.is_null() || label.is_null() {
            return fail(LeaningStatus::NullPointer, "`model` or `label` is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let pred = (*model).inner.predict(text);
        *label = pred.label.index() as i32;
        if !scores.is_null() {
            ptr::copy_nonoverlapping(pred.scores.as_ptr(), scores, LEANING_N_PARTIES);
        }
        LeaningStatus::Ok
    })
}

/// Applies the like-tally rules to one user. `tally` holds five counts in
/// party order. `*label` receives a party index,
/// `LEANING_LABEL_INCONCLUSIVE` or `LEANING_LABEL_EXCLUDED`.
///
/// # Safety
/// `tally` must be readable for `LEANING_N_PARTIES` values and `label`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn leaning_assign_label(
    tally: *const u32,
    min_likes: u32,
    ambiguous_mode: bool,
    label: *mut i32,
) -> LeaningStatus {
    guarded(|| {
        if tally.is_null() || label.is_null() {
            return fail(LeaningStatus::NullPointer, "`tally` or `label` is null");
        }
        let mut t = Tally::default();
        t.0.copy_from_slice(std::slice::from_raw_parts(tally, LEANING_N_PARTIES));
        let thresholds = LabelingThresholds {
            min_likes,
            ambiguous_mode,
        };
        *label = label_code(assign_label(&UserProfile::new("", t), &thresholds).and_then(|p| p.assigned));
        LeaningStatus::Ok
    })
}

/// Nominal Krippendorff's alpha over `n` annotations given as parallel
/// arrays of item ids, annotator ids and party indices.
///
/// # Safety
/// The three arrays must be readable for `n` elements and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn leaning_krippendorff_alpha(
    items: *const u32,
    annotators: *const u32,
    labels: *const i32,
    n: usize,
    out: *mut f64,
) -> LeaningStatus {
    guarded(|| {
        if out.is_null() || (n > 0 && (items.is_null() || annotators.is_null() || labels.is_null())) {
            return fail(LeaningStatus::NullPointer, "null argument");
        }
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let code = *labels.add(i);
            let Some(party) = usize::try_from(code).ok().and_then(Party::from_index) else {
                return fail(LeaningStatus::InvalidArgument, format!("label {code} at position {i} is not a party"));
            };
            records.push(AnnotationRecord::new(
                (*items.add(i)).to_string(),
                (*annotators.add(i)).to_string(),
                party,
            ));
        }
        match krippendorff_alpha(&records) {
            Ok(a) => {
                *out = a;
                LeaningStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Matches the default topic keywords. Bit `i` of `*mask` is set when
/// topic `i` matches (abortion = 0, eu_cjeu = 1, lextvn = 2,
/// polish_order = 3).
///
/// # Safety
/// `text` must be NUL-terminated and `mask` writable.
#[no_mangle]
pub unsafe extern "C" fn leaning_match_topics(text: *const c_char, mask: *mut u32) -> LeaningStatus {
    guarded(|| {
        if mask.is_null() {
            return fail(LeaningStatus::NullPointer, "`mask` is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let found = TopicMatcher::new(&default_topics()).match_text(text);
        *mask = found.iter().fold(0, |m, t: &TopicId| m | (1 << t.index()));
        LeaningStatus::Ok
    })
}

/// Words that are not hashtags, mentions or URLs.
///
/// # Safety
/// `text` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn leaning_count_plain_words(text: *const c_char, out: *mut usize) -> LeaningStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LeaningStatus::NullPointer, "`out` is null");
        }
        match str_arg(text, "text") {
            Ok(t) => {
                *out = count_plain_words(t);
                LeaningStatus::Ok
            }
            Err(s) => s,
        }
    })
}
