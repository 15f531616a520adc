//! C ABI for plan-harvest.
//!
//! Objects cross the boundary as opaque handles (`PhCorpus`, `PhPlan`) that
//! the caller frees with the matching `*_free` function. Every fallible call
//! returns a `PhStatus`; on failure `ph_last_error_message` describes the
//! problem for the calling thread. Strings returned through out-parameters
//! are owned by the caller and released with `ph_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use plan_harvest::corpus::{compute_stats, load_corpus, parse_corpus, AnnotatedText};
use plan_harvest::prompt::{build_prompt, default_sentence_cap, ShotStrategy, TokenBudget};
use plan_harvest::scorer::{score_text, ScoreOptions};
use plan_harvest::{
    estimate_tokens, order_agreement, parse_plan, render_plan, ParseDiagnostics, Plan,
};

/// Sentence cap argument: use the dataset's default cap.
pub const PH_CAP_DATASET_DEFAULT: i32 = -1;
/// Sentence cap argument: keep every sentence.
pub const PH_CAP_NONE: i32 = 0;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Corpus = 5,
    NotFound = 6,
    Prompt = 7,
    Panic = 8,
}

pub struct PhCorpus {
    texts: Vec<AnnotatedText>,
}

pub struct PhPlan {
    plan: Plan,
    diagnostics: ParseDiagnostics,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhStats {
    pub labeled_texts: usize,
    pub total_words: usize,
    pub action_name_rate: f64,
    pub action_argument_rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhScore {
    pub name_total_right: usize,
    pub name_total_tagged: usize,
    pub name_total_truth: usize,
    pub arg_total_right: usize,
    pub arg_total_tagged: usize,
    pub arg_total_truth: usize,
    pub name_precision: f64,
    pub name_recall: f64,
    pub name_f1: f64,
    pub arg_precision: f64,
    pub arg_recall: f64,
    pub arg_f1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhOrder {
    pub common_actions: usize,
    pub discordant_pairs: usize,
    pub exact_order_match: bool,
    /// False when fewer than two actions matched; `kendall_tau` is then 0.
    pub has_tau: bool,
    pub kendall_tau: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

struct Failure(PhStatus, String);

impl Failure {
    fn new(status: PhStatus, message: impl std::fmt::Display) -> Self {
        Self(status, message.to_string())
    }
}

type Res<T> = Result<T, Failure>;

/// Runs `f`, records any error for `ph_last_error_message` and converts
/// panics into `PhStatus::Panic`.
fn guard(f: impl FnOnce() -> Res<()>) -> PhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PhStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PhStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(Failure::new(
            PhStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(PhStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure::new(PhStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Res<()> {
    if out.is_null() {
        return Err(Failure::new(
            PhStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    out.write(value);
    Ok(())
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

fn find_text<'a>(corpus: &'a PhCorpus, id: &str) -> Res<&'a AnnotatedText> {
    corpus
        .texts
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Failure::new(PhStatus::NotFound, format!("no text with id `{id}`")))
}

/// Message for the last failed call on this thread, or null after a
/// successful one. Valid until the next `ph_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ph_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ph_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ph_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSONL corpus. An empty `dataset` accepts any dataset tag.
///
/// # Safety
/// `path` and `dataset` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_corpus_load(
    path: *const c_char,
    dataset: *const c_char,
    out: *mut *mut PhCorpus,
) -> PhStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let dataset = str_arg(dataset, "dataset")?;
        let texts = load_corpus(Path::new(path), dataset).map_err(|e| {
            let status = match e {
                plan_harvest::corpus::CorpusError::Io { .. } => PhStatus::Io,
                _ => PhStatus::Corpus,
            };
            Failure::new(status, e)
        })?;
        write_out(out, Box::into_raw(Box::new(PhCorpus { texts })), "out")
    })
}

/// Parses JSONL corpus text held in memory.
///
/// # Safety
/// `jsonl` and `dataset` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_corpus_parse(
    jsonl: *const c_char,
    dataset: *const c_char,
    out: *mut *mut PhCorpus,
) -> PhStatus {
    guard(|| {
        let input = str_arg(jsonl, "jsonl")?;
        let dataset = str_arg(dataset, "dataset")?;
        let texts = parse_corpus(input, dataset).map_err(|e| Failure::new(PhStatus::Corpus, e))?;
        write_out(out, Box::into_raw(Box::new(PhCorpus { texts })), "out")
    })
}

/// # Safety
/// `corpus` must be null or a handle from `ph_corpus_load`/`ph_corpus_parse`.
#[no_mangle]
pub unsafe extern "C" fn ph_corpus_free(corpus: *mut PhCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of texts, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn ph_corpus_len(corpus: *const PhCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.texts.len())
}

/// Copies the id of the text at `index` into a new string.
///
/// # Safety
/// `corpus` must be a live corpus handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_corpus_text_id(
    corpus: *const PhCorpus,
    index: usize,
    out: *mut *mut c_char,
) -> PhStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let text = corpus.texts.get(index).ok_or_else(|| {
            Failure::new(
                PhStatus::InvalidArgument,
                format!(
                    "index {index} out of range for {} texts",
                    corpus.texts.len()
                ),
            )
        })?;
        write_out(out, c_string(text.id.clone()), "out")
    })
}

/// # Safety
/// `corpus` must be a live corpus handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_corpus_stats(corpus: *const PhCorpus, out: *mut PhStats) -> PhStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let s = compute_stats(&corpus.texts).map_err(|e| Failure::new(PhStatus::Corpus, e))?;
        write_out(
            out,
            PhStats {
                labeled_texts: s.labeled_texts,
                total_words: s.total_words,
                action_name_rate: s.action_name_rate,
                action_argument_rate: s.action_argument_rate,
            },
            "out",
        )
    })
}

/// Parses plan notation from a completion. Never fails on malformed input;
/// inspect `ph_plan_truncated` and `ph_plan_skipped_spans` instead.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_plan_parse(text: *const c_char, out: *mut *mut PhPlan) -> PhStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let (plan, diagnostics) = parse_plan(text);
        write_out(
            out,
            Box::into_raw(Box::new(PhPlan { plan, diagnostics })),
            "out",
        )
    })
}

/// # Safety
/// `plan` must be null or a handle from `ph_plan_parse`.
#[no_mangle]
pub unsafe extern "C" fn ph_plan_free(plan: *mut PhPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn ph_plan_len(plan: *const PhPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.plan.len())
}

/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn ph_plan_truncated(plan: *const PhPlan) -> bool {
    plan.as_ref().is_some_and(|p| p.diagnostics.truncated)
}

/// Number of skipped (unparseable) spans.
///
/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn ph_plan_skipped_spans(plan: *const PhPlan) -> usize {
    plan.as_ref()
        .map_or(0, |p| p.diagnostics.skipped_spans.len())
}

/// Renders the plan in canonical notation.
///
/// # Safety
/// `plan` must be a live plan handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_plan_render(plan: *const PhPlan, out: *mut *mut c_char) -> PhStatus {
    guard(|| {
        let plan = ref_arg(plan, "plan")?;
        write_out(out, c_string(render_plan(&plan.plan)), "out")
    })
}

/// Builds the leave-one-out prompt for `test_id`. `sentence_cap` is a
/// positive cap, `PH_CAP_NONE` or `PH_CAP_DATASET_DEFAULT`.
/// `out_token_estimate` may be null.
///
/// # Safety
/// `corpus` must be a live corpus handle, `test_id` a NUL-terminated string
/// and `out_prompt` writable.
#[no_mangle]
pub unsafe extern "C" fn ph_prompt_render(
    corpus: *const PhCorpus,
    test_id: *const c_char,
    shots: usize,
    seed: u64,
    sentence_cap: i32,
    out_prompt: *mut *mut c_char,
    out_token_estimate: *mut usize,
) -> PhStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let test = find_text(corpus, str_arg(test_id, "test_id")?)?;
        let cap = match sentence_cap {
            PH_CAP_DATASET_DEFAULT => default_sentence_cap(&test.dataset),
            PH_CAP_NONE => None,
            n if n > 0 => Some(n as usize),
            n => {
                return Err(Failure::new(
                    PhStatus::InvalidArgument,
                    format!("invalid sentence cap {n}"),
                ))
            }
        };
        let strategy = ShotStrategy::new(shots, seed)
            .map_err(|e| Failure::new(PhStatus::InvalidArgument, e))?;
        let bundle = build_prompt(&corpus.texts, &strategy, test, cap, TokenBudget::default())
            .map_err(|e| Failure::new(PhStatus::Prompt, e))?;
        if out_prompt.is_null() {
            return Err(Failure::new(PhStatus::NullPointer, "out_prompt is null"));
        }
        if !out_token_estimate.is_null() {
            out_token_estimate.write(bundle.token_estimate);
        }
        out_prompt.write(c_string(bundle.rendered));
        Ok(())
    })
}

/// Scores `plan` against the gold plan of `test_id`.
///
/// # Safety
/// `corpus` and `plan` must be live handles, `test_id` a NUL-terminated
/// string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ph_score_text(
    corpus: *const PhCorpus,
    test_id: *const c_char,
    plan: *const PhPlan,
    optional_lenient: bool,
    out: *mut PhScore,
) -> PhStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let plan = ref_arg(plan, "plan")?;
        let text = find_text(corpus, str_arg(test_id, "test_id")?)?;
        let f = score_text(text, &plan.plan, ScoreOptions { optional_lenient }).flat();
        write_out(
            out,
            PhScore {
                name_total_right: f.name_total_right,
                name_total_tagged: f.name_total_tagged,
                name_total_truth: f.name_total_truth,
                arg_total_right: f.arg_total_right,
                arg_total_tagged: f.arg_total_tagged,
                arg_total_truth: f.arg_total_truth,
                name_precision: f.name_precision,
                name_recall: f.name_recall,
                name_f1: f.name_f1,
                arg_precision: f.arg_precision,
                arg_recall: f.arg_recall,
                arg_f1: f.arg_f1,
            },
            "out",
        )
    })
}

/// Order agreement between the gold plan of `test_id` and `plan`.
///
/// # Safety
/// Same requirements as `ph_score_text`.
#[no_mangle]
pub unsafe extern "C" fn ph_order_agreement(
    corpus: *const PhCorpus,
    test_id: *const c_char,
    plan: *const PhPlan,
    out: *mut PhOrder,
) -> PhStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let plan = ref_arg(plan, "plan")?;
        let text = find_text(corpus, str_arg(test_id, "test_id")?)?;
        let r = order_agreement(&text.gold, &plan.plan);
        write_out(
            out,
            PhOrder {
                common_actions: r.common_actions,
                discordant_pairs: r.discordant_pairs,
                exact_order_match: r.exact_order_match,
                has_tau: r.kendall_tau.is_some(),
                kendall_tau: r.kendall_tau.unwrap_or(0.0),
            },
            "out",
        )
    })
}

/// Prompt token estimate (one token per four characters, rounded up).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ph_estimate_tokens(text: *const c_char, out: *mut usize) -> PhStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        write_out(out, estimate_tokens(text), "out")
    })
}
