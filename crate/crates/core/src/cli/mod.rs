//! Run orchestration behind the `plan-harvest` binary.
//!
//! Every subcommand is a library call so it can be driven from tests with an
//! injected transport. Output files are deterministic for a given config and
//! warm cache.

mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    prompt_digest, BackendError, CacheError, CompletionBackend, CompletionParams, LiveBackend,
    LiveConfig, RecordingBackend, ReplayBackend, ReplayCache, Transport,
};
use crate::corpus::{compute_stats, load_corpus, AnnotatedText, CorpusError, DatasetStats};
use crate::notation::{parse_plan, render_plan, ParseDiagnostics, Plan};
use crate::ordering::{order_agreement, OrderReport};
use crate::prompt::{build_prompt, PromptBundle, PromptError, ShotStrategy, TokenBudget};
use crate::scorer::{score_corpus, score_text, FlatScoreReport, ScoreOptions, ScoreReport};

pub use report::{published_scores, render_score_table, render_sweep_tsv, PublishedScore};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("replay cache is missing {} completion(s): {}", .0.len(), format_missing(.0))]
    MissingCompletions(Vec<(String, String)>),
    #[error("no extraction records for: {}", .0.join(", "))]
    MissingRecords(Vec<String>),
    #[error("no extraction records found in {0}")]
    NoExtractions(PathBuf),
    #[error("{path}: {message}")]
    BadRecord { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_missing(missing: &[(String, String)]) -> String {
    missing
        .iter()
        .map(|(id, digest)| format!("{id}={digest}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl CliError {
    /// Process exit code for a run that could not complete.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    Replay,
    Record,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub dataset: String,
    pub shots: usize,
    pub seed: u64,
    pub sentence_cap: Option<usize>,
    pub mode: BackendMode,
    pub cache: Option<PathBuf>,
    pub params: CompletionParams,
    pub out_dir: PathBuf,
    pub live: LiveConfig,
    pub score: ScoreOptions,
}

impl RunConfig {
    /// Two-shot replay run with the default decoding parameters and the
    /// dataset's default sentence cap.
    pub fn new(corpus: impl Into<PathBuf>, dataset: &str, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            dataset: dataset.to_string(),
            shots: 2,
            seed: 0,
            sentence_cap: crate::prompt::default_sentence_cap(dataset),
            mode: BackendMode::Replay,
            cache: None,
            params: CompletionParams::default(),
            out_dir: out_dir.into(),
            live: LiveConfig::default(),
            score: ScoreOptions::default(),
        }
    }

    pub fn budget(&self) -> TokenBudget {
        TokenBudget {
            completion_reserve: self.params.max_tokens as usize,
            ..TokenBudget::default()
        }
    }

    fn cache_path(&self) -> Result<&Path, CliError> {
        self.cache
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("--cache is required in {:?} mode", self.mode)))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, contents).map_err(io_error(path))
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("report values serialize");
    s.push('\n');
    s
}

/// Computes corpus statistics and writes `stats.json` to the output directory.
pub fn cmd_stats(config: &RunConfig) -> Result<DatasetStats, CliError> {
    let corpus = load_corpus(&config.corpus, &config.dataset)?;
    let stats = compute_stats(&corpus)?;
    write_file(&config.out_dir.join("stats.json"), &json_line(&stats))?;
    Ok(stats)
}

/// The prompt that `extract` would send for `test_id`.
pub fn cmd_prompt(config: &RunConfig, test_id: &str) -> Result<PromptBundle, CliError> {
    let corpus = load_corpus(&config.corpus, &config.dataset)?;
    let test = corpus
        .iter()
        .find(|t| t.id == test_id)
        .ok_or_else(|| CliError::Config(format!("no text with id `{test_id}` in the corpus")))?;
    let strategy = ShotStrategy::new(config.shots, config.seed)?;
    Ok(build_prompt(
        &corpus,
        &strategy,
        test,
        config.sentence_cap,
        config.budget(),
    )?)
}

/// One test text's extraction result as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub test_id: String,
    pub engine: String,
    pub shots: usize,
    pub seed: u64,
    pub example_ids: Vec<String>,
    pub prompt_digest: Option<String>,
    pub token_estimate: Option<usize>,
    pub truncation_applied: bool,
    pub completion: Option<String>,
    pub plan: Option<Plan>,
    pub rendered_plan: Option<String>,
    pub diagnostics: Option<ParseDiagnostics>,
    pub error: Option<String>,
}

impl ExtractionRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub dir: PathBuf,
    pub written: usize,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTextRow {
    pub id: String,
    pub failed: bool,
    pub name_precision: f64,
    pub name_recall: f64,
    pub name_f1: f64,
    pub arg_precision: f64,
    pub arg_recall: f64,
    pub arg_f1: f64,
    pub order: OrderReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub report: ScoreReport,
    pub rows: Vec<PerTextRow>,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub shots: usize,
    pub status: SweepStatus,
    pub name_f1: Option<f64>,
    pub arg_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepStatus {
    Ok,
    Partial,
    Failed,
}

impl SweepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepStatus::Ok => "ok",
            SweepStatus::Partial => "partial",
            SweepStatus::Failed => "failed",
        }
    }
}

/// A loaded corpus plus the backend chosen by the run config.
pub struct Harness {
    config: RunConfig,
    corpus: Vec<AnnotatedText>,
    backend: Box<dyn CompletionBackend>,
    cache: Option<Arc<ReplayCache>>,
}

impl Harness {
    /// Builds the backend for `config.mode`. `transport` is only used by the
    /// live and record modes.
    pub fn new(config: RunConfig, transport: Arc<dyn Transport>) -> Result<Self, CliError> {
        config.params.validate()?;
        let corpus = load_corpus(&config.corpus, &config.dataset)?;
        let (backend, cache): (Box<dyn CompletionBackend>, _) = match config.mode {
            BackendMode::Replay => {
                let cache = Arc::new(ReplayCache::load(config.cache_path()?)?);
                (Box::new(ReplayBackend::new(cache.clone())), Some(cache))
            }
            BackendMode::Record => {
                let cache = Arc::new(ReplayCache::open(config.cache_path()?)?);
                let live = LiveBackend::from_env(config.live.clone(), transport)?;
                (
                    Box::new(RecordingBackend::new(Box::new(live), cache.clone())),
                    Some(cache),
                )
            }
            BackendMode::Live => (
                Box::new(LiveBackend::from_env(config.live.clone(), transport)?),
                None,
            ),
        };
        Ok(Self {
            config,
            corpus,
            backend,
            cache,
        })
    }

    /// Uses `backend` directly, whatever `config.mode` says.
    pub fn with_backend(
        config: RunConfig,
        backend: Box<dyn CompletionBackend>,
    ) -> Result<Self, CliError> {
        config.params.validate()?;
        let corpus = load_corpus(&config.corpus, &config.dataset)?;
        Ok(Self {
            config,
            corpus,
            backend,
            cache: None,
        })
    }

    /// A harness that refuses completions; enough for scoring.
    pub fn offline(config: RunConfig) -> Result<Self, CliError> {
        Self::with_backend(config, Box::new(Offline))
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn corpus(&self) -> &[AnnotatedText] {
        &self.corpus
    }

    pub fn extraction_dir(&self) -> PathBuf {
        self.config.out_dir.join("extractions")
    }

    pub fn extract(&self) -> Result<ExtractSummary, CliError> {
        self.extract_into(self.config.shots, &self.extraction_dir())
    }

    pub fn score(&self, extraction_dir: &Path) -> Result<ScoreSummary, CliError> {
        self.score_into(extraction_dir, &self.config.out_dir, self.config.shots)
    }

    /// Leave-one-out prompts for every text, in corpus order.
    fn prompts(&self, strategy: &ShotStrategy) -> Vec<Result<PromptBundle, PromptError>> {
        self.corpus
            .iter()
            .map(|test| {
                build_prompt(
                    &self.corpus,
                    strategy,
                    test,
                    self.config.sentence_cap,
                    self.config.budget(),
                )
            })
            .collect()
    }

    fn extract_into(&self, shots: usize, dir: &Path) -> Result<ExtractSummary, CliError> {
        let strategy = ShotStrategy::new(shots, self.config.seed)?;
        let params = &self.config.params;
        let bundles = self.prompts(&strategy);

        if self.config.mode == BackendMode::Replay {
            if let Some(cache) = &self.cache {
                let missing: Vec<(String, String)> = bundles
                    .iter()
                    .flatten()
                    .map(|b| (b.test_id.clone(), prompt_digest(&b.rendered, params)))
                    .filter(|(_, d)| !cache.contains(d))
                    .collect();
                if !missing.is_empty() {
                    return Err(CliError::MissingCompletions(missing));
                }
            }
        }

        let records = self.run_completions(&strategy, &bundles)?;

        if dir.exists() {
            for entry in fs::read_dir(dir).map_err(io_error(dir))? {
                let path = entry.map_err(io_error(dir))?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    fs::remove_file(&path).map_err(io_error(&path))?;
                }
            }
        }
        let mut failed = Vec::new();
        for (idx, record) in records.iter().enumerate() {
            if record.failed() {
                failed.push(record.test_id.clone());
            }
            let name = format!("{idx:05}_{}.json", file_stem(&record.test_id));
            let mut body = serde_json::to_string_pretty(record).expect("records serialize");
            body.push('\n');
            write_file(&dir.join(name), &body)?;
        }
        Ok(ExtractSummary {
            dir: dir.to_path_buf(),
            written: records.len(),
            failed,
        })
    }

    fn run_completions(
        &self,
        strategy: &ShotStrategy,
        bundles: &[Result<PromptBundle, PromptError>],
    ) -> Result<Vec<ExtractionRecord>, CliError> {
        let params = &self.config.params;
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let fatal: Mutex<Option<BackendError>> = Mutex::new(None);
        let slots: Mutex<Vec<Option<ExtractionRecord>>> = Mutex::new(vec![None; bundles.len()]);
        let workers = self
            .config
            .live
            .max_in_flight
            .clamp(1, bundles.len().max(1));

        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= bundles.len() {
                        return;
                    }
                    let test_id = &self.corpus[i].id;
                    let mut record = ExtractionRecord {
                        test_id: test_id.clone(),
                        engine: params.engine.clone(),
                        shots: strategy.shots(),
                        seed: strategy.seed,
                        example_ids: Vec::new(),
                        prompt_digest: None,
                        token_estimate: None,
                        truncation_applied: false,
                        completion: None,
                        plan: None,
                        rendered_plan: None,
                        diagnostics: None,
                        error: None,
                    };
                    match &bundles[i] {
                        Err(e) => record.error = Some(e.to_string()),
                        Ok(bundle) => {
                            record.example_ids = bundle.example_ids.clone();
                            record.prompt_digest = Some(prompt_digest(&bundle.rendered, params));
                            record.token_estimate = Some(bundle.token_estimate);
                            record.truncation_applied = bundle.truncation_applied;
                            match self.backend.complete(&bundle.rendered, params) {
                                Ok(completion) => {
                                    let (plan, diag) = parse_plan(&completion);
                                    record.rendered_plan = Some(render_plan(&plan));
                                    record.plan = Some(plan);
                                    record.diagnostics = Some(diag);
                                    record.completion = Some(completion);
                                }
                                Err(e) if e.is_fatal() => {
                                    abort.store(true, Ordering::SeqCst);
                                    fatal.lock().unwrap().get_or_insert(e);
                                    return;
                                }
                                Err(e) => {
                                    log::warn!("{test_id}: {e}");
                                    record.error = Some(e.to_string());
                                }
                            }
                        }
                    }
                    slots.lock().unwrap()[i] = Some(record);
                });
            }
        });

        if let Some(e) = fatal.into_inner().unwrap() {
            return Err(e.into());
        }
        Ok(slots.into_inner().unwrap().into_iter().flatten().collect())
    }

    fn score_into(&self, dir: &Path, out: &Path, shots: usize) -> Result<ScoreSummary, CliError> {
        let records = read_extractions(dir)?;
        let missing: Vec<String> = self
            .corpus
            .iter()
            .filter(|t| !records.contains_key(&t.id))
            .map(|t| t.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::MissingRecords(missing));
        }
        let known: HashMap<&str, ()> = self.corpus.iter().map(|t| (t.id.as_str(), ())).collect();
        if let Some(stray) = records.keys().find(|id| !known.contains_key(id.as_str())) {
            return Err(CliError::BadRecord {
                path: dir.to_path_buf(),
                message: format!("record `{stray}` is not in the corpus"),
            });
        }

        let empty = Plan::default();
        let mut failed = Vec::new();
        let pairs: Vec<(&AnnotatedText, &Plan, bool)> = self
            .corpus
            .iter()
            .map(|text| {
                let record = &records[&text.id];
                let plan = if record.failed() {
                    failed.push(text.id.clone());
                    &empty
                } else {
                    record.plan.as_ref().unwrap_or(&empty)
                };
                (text, plan, record.failed())
            })
            .collect();

        let options = self.config.score;
        let report = score_corpus(pairs.iter().map(|(t, p, _)| (*t, *p)), options)
            .map_err(|_| CliError::NoExtractions(dir.to_path_buf()))?;
        let rows: Vec<PerTextRow> = pairs
            .iter()
            .map(|(text, plan, failed)| {
                let s = score_text(text, plan, options);
                PerTextRow {
                    id: text.id.clone(),
                    failed: *failed,
                    name_precision: s.name_precision,
                    name_recall: s.name_recall,
                    name_f1: s.name_f1,
                    arg_precision: s.arg_precision,
                    arg_recall: s.arg_recall,
                    arg_f1: s.arg_f1,
                    order: order_agreement(&text.gold, plan),
                }
            })
            .collect();

        let engine = records
            .values()
            .next()
            .map(|r| r.engine.clone())
            .unwrap_or_else(|| self.config.params.engine.clone());
        write_file(&out.join("score.json"), &json_line(&report.flat()))?;
        write_file(
            &out.join("per_text.jsonl"),
            &rows.iter().map(json_line).collect::<String>(),
        )?;
        write_file(
            &out.join("report.txt"),
            &render_score_table(&engine, &self.config.dataset, shots, &report, &rows),
        )?;
        Ok(ScoreSummary {
            report,
            rows,
            failed,
        })
    }

    /// Extract and score once per shot count under `out_dir/shots-N/`, then
    /// write `sweep.tsv` and `sweep.jsonl`. A shot count that cannot run is
    /// reported as a failed row.
    pub fn sweep(&self, shots_list: &[usize]) -> Result<Vec<SweepRow>, CliError> {
        if shots_list.is_empty() {
            return Err(CliError::Config(
                "sweep needs at least one shot count".into(),
            ));
        }
        let mut rows = Vec::new();
        for &shots in shots_list {
            let out = self.config.out_dir.join(format!("shots-{shots}"));
            let dir = out.join("extractions");
            let result = self
                .extract_into(shots, &dir)
                .and_then(|ex| self.score_into(&dir, &out, shots).map(|sc| (ex, sc)));
            let row = match result {
                Ok((ex, sc)) => SweepRow {
                    shots,
                    status: if ex.failed.is_empty() {
                        SweepStatus::Ok
                    } else {
                        SweepStatus::Partial
                    },
                    name_f1: Some(sc.report.name_f1),
                    arg_f1: Some(sc.report.arg_f1),
                    error: None,
                },
                Err(e @ CliError::Backend(_)) if matches!(&e, CliError::Backend(b) if b.is_fatal()) => {
                    return Err(e)
                }
                Err(e) => {
                    log::warn!("{shots}-shot run failed: {e}");
                    SweepRow {
                        shots,
                        status: SweepStatus::Failed,
                        name_f1: None,
                        arg_f1: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            rows.push(row);
        }
        write_file(
            &self.config.out_dir.join("sweep.tsv"),
            &render_sweep_tsv(&rows),
        )?;
        write_file(
            &self.config.out_dir.join("sweep.jsonl"),
            &rows.iter().map(json_line).collect::<String>(),
        )?;
        Ok(rows)
    }
}

struct Offline;

impl CompletionBackend for Offline {
    fn complete(&self, _: &str, _: &CompletionParams) -> Result<String, BackendError> {
        Err(BackendError::Transport {
            message: "backend disabled for offline scoring".into(),
            attempts: 0,
        })
    }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Reads every `*.json` extraction record in `dir`, keyed by test id.
pub fn read_extractions(dir: &Path) -> Result<BTreeMap<String, ExtractionRecord>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::NoExtractions(dir.to_path_buf()));
    }
    let mut records = BTreeMap::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(io_error(&path))?;
        let record: ExtractionRecord =
            serde_json::from_str(&text).map_err(|e| CliError::BadRecord {
                path: path.clone(),
                message: e.to_string(),
            })?;
        if records.contains_key(&record.test_id) {
            return Err(CliError::BadRecord {
                path,
                message: format!("duplicate record for `{}`", record.test_id),
            });
        }
        records.insert(record.test_id.clone(), record);
    }
    Ok(records)
}

/// Reads a `score.json` written by [`Harness::score`].
pub fn read_score(path: &Path) -> Result<ScoreReport, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let flat: FlatScoreReport = serde_json::from_str(&text).map_err(|e| CliError::BadRecord {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(flat.into())
}
