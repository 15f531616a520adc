//! Annotated instruction corpora.
//!
//! A corpus file is UTF-8 JSON Lines, one [`AnnotatedText`] per line:
//!
//! ```text
//! {"id":"whs-1","dataset":"WHS","sentences":["Click Start."],"gold":[{"kind":"essential","members":[{"name":"click","args":["start"],"sentence_index":0}]}]}
//! ```
//!
//! The position of a slot in `gold` is its plan order rank. Names and
//! arguments are lowercased and whitespace-collapsed when loaded.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate id `{id}` (first seen on line {first_line})")]
    DuplicateId {
        line: usize,
        id: String,
        first_line: usize,
    },
    #[error("corpus contains no records")]
    Empty,
}

/// Collapses runs of whitespace to a single space, trims, and lowercases.
pub fn normalize_phrase(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn has_reserved_char(s: &str) -> bool {
    s.contains(['(', ')', ','])
}

fn has_boundary_whitespace(s: &str) -> bool {
    s.trim() != s
}

/// One action, gold or extracted: a name plus its ordered arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionInstance {
    pub name: String,
    pub args: Vec<String>,
    /// Index of the sentence the action was annotated in, if known.
    #[serde(default)]
    pub sentence_index: Option<usize>,
}

impl ActionInstance {
    pub fn new<N, A, S>(name: N, args: A) -> Self
    where
        N: Into<String>,
        A: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
            sentence_index: None,
        }
    }

    pub fn with_sentence(mut self, index: usize) -> Self {
        self.sentence_index = Some(index);
        self
    }

    /// Lowercases and collapses whitespace in the name and every argument.
    pub fn normalized(&self) -> Self {
        Self {
            name: normalize_phrase(&self.name),
            args: self.args.iter().map(|a| normalize_phrase(a)).collect(),
            sentence_index: self.sentence_index,
        }
    }

    /// Checks the name/argument invariants. Returns the offending field on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.name.is_empty() {
            return Err(("name", "must not be empty".into()));
        }
        if has_reserved_char(&self.name) || has_boundary_whitespace(&self.name) {
            return Err((
                "name",
                format!(
                    "`{}` contains parentheses, commas or surrounding whitespace",
                    self.name
                ),
            ));
        }
        for arg in &self.args {
            if arg.is_empty() {
                return Err(("args", "arguments must not be empty".into()));
            }
            if has_reserved_char(arg) || has_boundary_whitespace(arg) {
                return Err((
                    "args",
                    format!("`{arg}` contains parentheses, commas or surrounding whitespace"),
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ActionInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Essential,
    Optional,
    Exclusive,
}

/// One unit of ground truth. Exclusive slots hold two or more alternatives,
/// the other kinds exactly one action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSlot {
    pub kind: SlotKind,
    pub members: Vec<ActionInstance>,
    pub order_rank: usize,
}

impl GoldSlot {
    pub fn essential(action: ActionInstance) -> Self {
        Self {
            kind: SlotKind::Essential,
            members: vec![action],
            order_rank: 0,
        }
    }

    pub fn optional(action: ActionInstance) -> Self {
        Self {
            kind: SlotKind::Optional,
            members: vec![action],
            order_rank: 0,
        }
    }

    pub fn exclusive(members: Vec<ActionInstance>) -> Self {
        Self {
            kind: SlotKind::Exclusive,
            members,
            order_rank: 0,
        }
    }

    /// The member shown in prompts and used for argument truth counts.
    pub fn canonical(&self) -> &ActionInstance {
        &self.members[0]
    }
}

/// Assigns contiguous order ranks following list position.
pub fn ranked(mut slots: Vec<GoldSlot>) -> Vec<GoldSlot> {
    for (rank, slot) in slots.iter_mut().enumerate() {
        slot.order_rank = rank;
    }
    slots
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedText {
    pub id: String,
    pub dataset: String,
    pub sentences: Vec<String>,
    pub gold: Vec<GoldSlot>,
}

impl AnnotatedText {
    /// Gold plan in order, one action per slot (first member for exclusive slots).
    pub fn canonical_plan(&self) -> Vec<ActionInstance> {
        let mut slots: Vec<&GoldSlot> = self.gold.iter().collect();
        slots.sort_by_key(|s| s.order_rank);
        slots.into_iter().map(|s| s.canonical().clone()).collect()
    }

    /// Checks every record-level invariant, reporting the offending field path.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.id.is_empty() {
            return Err(("id".into(), "must not be empty".into()));
        }
        if self.sentences.is_empty() {
            return Err((
                "sentences".into(),
                "at least one sentence is required".into(),
            ));
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err((format!("sentences[{i}]"), "sentence is blank".into()));
        }
        let mut ranks = HashSet::new();
        for (i, slot) in self.gold.iter().enumerate() {
            let exclusive = slot.kind == SlotKind::Exclusive;
            let count = slot.members.len();
            if count == 0 || (exclusive && count < 2) || (!exclusive && count != 1) {
                return Err((
                    format!("gold[{i}].members"),
                    format!("{:?} slot cannot have {count} member(s)", slot.kind),
                ));
            }
            if !ranks.insert(slot.order_rank) || slot.order_rank >= self.gold.len() {
                return Err((
                    format!("gold[{i}]"),
                    format!(
                        "order rank {} is duplicated or out of range",
                        slot.order_rank
                    ),
                ));
            }
            for (j, member) in slot.members.iter().enumerate() {
                if let Err((field, message)) = member.validate() {
                    return Err((format!("gold[{i}].members[{j}].{field}"), message));
                }
                if let Some(idx) = member.sentence_index {
                    if idx >= self.sentences.len() {
                        return Err((
                            format!("gold[{i}].members[{j}].sentence_index"),
                            format!(
                                "{idx} is out of range for {} sentences",
                                self.sentences.len()
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

// On-disk shapes. Slot order in the file is the plan order.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordRow {
    id: String,
    dataset: String,
    sentences: Vec<String>,
    gold: Vec<SlotRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotRow {
    kind: SlotKind,
    members: Vec<MemberRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberRow {
    name: String,
    args: Vec<String>,
    sentence_index: Option<usize>,
}

impl RecordRow {
    fn into_text(self) -> AnnotatedText {
        let gold = self
            .gold
            .into_iter()
            .enumerate()
            .map(|(rank, slot)| GoldSlot {
                kind: slot.kind,
                members: slot
                    .members
                    .into_iter()
                    .map(|m| {
                        ActionInstance {
                            name: m.name,
                            args: m.args,
                            sentence_index: m.sentence_index,
                        }
                        .normalized()
                    })
                    .collect(),
                order_rank: rank,
            })
            .collect();
        AnnotatedText {
            id: self.id,
            dataset: self.dataset,
            sentences: self.sentences,
            gold,
        }
    }

    fn from_text(text: &AnnotatedText) -> Self {
        let mut slots: Vec<&GoldSlot> = text.gold.iter().collect();
        slots.sort_by_key(|s| s.order_rank);
        RecordRow {
            id: text.id.clone(),
            dataset: text.dataset.clone(),
            sentences: text.sentences.clone(),
            gold: slots
                .into_iter()
                .map(|s| SlotRow {
                    kind: s.kind,
                    members: s
                        .members
                        .iter()
                        .map(|m| MemberRow {
                            name: m.name.clone(),
                            args: m.args.clone(),
                            sentence_index: m.sentence_index,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses corpus records from JSON Lines text. Blank lines are ignored.
///
/// A non-empty `dataset_tag` must match every record's `dataset` field
/// (ASCII case-insensitive).
pub fn parse_corpus(input: &str, dataset_tag: &str) -> Result<Vec<AnnotatedText>, CorpusError> {
    let mut texts = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(raw);
        let row: RecordRow = serde_path_to_error::deserialize(&mut de).map_err(|err| {
            let path = err.path().to_string();
            CorpusError::Schema {
                line,
                field: if path == "." { "<record>".into() } else { path },
                message: err.into_inner().to_string(),
            }
        })?;
        if !dataset_tag.is_empty() && !row.dataset.eq_ignore_ascii_case(dataset_tag) {
            return Err(CorpusError::Schema {
                line,
                field: "dataset".into(),
                message: format!("expected `{dataset_tag}`, found `{}`", row.dataset),
            });
        }
        let text = row.into_text();
        text.validate()
            .map_err(|(field, message)| CorpusError::Schema {
                line,
                field,
                message,
            })?;
        if let Some(&first_line) = seen.get(&text.id) {
            return Err(CorpusError::DuplicateId {
                line,
                id: text.id,
                first_line,
            });
        }
        seen.insert(text.id.clone(), line);
        texts.push(text);
    }
    if texts.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(texts)
}

pub fn load_corpus(path: &Path, dataset_tag: &str) -> Result<Vec<AnnotatedText>, CorpusError> {
    let input = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&input, dataset_tag)
}

/// Serializes a corpus in the canonical line format.
pub fn corpus_to_string(corpus: &[AnnotatedText]) -> String {
    let mut out = String::new();
    for text in corpus {
        let row = RecordRow::from_text(text);
        out.push_str(&serde_json::to_string(&row).expect("corpus rows always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, corpus: &[AnnotatedText]) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(corpus_to_string(corpus).as_bytes())?;
    file.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub labeled_texts: usize,
    /// Percentage of word tokens belonging to gold action names.
    pub action_name_rate: f64,
    /// Percentage of word tokens belonging to gold action arguments.
    pub action_argument_rate: f64,
    pub total_words: usize,
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Word-level dataset statistics. Every exclusive member counts toward the
/// name and argument numerators.
pub fn compute_stats(corpus: &[AnnotatedText]) -> Result<DatasetStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut total_words = 0usize;
    let mut name_words = 0usize;
    let mut arg_words = 0usize;
    for text in corpus {
        total_words += text.sentences.iter().map(|s| word_count(s)).sum::<usize>();
        for member in text.gold.iter().flat_map(|s| &s.members) {
            name_words += word_count(&member.name);
            arg_words += member.args.iter().map(|a| word_count(a)).sum::<usize>();
        }
    }
    let rate = |n: usize| {
        if total_words == 0 {
            0.0
        } else {
            (100.0 * n as f64 / total_words as f64).min(100.0)
        }
    };
    Ok(DatasetStats {
        labeled_texts: corpus.len(),
        action_name_rate: rate(name_words),
        action_argument_rate: rate(arg_words),
        total_words,
    })
}
