//! Functional plan notation: `name(arg, arg) name(arg)`.
//!
//! The parser is built for raw model completions. It never fails; anything
//! that cannot begin an action is skipped and reported, and parsing ends at
//! the first line consisting of the `TEXT` tag.

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_phrase, ActionInstance};

const STOP_TAG: &str = "TEXT";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<ActionInstance>,
}

impl Plan {
    pub fn new(actions: Vec<ActionInstance>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// True when every action survives a render/parse round trip: names are
    /// single lowercase tokens, arguments are lowercase and whitespace-collapsed.
    pub fn is_canonical(&self) -> bool {
        self.actions.iter().all(|a| {
            a.validate().is_ok()
                && !a.name.contains(char::is_whitespace)
                && normalize_phrase(&a.name) == a.name
                && a.args.iter().all(|arg| normalize_phrase(arg) == *arg)
        })
    }
}

impl From<Vec<ActionInstance>> for Plan {
    fn from(actions: Vec<ActionInstance>) -> Self {
        Self { actions }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSpan {
    pub start: usize,
    pub end: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    /// Byte ranges of the input that were not part of any action.
    pub skipped_spans: Vec<SkippedSpan>,
    /// The input ended (or hit a nested parenthesis) inside an action.
    pub truncated: bool,
}

impl ParseDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.skipped_spans.is_empty() && !self.truncated
    }

    fn skip(&mut self, start: usize, end: usize, reason: &str) {
        if start >= end {
            return;
        }
        if let Some(last) = self.skipped_spans.last_mut() {
            if last.end == start {
                last.end = end;
                return;
            }
        }
        self.skipped_spans.push(SkippedSpan {
            start,
            end,
            reason: reason.to_string(),
        });
    }
}

/// Byte offset of the first line whose trimmed content is the `TEXT` tag.
fn stop_offset(text: &str) -> usize {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim() == STOP_TAG {
            return offset;
        }
        offset += line.len();
    }
    text.len()
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '(' | ')' | ',')
}

fn is_name_char(c: char) -> bool {
    !c.is_whitespace() && !is_delimiter(c)
}

pub fn parse_plan(text: &str) -> (Plan, ParseDiagnostics) {
    let src = &text[..stop_offset(text)];
    let mut actions = Vec::new();
    let mut diag = ParseDiagnostics::default();
    let mut pos = 0;

    while let Some(c) = src[pos..].chars().next() {
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        if is_delimiter(c) {
            diag.skip(pos, pos + 1, "stray delimiter");
            pos += 1;
            continue;
        }

        let name_end = src[pos..]
            .find(|c: char| !is_name_char(c))
            .map_or(src.len(), |i| pos + i);
        // Horizontal space is tolerated between a name and its "(".
        let open = src[name_end..]
            .find(|c: char| c != ' ' && c != '\t')
            .map(|i| name_end + i)
            .filter(|&i| src[i..].starts_with('('));
        let Some(open) = open else {
            diag.skip(pos, name_end, "not an action");
            pos = name_end;
            continue;
        };

        let body_start = open + 1;
        let close = match src[body_start..].find(['(', ')']) {
            Some(i) if src[body_start + i..].starts_with(')') => body_start + i,
            Some(_) => {
                diag.skip(pos, src.len(), "nested parenthesis");
                diag.truncated = true;
                break;
            }
            None => {
                diag.skip(pos, src.len(), "unterminated action");
                diag.truncated = true;
                break;
            }
        };

        let body = &src[body_start..close];
        let args: Vec<String> = if body.trim().is_empty() {
            Vec::new()
        } else {
            body.split(',').map(normalize_phrase).collect()
        };
        if args.iter().any(String::is_empty) {
            diag.skip(pos, close + 1, "empty argument");
        } else {
            actions.push(ActionInstance {
                name: normalize_phrase(&src[pos..name_end]),
                args,
                sentence_index: None,
            });
        }
        pos = close + 1;
    }

    (Plan { actions }, diag)
}

/// Canonical layout: actions separated by single spaces, `name(a, b)`.
pub fn render_plan(plan: &Plan) -> String {
    render_actions(&plan.actions)
}

pub fn render_actions(actions: &[ActionInstance]) -> String {
    actions
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}
