//! Precision, recall and F1 over essential, exclusive and optional gold slots.
//!
//! Every gold slot is one unit of truth. Extracted actions are matched to
//! slots greedily in extraction order: an action consumes the first
//! unconsumed slot that has a member with the same name, and a slot is
//! consumed at most once. An exclusive slot is satisfied by any one of its
//! alternatives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedText, GoldSlot, SlotKind};
use crate::notation::Plan;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("nothing to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub total_right: usize,
    pub total_tagged: usize,
    pub total_truth: usize,
}

impl MatchCounts {
    pub fn new(total_right: usize, total_tagged: usize, total_truth: usize) -> Self {
        Self {
            total_right,
            total_tagged,
            total_truth,
        }
    }

    pub fn f1(&self) -> Metrics {
        f1_from_counts(*self)
    }
}

impl std::ops::Add for MatchCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            total_right: self.total_right + rhs.total_right,
            total_tagged: self.total_tagged + rhs.total_tagged,
            total_truth: self.total_truth + rhs.total_truth,
        }
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Zero denominators yield zero rather than NaN.
pub fn f1_from_counts(counts: MatchCounts) -> Metrics {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(counts.total_right, counts.total_tagged);
    let recall = ratio(counts.total_right, counts.total_truth);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Drop unmatched optional slots from the truth counts.
    pub optional_lenient: bool,
}

/// Which gold slot and member an extracted action consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotMatch {
    pub slot: usize,
    pub member: usize,
}

/// Greedy assignment; entry `i` describes extracted action `i`.
pub fn assign(gold: &[GoldSlot], extracted: &Plan) -> Vec<Option<SlotMatch>> {
    let mut consumed = vec![false; gold.len()];
    extracted
        .actions
        .iter()
        .map(|action| {
            let found = gold.iter().enumerate().find_map(|(slot, g)| {
                if consumed[slot] {
                    return None;
                }
                g.members
                    .iter()
                    .position(|m| m.name == action.name)
                    .map(|member| SlotMatch { slot, member })
            });
            if let Some(m) = found {
                consumed[m.slot] = true;
            }
            found
        })
        .collect()
}

fn counted_slots(
    gold: &[GoldSlot],
    matches: &[Option<SlotMatch>],
    options: ScoreOptions,
) -> Vec<bool> {
    let mut matched = vec![false; gold.len()];
    for m in matches.iter().flatten() {
        matched[m.slot] = true;
    }
    gold.iter()
        .zip(matched)
        .map(|(slot, hit)| hit || !(options.optional_lenient && slot.kind == SlotKind::Optional))
        .collect()
}

pub fn match_names(gold: &[GoldSlot], extracted: &Plan) -> MatchCounts {
    match_names_with(gold, extracted, ScoreOptions::default())
}

pub fn match_names_with(gold: &[GoldSlot], extracted: &Plan, options: ScoreOptions) -> MatchCounts {
    let matches = assign(gold, extracted);
    let counted = counted_slots(gold, &matches, options);
    MatchCounts {
        total_right: matches.iter().flatten().count(),
        total_tagged: extracted.actions.len(),
        total_truth: counted.iter().filter(|&&c| c).count(),
    }
}

pub fn match_args(gold: &[GoldSlot], extracted: &Plan) -> MatchCounts {
    match_args_with(gold, extracted, ScoreOptions::default())
}

/// Argument counts. Truth per slot is the canonical (first) member's argument
/// count; an extracted argument is right when it matches an unused argument
/// of the member its action consumed. Right arguments per slot are capped at
/// that slot's truth count.
pub fn match_args_with(gold: &[GoldSlot], extracted: &Plan, options: ScoreOptions) -> MatchCounts {
    let matches = assign(gold, extracted);
    let counted = counted_slots(gold, &matches, options);

    let total_truth = gold
        .iter()
        .zip(&counted)
        .filter(|(_, &c)| c)
        .map(|(slot, _)| slot.canonical().args.len())
        .sum();
    let total_tagged = extracted.actions.iter().map(|a| a.args.len()).sum();

    let mut total_right = 0;
    for (action, m) in extracted.actions.iter().zip(&matches) {
        let Some(m) = m else { continue };
        let slot = &gold[m.slot];
        let mut available: Vec<&str> = slot.members[m.member]
            .args
            .iter()
            .map(String::as_str)
            .collect();
        let mut right = 0;
        for arg in &action.args {
            if let Some(i) = available.iter().position(|g| *g == arg) {
                available.swap_remove(i);
                right += 1;
            }
        }
        total_right += right.min(slot.canonical().args.len());
    }

    MatchCounts {
        total_right,
        total_tagged,
        total_truth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub name_counts: MatchCounts,
    pub arg_counts: MatchCounts,
    pub name_precision: f64,
    pub name_recall: f64,
    pub name_f1: f64,
    pub arg_precision: f64,
    pub arg_recall: f64,
    pub arg_f1: f64,
}

impl ScoreReport {
    pub fn from_counts(name_counts: MatchCounts, arg_counts: MatchCounts) -> Self {
        let n = f1_from_counts(name_counts);
        let a = f1_from_counts(arg_counts);
        Self {
            name_counts,
            arg_counts,
            name_precision: n.precision,
            name_recall: n.recall,
            name_f1: n.f1,
            arg_precision: a.precision,
            arg_recall: a.recall,
            arg_f1: a.f1,
        }
    }

    pub fn flat(&self) -> FlatScoreReport {
        FlatScoreReport {
            name_total_right: self.name_counts.total_right,
            name_total_tagged: self.name_counts.total_tagged,
            name_total_truth: self.name_counts.total_truth,
            arg_total_right: self.arg_counts.total_right,
            arg_total_tagged: self.arg_counts.total_tagged,
            arg_total_truth: self.arg_counts.total_truth,
            name_precision: self.name_precision,
            name_recall: self.name_recall,
            name_f1: self.name_f1,
            arg_precision: self.arg_precision,
            arg_recall: self.arg_recall,
            arg_f1: self.arg_f1,
        }
    }
}

/// Twelve-field serialized form of a [`ScoreReport`] used in report files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatScoreReport {
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

impl From<FlatScoreReport> for ScoreReport {
    fn from(f: FlatScoreReport) -> Self {
        ScoreReport::from_counts(
            MatchCounts::new(f.name_total_right, f.name_total_tagged, f.name_total_truth),
            MatchCounts::new(f.arg_total_right, f.arg_total_tagged, f.arg_total_truth),
        )
    }
}

pub fn score_text(text: &AnnotatedText, plan: &Plan, options: ScoreOptions) -> ScoreReport {
    ScoreReport::from_counts(
        match_names_with(&text.gold, plan, options),
        match_args_with(&text.gold, plan, options),
    )
}

/// Micro-averaged score: counts are summed over all texts before the ratios.
pub fn score_corpus<'a, I>(pairs: I, options: ScoreOptions) -> Result<ScoreReport, ScoreError>
where
    I: IntoIterator<Item = (&'a AnnotatedText, &'a Plan)>,
{
    let mut names = MatchCounts::default();
    let mut args = MatchCounts::default();
    let mut seen = 0usize;
    for (text, plan) in pairs {
        names = names + match_names_with(&text.gold, plan, options);
        args = args + match_args_with(&text.gold, plan, options);
        seen += 1;
    }
    if seen == 0 {
        return Err(ScoreError::Empty);
    }
    Ok(ScoreReport::from_counts(names, args))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ranked, ActionInstance};

    fn act(name: &str, args: &[&str]) -> ActionInstance {
        ActionInstance::new(name, args.iter().copied())
    }

    fn plan(actions: &[(&str, &[&str])]) -> Plan {
        Plan::new(actions.iter().map(|(n, a)| act(n, a)).collect())
    }

    fn worked_gold() -> Vec<GoldSlot> {
        ranked(vec![
            GoldSlot::essential(act("a", &[])),
            GoldSlot::exclusive(vec![act("b", &[]), act("c", &[])]),
            GoldSlot::optional(act("d", &[])),
        ])
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn worked_example() {
        let counts = match_names(&worked_gold(), &plan(&[("a", &[]), ("c", &[])]));
        assert_eq!(counts, MatchCounts::new(2, 2, 3));
        let m = f1_from_counts(counts);
        assert!(close(m.precision, 1.0));
        assert!(close(m.recall, 2.0 / 3.0));
        assert!(close(m.f1, 0.8));
    }

    #[test]
    fn perfect_extraction() {
        let counts = match_names(&worked_gold(), &plan(&[("a", &[]), ("b", &[]), ("d", &[])]));
        assert_eq!(counts, MatchCounts::new(3, 3, 3));
        assert!(close(counts.f1().f1, 1.0));
    }

    #[test]
    fn duplicates_consume_once() {
        let gold = ranked(vec![GoldSlot::essential(act("a", &[]))]);
        let counts = match_names(&gold, &plan(&[("a", &[]), ("a", &[])]));
        assert_eq!(counts, MatchCounts::new(1, 2, 1));
        let m = counts.f1();
        assert!(close(m.precision, 0.5));
        assert!(close(m.recall, 1.0));
    }

    #[test]
    fn exclusive_counts_once_even_if_both_extracted() {
        let counts = match_names(&worked_gold(), &plan(&[("b", &[]), ("c", &[])]));
        assert_eq!(counts, MatchCounts::new(1, 2, 3));
    }

    #[test]
    fn optional_lenient_drops_missed_optionals() {
        let options = ScoreOptions {
            optional_lenient: true,
        };
        let counts = match_names_with(&worked_gold(), &plan(&[("a", &[]), ("c", &[])]), options);
        assert_eq!(counts, MatchCounts::new(2, 2, 2));
        let counts = match_names_with(&worked_gold(), &plan(&[("d", &[])]), options);
        assert_eq!(counts, MatchCounts::new(1, 1, 3));
    }

    #[test]
    fn partial_arguments() {
        let gold = ranked(vec![GoldSlot::essential(act("open", &["menu", "file"]))]);
        let counts = match_args(&gold, &plan(&[("open", &["menu"])]));
        assert_eq!(counts, MatchCounts::new(1, 1, 2));
        let m = counts.f1();
        assert!(close(m.precision, 1.0));
        assert!(close(m.recall, 0.5));
    }

    #[test]
    fn unmatched_action_args_are_tagged_only() {
        let gold = ranked(vec![GoldSlot::essential(act("open", &["menu"]))]);
        let counts = match_args(&gold, &plan(&[("close", &["menu"])]));
        assert_eq!(counts, MatchCounts::new(0, 1, 1));
    }

    #[test]
    fn exclusive_args_use_matched_member() {
        let gold = ranked(vec![GoldSlot::exclusive(vec![
            act("b", &["x"]),
            act("c", &["y"]),
        ])]);
        let counts = match_args(&gold, &plan(&[("c", &["y"])]));
        assert_eq!(counts, MatchCounts::new(1, 1, 1));
        let counts = match_args(&gold, &plan(&[("c", &["x"])]));
        assert_eq!(counts, MatchCounts::new(0, 1, 1));
    }

    #[test]
    fn exclusive_args_capped_by_canonical_truth() {
        let gold = ranked(vec![GoldSlot::exclusive(vec![
            act("b", &["x"]),
            act("c", &["y", "z"]),
        ])]);
        let counts = match_args(&gold, &plan(&[("c", &["y", "z"])]));
        assert_eq!(counts, MatchCounts::new(1, 2, 1));
    }

    #[test]
    fn argument_matching_is_a_multiset() {
        let gold = ranked(vec![GoldSlot::essential(act(
            "mix",
            &["egg", "egg", "flour"],
        ))]);
        let counts = match_args(&gold, &plan(&[("mix", &["flour", "egg", "egg", "egg"])]));
        assert_eq!(counts, MatchCounts::new(3, 4, 3));
    }

    #[test]
    fn f1_arithmetic() {
        let m = f1_from_counts(MatchCounts::new(2, 2, 3));
        assert!(close(m.precision, 1.0) && close(m.recall, 2.0 / 3.0) && close(m.f1, 0.8));
        let m = f1_from_counts(MatchCounts::new(0, 0, 5));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = f1_from_counts(MatchCounts::new(3, 4, 4));
        assert!(close(m.precision, 0.75) && close(m.recall, 0.75) && close(m.f1, 0.75));
    }

    fn text_with(id: &str, gold: Vec<GoldSlot>) -> AnnotatedText {
        AnnotatedText {
            id: id.into(),
            dataset: "WHS".into(),
            sentences: vec!["s".into()],
            gold: ranked(gold),
        }
    }

    #[test]
    fn corpus_scores_are_micro_averaged() {
        // (2,2,3) and (0,1,2) sum to (2,3,5).
        let t1 = text_with(
            "1",
            vec![
                GoldSlot::essential(act("a", &[])),
                GoldSlot::essential(act("b", &[])),
                GoldSlot::essential(act("c", &[])),
            ],
        );
        let p1 = plan(&[("a", &[]), ("b", &[])]);
        let t2 = text_with(
            "2",
            vec![
                GoldSlot::essential(act("a", &[])),
                GoldSlot::essential(act("b", &[])),
            ],
        );
        let p2 = plan(&[("z", &[])]);
        let report = score_corpus([(&t1, &p1), (&t2, &p2)], ScoreOptions::default()).unwrap();
        assert_eq!(report.name_counts, MatchCounts::new(2, 3, 5));
        assert!(close(report.name_precision, 2.0 / 3.0));
        assert!(close(report.name_recall, 0.4));
        assert!(close(report.name_f1, 0.5));
    }

    #[test]
    fn corpus_of_perfect_texts() {
        let t1 = text_with("1", vec![GoldSlot::essential(act("a", &[]))]);
        let t2 = text_with("2", vec![GoldSlot::essential(act("b", &[]))]);
        let p1 = plan(&[("a", &[])]);
        let p2 = plan(&[("b", &[])]);
        let report = score_corpus([(&t1, &p1), (&t2, &p2)], ScoreOptions::default()).unwrap();
        assert!(close(report.name_f1, 1.0));
        let single = score_corpus([(&t1, &p1)], ScoreOptions::default()).unwrap();
        assert_eq!(single, score_text(&t1, &p1, ScoreOptions::default()));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let pairs: Vec<(&AnnotatedText, &Plan)> = Vec::new();
        assert_eq!(
            score_corpus(pairs, ScoreOptions::default()),
            Err(ScoreError::Empty)
        );
    }

    #[test]
    fn flat_report_round_trips() {
        let report = ScoreReport::from_counts(MatchCounts::new(2, 2, 3), MatchCounts::new(1, 4, 5));
        let json = serde_json::to_value(report.flat()).unwrap();
        assert_eq!(json.as_object().unwrap().len(), 12);
        assert_eq!(ScoreReport::from(report.flat()), report);
    }
}
