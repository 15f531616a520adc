//! Few-shot example selection and TEXT/ACTIONS prompt rendering.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedText, SlotKind};
use crate::notation::render_actions;

/// Request size limit of the completion endpoint, in tokens.
pub const CONTEXT_LIMIT: usize = 2048;
/// Tokens held back for the completion itself.
pub const COMPLETION_RESERVE: usize = 100;
/// Per-text sentence cap used for the long-text datasets.
pub const LONG_TEXT_SENTENCE_CAP: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("shot count must be between 1 and 4, got {0}")]
    InvalidShots(usize),
    #[error(
        "corpus too small for {shots}-shot selection: need {required} records, have {available}"
    )]
    CorpusTooSmall {
        shots: usize,
        required: usize,
        available: usize,
    },
    #[error("test text `{0}` is not in the corpus")]
    UnknownTest(String),
    #[error("at least one shot is required")]
    NoShots,
    #[error("test text `{0}` is also used as a shot")]
    TestAmongShots(String),
    #[error(
        "prompt needs ~{estimate} tokens but only {available} fit alongside the completion; use fewer shots or a smaller sentence cap"
    )]
    OverBudget { estimate: usize, available: usize },
}

/// Default sentence cap for a dataset tag: none for WHS, ten for CT and WHG.
pub fn default_sentence_cap(dataset: &str) -> Option<usize> {
    match dataset.to_ascii_uppercase().as_str() {
        "CT" | "WHG" => Some(LONG_TEXT_SENTENCE_CAP),
        _ => None,
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotStrategy {
    shots: usize,
    pub seed: u64,
}

impl ShotStrategy {
    pub fn new(shots: usize, seed: u64) -> Result<Self, PromptError> {
        if !(1..=4).contains(&shots) {
            return Err(PromptError::InvalidShots(shots));
        }
        Ok(Self { shots, seed })
    }

    pub fn shots(&self) -> usize {
        self.shots
    }
}

fn proportion(text: &AnnotatedText, kinds: &[SlotKind]) -> f64 {
    if text.gold.is_empty() {
        return 0.0;
    }
    let hits = text.gold.iter().filter(|s| kinds.contains(&s.kind)).count();
    hits as f64 / text.gold.len() as f64
}

/// Candidates ordered by descending proportion of the given slot kinds, ties by id.
fn ranked_by<'a>(candidates: &[&'a AnnotatedText], kinds: &[SlotKind]) -> Vec<&'a AnnotatedText> {
    let mut scored: Vec<(f64, &AnnotatedText)> = candidates
        .iter()
        .map(|t| (proportion(t, kinds), *t))
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.id.cmp(&b.1.id))
    });
    scored.into_iter().map(|(_, t)| t).collect()
}

/// Picks few-shot examples from `corpus`, never returning the text `exclude`.
///
/// * 1 shot: one random record.
/// * 2 shots: the two records with the largest share of optional and exclusive slots.
/// * 3 shots: the 2-shot picks plus the remaining record with the largest share of
///   essential slots.
/// * 4 shots: the 3-shot picks plus one random record.
///
/// Random picks walk one seeded permutation of the whole corpus, so every test
/// text sees the same random example unless it is that example.
pub fn select_shots<'a>(
    corpus: &'a [AnnotatedText],
    strategy: &ShotStrategy,
    exclude: &str,
) -> Result<Vec<&'a AnnotatedText>, PromptError> {
    let shots = strategy.shots;
    if corpus.len() < shots + 1 {
        return Err(PromptError::CorpusTooSmall {
            shots,
            required: shots + 1,
            available: corpus.len(),
        });
    }
    if !corpus.iter().any(|t| t.id == exclude) {
        return Err(PromptError::UnknownTest(exclude.to_string()));
    }

    let candidates: Vec<&AnnotatedText> = corpus.iter().filter(|t| t.id != exclude).collect();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(strategy.seed));

    let mut chosen: Vec<&AnnotatedText> = Vec::with_capacity(shots);
    let take_random = |chosen: &mut Vec<&'a AnnotatedText>| {
        let pick = order
            .iter()
            .map(|&i| &corpus[i])
            .find(|t| t.id != exclude && !chosen.iter().any(|c| c.id == t.id));
        chosen.extend(pick);
    };

    if shots == 1 {
        take_random(&mut chosen);
        return Ok(chosen);
    }

    let mixed = ranked_by(&candidates, &[SlotKind::Optional, SlotKind::Exclusive]);
    chosen.extend(mixed.into_iter().take(2));
    if shots >= 3 {
        let essential = ranked_by(&candidates, &[SlotKind::Essential]);
        let pick = essential
            .into_iter()
            .find(|t| !chosen.iter().any(|c| c.id == t.id));
        chosen.extend(pick);
    }
    if shots == 4 {
        take_random(&mut chosen);
    }
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenBudget {
    pub context_limit: usize,
    pub completion_reserve: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            context_limit: CONTEXT_LIMIT,
            completion_reserve: COMPLETION_RESERVE,
        }
    }
}

impl TokenBudget {
    pub fn prompt_tokens(&self) -> usize {
        self.context_limit.saturating_sub(self.completion_reserve)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub rendered: String,
    pub example_ids: Vec<String>,
    pub test_id: String,
    pub token_estimate: usize,
    pub truncation_applied: bool,
}

fn capped_text(text: &AnnotatedText, cap: Option<usize>) -> (String, bool) {
    let keep = cap.map_or(text.sentences.len(), |c| c.min(text.sentences.len()));
    (
        text.sentences[..keep].join(" "),
        keep < text.sentences.len(),
    )
}

/// Renders the prompt with the default 2048-token limit and 100-token reserve.
pub fn render_prompt(
    shots: &[&AnnotatedText],
    test: &AnnotatedText,
    sentence_cap: Option<usize>,
) -> Result<PromptBundle, PromptError> {
    render_prompt_with_budget(shots, test, sentence_cap, TokenBudget::default())
}

pub fn render_prompt_with_budget(
    shots: &[&AnnotatedText],
    test: &AnnotatedText,
    sentence_cap: Option<usize>,
    budget: TokenBudget,
) -> Result<PromptBundle, PromptError> {
    if shots.is_empty() {
        return Err(PromptError::NoShots);
    }
    if shots.iter().any(|s| s.id == test.id) {
        return Err(PromptError::TestAmongShots(test.id.clone()));
    }

    let mut rendered = String::new();
    let mut truncated = false;
    for shot in shots {
        let (body, cut) = capped_text(shot, sentence_cap);
        truncated |= cut;
        rendered.push_str("TEXT\n\n");
        rendered.push_str(&body);
        rendered.push_str("\n\nACTIONS\n\n");
        rendered.push_str(&render_actions(&shot.canonical_plan()));
        rendered.push_str("\n\n");
    }
    let (body, cut) = capped_text(test, sentence_cap);
    truncated |= cut;
    rendered.push_str("TEXT\n\n");
    rendered.push_str(&body);
    rendered.push_str("\n\nACTIONS\n");

    let token_estimate = estimate_tokens(&rendered);
    if token_estimate > budget.prompt_tokens() {
        return Err(PromptError::OverBudget {
            estimate: token_estimate,
            available: budget.prompt_tokens(),
        });
    }
    Ok(PromptBundle {
        rendered,
        example_ids: shots.iter().map(|s| s.id.clone()).collect(),
        test_id: test.id.clone(),
        token_estimate,
        truncation_applied: truncated,
    })
}

/// Selects shots for `test` (leave-one-out) and renders its prompt.
pub fn build_prompt(
    corpus: &[AnnotatedText],
    strategy: &ShotStrategy,
    test: &AnnotatedText,
    sentence_cap: Option<usize>,
    budget: TokenBudget,
) -> Result<PromptBundle, PromptError> {
    let shots = select_shots(corpus, strategy, &test.id)?;
    render_prompt_with_budget(&shots, test, sentence_cap, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ranked, ActionInstance, GoldSlot};

    fn text(id: &str, sentences: &[&str], gold: Vec<GoldSlot>) -> AnnotatedText {
        AnnotatedText {
            id: id.into(),
            dataset: "WHS".into(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
            gold: ranked(gold),
        }
    }

    fn ess(name: &str) -> GoldSlot {
        GoldSlot::essential(ActionInstance::new(name, ["x"]))
    }

    fn opt(name: &str) -> GoldSlot {
        GoldSlot::optional(ActionInstance::new(name, ["x"]))
    }

    /// A text with `mixed` optional slots out of `total` slots.
    fn with_mix(id: &str, mixed: usize, total: usize) -> AnnotatedText {
        let gold = (0..total)
            .map(|i| if i < mixed { opt("o") } else { ess("e") })
            .collect();
        text(id, &["s."], gold)
    }

    fn ids(texts: &[&AnnotatedText]) -> Vec<String> {
        texts.iter().map(|t| t.id.clone()).collect()
    }

    #[test]
    fn estimate_tokens_is_ceiling_of_quarter() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        assert_eq!(estimate_tokens("éééé"), 1);
    }

    #[test]
    fn two_shot_takes_largest_mixed_share() {
        // a: 0.5, b: 0.2, c: 0.4; test text t has none.
        let corpus = vec![
            with_mix("a", 1, 2),
            with_mix("b", 1, 5),
            with_mix("c", 2, 5),
            with_mix("t", 0, 1),
        ];
        let picked = select_shots(&corpus, &ShotStrategy::new(2, 0).unwrap(), "t").unwrap();
        assert_eq!(ids(&picked), vec!["a", "c"]);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let corpus = vec![
            with_mix("b", 1, 2),
            with_mix("a", 1, 2),
            with_mix("t", 0, 1),
        ];
        let picked = select_shots(&corpus, &ShotStrategy::new(2, 9).unwrap(), "t").unwrap();
        assert_eq!(ids(&picked), vec!["a", "b"]);
    }

    #[test]
    fn excluded_text_is_never_selected() {
        let corpus = vec![
            with_mix("a", 1, 1),
            with_mix("b", 1, 2),
            with_mix("c", 0, 2),
        ];
        let picked = select_shots(&corpus, &ShotStrategy::new(2, 0).unwrap(), "a").unwrap();
        assert_eq!(ids(&picked), vec!["b", "c"]);
    }

    #[test]
    fn three_shot_adds_most_essential() {
        let corpus = vec![
            with_mix("a", 2, 2),
            with_mix("b", 1, 2),
            with_mix("c", 1, 4),
            with_mix("d", 0, 3),
            with_mix("t", 0, 1),
        ];
        let picked = select_shots(&corpus, &ShotStrategy::new(3, 0).unwrap(), "t").unwrap();
        assert_eq!(ids(&picked), vec!["a", "b", "d"]);
    }

    #[test]
    fn one_shot_is_deterministic_per_seed() {
        let corpus: Vec<_> = (0..8).map(|i| with_mix(&format!("t{i}"), 0, 1)).collect();
        let strategy = ShotStrategy::new(1, 42).unwrap();
        let first = ids(&select_shots(&corpus, &strategy, "t0").unwrap());
        for _ in 0..5 {
            assert_eq!(ids(&select_shots(&corpus, &strategy, "t0").unwrap()), first);
        }
        assert_eq!(first.len(), 1);
        assert_ne!(first[0], "t0");
    }

    #[test]
    fn four_shot_is_three_shot_plus_one_distinct() {
        let corpus: Vec<_> = (0..6)
            .map(|i| with_mix(&format!("t{i}"), i % 3, 3))
            .collect();
        for seed in 0..20 {
            let three = select_shots(&corpus, &ShotStrategy::new(3, seed).unwrap(), "t5").unwrap();
            let four = select_shots(&corpus, &ShotStrategy::new(4, seed).unwrap(), "t5").unwrap();
            assert_eq!(ids(&four[..3]), ids(&three));
            assert!(!ids(&three).contains(&four[3].id));
            assert_ne!(four[3].id, "t5");
        }
    }

    #[test]
    fn too_small_corpus_reports_counts() {
        let corpus = vec![with_mix("a", 0, 1), with_mix("b", 0, 1)];
        let err = select_shots(&corpus, &ShotStrategy::new(2, 0).unwrap(), "a").unwrap_err();
        assert_eq!(
            err,
            PromptError::CorpusTooSmall {
                shots: 2,
                required: 3,
                available: 2
            }
        );
    }

    #[test]
    fn invalid_shot_counts() {
        assert_eq!(ShotStrategy::new(0, 0), Err(PromptError::InvalidShots(0)));
        assert_eq!(ShotStrategy::new(5, 0), Err(PromptError::InvalidShots(5)));
    }

    #[test]
    fn single_shot_layout_is_exact() {
        let shot = text(
            "s",
            &["Open the menu."],
            vec![GoldSlot::essential(ActionInstance::new("open", ["menu"]))],
        );
        let test = text("t", &["Close the lid."], vec![]);
        let bundle = render_prompt(&[&shot], &test, None).unwrap();
        assert_eq!(
            bundle.rendered,
            "TEXT\n\nOpen the menu.\n\nACTIONS\n\nopen(menu)\n\nTEXT\n\nClose the lid.\n\nACTIONS\n"
        );
        assert_eq!(bundle.example_ids, vec!["s"]);
        assert_eq!(bundle.test_id, "t");
        assert!(!bundle.truncation_applied);
        assert_eq!(bundle.token_estimate, estimate_tokens(&bundle.rendered));
    }

    #[test]
    fn exclusive_slots_show_first_member() {
        let shot = text(
            "s",
            &["Pick one."],
            vec![
                GoldSlot::exclusive(vec![
                    ActionInstance::new("b", ["x"]),
                    ActionInstance::new("c", ["y"]),
                ]),
                opt("d"),
            ],
        );
        let test = text("t", &["Go."], vec![]);
        let bundle = render_prompt(&[&shot], &test, None).unwrap();
        assert!(bundle.rendered.contains("\n\nb(x) d(x)\n\n"));
    }

    #[test]
    fn sentence_cap_truncates() {
        let sentences: Vec<String> = (0..12).map(|i| format!("S{i}.")).collect();
        let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
        let shot = text("s", &refs, vec![ess("a")]);
        let test = text("t", &["Go."], vec![]);
        let bundle = render_prompt(&[&shot], &test, Some(10)).unwrap();
        assert!(bundle.truncation_applied);
        assert!(bundle.rendered.contains("S9."));
        assert!(!bundle.rendered.contains("S10."));
        let uncapped = render_prompt(&[&shot], &test, None).unwrap();
        assert!(!uncapped.truncation_applied);
    }

    #[test]
    fn empty_shots_and_test_overlap_are_errors() {
        let t = text("t", &["Go."], vec![]);
        assert_eq!(render_prompt(&[], &t, None), Err(PromptError::NoShots));
        assert_eq!(
            render_prompt(&[&t], &t, None),
            Err(PromptError::TestAmongShots("t".into()))
        );
    }

    #[test]
    fn over_budget_is_rejected() {
        let long = "word ".repeat(2000);
        let shot = text("s", &[long.as_str()], vec![ess("a")]);
        let test = text("t", &["Go."], vec![]);
        let err = render_prompt(&[&shot], &test, None).unwrap_err();
        assert!(matches!(
            err,
            PromptError::OverBudget {
                available: 1948,
                ..
            }
        ));
        assert!(err.to_string().contains("fewer shots"));
    }

    #[test]
    fn default_caps() {
        assert_eq!(default_sentence_cap("WHS"), None);
        assert_eq!(default_sentence_cap("ct"), Some(10));
        assert_eq!(default_sentence_cap("WHG"), Some(10));
        assert_eq!(default_sentence_cap("custom"), None);
    }
}
